//! Restriction tables: which impact cells must be positive, negative, or
//! (near-)zero for a rotation to be accepted.
//!
//! A table lists one row per restricted variable. `cells` gives the pattern
//! against the 2m structural shock columns; `other` applies to every
//! remaining column. Variables not listed are unrestricted everywhere. The
//! canonical pattern (high-frequency surprises respond with the MP/CBI signs
//! to their own region's shocks and zero across regions and to everything
//! else) is available from [`RestrictionTable::paper_default`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IdentError;
use crate::model::ModelSpec;

/// One cell of the restriction pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Restriction {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "~")]
    Unrestricted,
}

fn default_unrestricted() -> Restriction {
    Restriction::Unrestricted
}

/// Restrictions on one variable (one row of the impact matrix).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    /// Row index into the stacked variable ordering.
    pub variable: usize,
    /// Optional human-readable name, carried through to reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Pattern against the structural shock columns, one cell per shock.
    pub cells: Vec<Restriction>,
    /// Pattern applied to every non-structural column.
    #[serde(default = "default_unrestricted")]
    pub other: Restriction,
}

/// The full restriction set: shock labels plus the per-variable rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestrictionTable {
    /// Stacked system size K; impacts checked against this table are K×K.
    pub k_system: usize,
    /// Rotation block size; the first 2m columns are the structural shocks.
    pub m: usize,
    /// Labels of the structural shocks, length 2m.
    pub shocks: Vec<String>,
    pub rows: Vec<TableRow>,
}

/// Stacked row indices of the low-frequency series the canonical pattern
/// additionally restricts: each region's policy rate and stock index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LowFreqAnchors {
    pub us_rate: usize,
    pub us_stock: usize,
    pub ea_rate: usize,
    pub ea_stock: usize,
}

impl RestrictionTable {
    /// The canonical surprise-block pattern for `spec`.
    ///
    /// With m = 2 every region has a rate and a stock surprise spanning an MP
    /// and a CBI shock: rates rise under both, stocks fall under MP and rise
    /// under CBI, and all cross-region and non-structural responses of the
    /// surprises are zero. `anchors` adds the same sign pattern on the
    /// regions' low-frequency rate and stock series. With m = 1 each region
    /// has a single rate surprise and a single shock; anchors are not
    /// defined for that layout.
    pub fn paper_default(
        spec: &ModelSpec,
        anchors: Option<&LowFreqAnchors>,
    ) -> Result<RestrictionTable, IdentError> {
        use Restriction::{Negative as Neg, Positive as Pos, Unrestricted as Un, Zero};
        let m = spec.m_surprise;
        let k_system = spec.system_size();
        let (shocks, region_pattern): (Vec<&str>, Vec<Vec<Restriction>>) = match m {
            1 => (vec!["MP_US", "MP_EA"], vec![vec![Pos]]),
            2 => (
                vec!["MP_US", "CBI_US", "MP_EA", "CBI_EA"],
                vec![vec![Pos, Pos], vec![Neg, Pos]],
            ),
            _ => {
                return Err(IdentError::BadTable(format!(
                    "no canonical pattern for m = {m}; supply an explicit table"
                )))
            }
        };
        let mut rows = Vec::new();
        let names = ["rate", "stock"];
        for region in 0..2 {
            for i in 0..m {
                let mut cells = vec![Zero; 2 * m];
                for (s, &r) in region_pattern[i].iter().enumerate() {
                    cells[region * m + s] = r;
                }
                rows.push(TableRow {
                    variable: region * m + i,
                    label: Some(format!(
                        "{} {} surprises",
                        ["US", "EA"][region],
                        names[i]
                    )),
                    cells,
                    other: Zero,
                });
            }
        }
        if let Some(a) = anchors {
            if m != 2 {
                return Err(IdentError::BadTable(format!(
                    "low-frequency anchors assume m = 2, got m = {m}"
                )));
            }
            let anchor_rows = [
                (a.us_rate, "US policy rate", vec![Pos, Pos, Un, Un]),
                (a.us_stock, "US stock index", vec![Neg, Pos, Un, Un]),
                (a.ea_rate, "EA policy rate", vec![Un, Un, Pos, Pos]),
                (a.ea_stock, "EA stock index", vec![Un, Un, Neg, Pos]),
            ];
            for (variable, label, cells) in anchor_rows {
                if variable < 2 * m {
                    return Err(IdentError::BadTable(format!(
                        "anchor {label} points at surprise row {variable}"
                    )));
                }
                rows.push(TableRow {
                    variable,
                    label: Some(label.to_string()),
                    cells,
                    other: Un,
                });
            }
        }
        let table = RestrictionTable {
            k_system,
            m,
            shocks: shocks.into_iter().map(String::from).collect(),
            rows,
        };
        table.validate()?;
        Ok(table)
    }

    /// Number of structural shock columns (2m).
    pub fn n_structural(&self) -> usize {
        2 * self.m
    }

    /// Checks the table's internal invariants: 2m labeled shocks, cell rows
    /// of matching width, valid variable indices, and zero cells only on
    /// surprise rows.
    pub fn validate(&self) -> Result<(), IdentError> {
        if self.m == 0 {
            return Err(IdentError::BadTable("m must be at least 1".into()));
        }
        if self.shocks.len() != 2 * self.m {
            return Err(IdentError::BadTable(format!(
                "expected {} shock labels for m = {}, got {}",
                2 * self.m,
                self.m,
                self.shocks.len()
            )));
        }
        if self.k_system < 2 * self.m {
            return Err(IdentError::BadTable(format!(
                "system size {} cannot hold 2m = {} surprise rows",
                self.k_system,
                2 * self.m
            )));
        }
        for row in &self.rows {
            let name = row
                .label
                .clone()
                .unwrap_or_else(|| format!("variable {}", row.variable));
            if row.variable >= self.k_system {
                return Err(IdentError::BadTable(format!(
                    "{name}: index {} out of range for K = {}",
                    row.variable, self.k_system
                )));
            }
            if row.cells.len() != self.shocks.len() {
                return Err(IdentError::BadTable(format!(
                    "{name}: {} cells but {} shocks",
                    row.cells.len(),
                    self.shocks.len()
                )));
            }
            let has_zero = row.cells.contains(&Restriction::Zero)
                || row.other == Restriction::Zero;
            if has_zero && row.variable >= 2 * self.m {
                return Err(IdentError::BadTable(format!(
                    "{name}: zero cells are only valid on surprise rows (first {})",
                    2 * self.m
                )));
            }
        }
        Ok(())
    }

    /// Loads and validates a table from a JSON file.
    pub fn from_json_file(path: &Path) -> Result<RestrictionTable, IdentError> {
        let text = std::fs::read_to_string(path).map_err(|source| IdentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let table: RestrictionTable = serde_json::from_str(&text)?;
        table.validate()?;
        Ok(table)
    }

    /// Serializes the table to pretty JSON.
    pub fn to_json(&self) -> Result<String, IdentError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The label of shock column `c`, `other:<c>` beyond the structural ones.
    pub fn shock_label(&self, c: usize) -> String {
        self.shocks
            .get(c)
            .cloned()
            .unwrap_or_else(|| format!("other:{c}"))
    }
}
