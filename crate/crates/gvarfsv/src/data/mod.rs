//! Panel construction: monthly calendar, transforms, standardization.
//!
//! The estimation sample is a contiguous monthly panel whose columns follow
//! the stacked system order (2m surprise columns, k_tilde aggregate columns,
//! k columns per country). Raw series are transformed (`100log` or `pct`)
//! and then standardized column by column; the mean/std ledger is kept so
//! impulse responses can be rescaled back into interpretable units.

mod csvio;
mod events;
mod weights;

pub use csvio::{
    load_panel, read_flow_cube_csv, read_series_csv, write_series_csv, PanelPaths,
};
pub use events::{
    aggregate_surprises_to_monthly, read_events_csv, EventWindow, Instrument, RawEventRecord,
    Region,
};
pub use weights::{build_weights, WeightKind};

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::model::{ModelSpec, WeightMatrix};

/// Errors raised while loading or preparing panel data.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("cannot parse month {text:?} (expected YYYY-MM)")]
    BadMonth { text: String },
    #[error("cannot parse {what} {text:?} at {path}:{line}")]
    BadField {
        what: &'static str,
        text: String,
        path: String,
        line: usize,
    },
    #[error("{path}: period column must come first, found {found:?}")]
    BadPeriodHeader { path: String, found: String },
    #[error("panel periods are not contiguous: {next} does not follow {prev}")]
    NonContiguous { prev: Month, next: Month },
    #[error("{path}: periods disagree with the surprise file at row {row}")]
    PeriodMismatch { path: String, row: usize },
    #[error("duplicate surprise events:\n{listing}")]
    DuplicateEvents { listing: String },
    #[error("event instrument {instrument:?} needs column {needed}, but m = {m}")]
    InstrumentOutOfRange {
        instrument: String,
        needed: usize,
        m: usize,
    },
    #[error("non-finite value in {what} at row {row}, column {col}")]
    NonFinite { what: String, row: usize, col: usize },
    #[error("nonpositive value {value} under 100log transform at period {period}, column {column}")]
    NonPositiveLog {
        value: f64,
        period: Month,
        column: String,
    },
    #[error("column {column} is constant; cannot standardize")]
    ConstantColumn { column: String },
    #[error("flow row {row} is all zero; cannot normalize to weights")]
    ZeroFlowRow { row: usize },
    #[error("negative flow {value} at row {row}, column {col}")]
    NegativeFlow { value: f64, row: usize, col: usize },
    #[error("dimension mismatch in {what}: expected {expected}, found {actual}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },
    #[error("duplicate column id {id:?}")]
    DuplicateColumn { id: String },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// A calendar month, ordered chronologically, printed as `YYYY-MM`.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(try_from = "String", into = "String")]
pub struct Month {
    year: i32,
    month: u32,
}

impl Month {
    pub fn new(year: i32, month: u32) -> Option<Self> {
        (1..=12).contains(&month).then_some(Month { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    pub fn next(self) -> Self {
        if self.month == 12 {
            Month { year: self.year + 1, month: 1 }
        } else {
            Month { year: self.year, month: self.month + 1 }
        }
    }

    /// `count` consecutive months starting at `self`.
    pub fn span(self, count: usize) -> Vec<Month> {
        let mut out = Vec::with_capacity(count);
        let mut cur = self;
        for _ in 0..count {
            out.push(cur);
            cur = cur.next();
        }
        out
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DataError::BadMonth { text: s.to_string() };
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        let year: i32 = y.parse().map_err(|_| bad())?;
        if m.len() != 2 {
            return Err(bad());
        }
        let month: u32 = m.parse().map_err(|_| bad())?;
        Month::new(year, month).ok_or_else(bad)
    }
}

impl TryFrom<String> for Month {
    type Error = DataError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Month> for String {
    fn from(m: Month) -> String {
        m.to_string()
    }
}

/// Which block of the stacked system a column belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockId {
    Surprise,
    Aggregate,
    /// 1-based country index.
    Country(usize),
}

/// Per-column transformation applied before standardization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transform {
    /// 100 * ln(x); requires strictly positive inputs.
    #[serde(rename = "100log")]
    Log100,
    /// Identity: the series is already in percent / rate units.
    #[default]
    #[serde(rename = "pct")]
    Pct,
}

/// Everything known about one panel column, including the standardization
/// ledger needed to map results back into original units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub id: String,
    pub block: BlockId,
    pub transform: Transform,
    /// Sample mean of the transformed series, removed by standardization.
    pub mean: f64,
    /// Sample standard deviation (ddof = 1) of the transformed series.
    pub std: f64,
}

/// A contiguous monthly panel in stacked column order, standardized, with
/// the per-column ledger required to invert the standardization.
#[derive(Clone, Debug, PartialEq)]
pub struct PanelDataset {
    pub periods: Vec<Month>,
    /// T×K standardized values.
    pub values: DMatrix<f64>,
    pub columns: Vec<ColumnMeta>,
}

impl PanelDataset {
    /// Builds a panel from transformed-but-raw values: applies `transforms`,
    /// standardizes each column, and records the ledger.
    ///
    /// `raw` is T×K in stacked order; `ids` name the columns. Fails on
    /// non-contiguous periods, bad dimensions, duplicate ids, nonpositive
    /// values under a log tag, or constant columns.
    pub fn from_raw(
        spec: &ModelSpec,
        periods: Vec<Month>,
        mut raw: DMatrix<f64>,
        ids: Vec<String>,
        transforms: Vec<Transform>,
    ) -> Result<Self, DataError> {
        let k_sys = spec.system_size();
        if raw.ncols() != k_sys {
            return Err(DataError::DimensionMismatch {
                what: "panel columns".to_string(),
                expected: k_sys,
                actual: raw.ncols(),
            });
        }
        if ids.len() != k_sys || transforms.len() != k_sys {
            return Err(DataError::DimensionMismatch {
                what: "column metadata length".to_string(),
                expected: k_sys,
                actual: ids.len().min(transforms.len()),
            });
        }
        if raw.nrows() != periods.len() {
            return Err(DataError::DimensionMismatch {
                what: "panel rows vs periods".to_string(),
                expected: periods.len(),
                actual: raw.nrows(),
            });
        }
        if raw.nrows() < 2 {
            return Err(DataError::DimensionMismatch {
                what: "panel rows (need at least 2)".to_string(),
                expected: 2,
                actual: raw.nrows(),
            });
        }
        check_contiguous(&periods)?;
        let mut seen = HashMap::new();
        for id in &ids {
            if seen.insert(id.clone(), ()).is_some() {
                return Err(DataError::DuplicateColumn { id: id.clone() });
            }
        }
        for c in 0..raw.ncols() {
            for r in 0..raw.nrows() {
                if !raw[(r, c)].is_finite() {
                    return Err(DataError::NonFinite {
                        what: format!("column {}", ids[c]),
                        row: r,
                        col: c,
                    });
                }
            }
        }

        apply_transforms(&mut raw, &transforms, &periods, &ids)?;
        let ledger = standardize(&mut raw, &ids)?;

        let columns = ids
            .into_iter()
            .zip(transforms)
            .zip(ledger)
            .enumerate()
            .map(|(c, ((id, transform), (mean, std)))| ColumnMeta {
                id,
                block: block_of(spec, c),
                transform,
                mean,
                std,
            })
            .collect();
        Ok(PanelDataset {
            periods,
            values: raw,
            columns,
        })
    }

    /// Wraps values that are already on the model (standardized) scale:
    /// the ledger is the identity (mean 0, std 1), ids are generated, and no
    /// transform or re-standardization is applied. Intended for simulated
    /// panels, whose block structure would not survive re-standardization.
    pub fn from_model_scale(
        spec: &ModelSpec,
        periods: Vec<Month>,
        values: DMatrix<f64>,
    ) -> Result<Self, DataError> {
        let k_sys = spec.system_size();
        if values.ncols() != k_sys {
            return Err(DataError::DimensionMismatch {
                what: "panel columns".to_string(),
                expected: k_sys,
                actual: values.ncols(),
            });
        }
        if values.nrows() != periods.len() {
            return Err(DataError::DimensionMismatch {
                what: "panel rows vs periods".to_string(),
                expected: periods.len(),
                actual: values.nrows(),
            });
        }
        if values.nrows() < 2 {
            return Err(DataError::DimensionMismatch {
                what: "panel rows (need at least 2)".to_string(),
                expected: 2,
                actual: values.nrows(),
            });
        }
        check_contiguous(&periods)?;
        let ids = default_column_ids(spec);
        for c in 0..values.ncols() {
            for r in 0..values.nrows() {
                if !values[(r, c)].is_finite() {
                    return Err(DataError::NonFinite {
                        what: format!("column {}", ids[c]),
                        row: r,
                        col: c,
                    });
                }
            }
        }
        let columns = ids
            .into_iter()
            .enumerate()
            .map(|(c, id)| ColumnMeta {
                id,
                block: block_of(spec, c),
                transform: Transform::Pct,
                mean: 0.0,
                std: 1.0,
            })
            .collect();
        Ok(PanelDataset {
            periods,
            values,
            columns,
        })
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn n_columns(&self) -> usize {
        self.values.ncols()
    }

    /// Reconstructs the pre-standardization (transformed) values.
    pub fn unstandardized(&self) -> DMatrix<f64> {
        let mut out = self.values.clone();
        for (c, meta) in self.columns.iter().enumerate() {
            for r in 0..out.nrows() {
                out[(r, c)] = out[(r, c)] * meta.std + meta.mean;
            }
        }
        out
    }

    /// Feeds everything that defines this panel into a running digest, so
    /// checkpoints can detect input swaps on resume.
    pub fn hash_into(&self, h: &mut sha2::Sha256) {
        use sha2::Digest;
        h.update((self.periods.len() as u64).to_le_bytes());
        for p in &self.periods {
            h.update(p.to_string().as_bytes());
        }
        h.update((self.columns.len() as u64).to_le_bytes());
        for c in &self.columns {
            h.update((c.id.len() as u64).to_le_bytes());
            h.update(c.id.as_bytes());
            h.update(c.mean.to_le_bytes());
            h.update(c.std.to_le_bytes());
        }
        for v in self.values.as_slice() {
            h.update(v.to_le_bytes());
        }
    }
}

/// Generated column ids in stacked order: surprise rows, aggregate block,
/// then one id per country series.
pub fn default_column_ids(spec: &ModelSpec) -> Vec<String> {
    let mut ids = Vec::with_capacity(spec.system_size());
    for region in ["us", "ea"] {
        for i in 1..=spec.m_surprise {
            ids.push(format!("surprise.{region}{i}"));
        }
    }
    for i in 1..=(spec.block_len_aggregate() - spec.n_surprise_rows()) {
        ids.push(format!("aggregate.a{i}"));
    }
    for j in 1..=spec.n_countries {
        for i in 1..=spec.k_country {
            ids.push(format!("c{j:02}.v{i}"));
        }
    }
    ids
}

/// Block assignment of stacked column `c`.
fn block_of(spec: &ModelSpec, c: usize) -> BlockId {
    let s = spec.n_surprise_rows();
    let l = spec.block_len_aggregate();
    if c < s {
        BlockId::Surprise
    } else if c < l {
        BlockId::Aggregate
    } else {
        BlockId::Country((c - l) / spec.k_country + 1)
    }
}

/// Errors unless `periods` advances by exactly one month per row.
pub fn check_contiguous(periods: &[Month]) -> Result<(), DataError> {
    for pair in periods.windows(2) {
        if pair[1] != pair[0].next() {
            return Err(DataError::NonContiguous {
                prev: pair[0],
                next: pair[1],
            });
        }
    }
    Ok(())
}

/// Applies per-column transforms in place. `100log` maps x to 100·ln(x) and
/// rejects nonpositive inputs with the offending period and column.
pub fn apply_transforms(
    values: &mut DMatrix<f64>,
    transforms: &[Transform],
    periods: &[Month],
    ids: &[String],
) -> Result<(), DataError> {
    for (c, tag) in transforms.iter().enumerate() {
        match tag {
            Transform::Pct => {}
            Transform::Log100 => {
                for r in 0..values.nrows() {
                    let v = values[(r, c)];
                    if v <= 0.0 {
                        return Err(DataError::NonPositiveLog {
                            value: v,
                            period: periods[r],
                            column: ids[c].clone(),
                        });
                    }
                    values[(r, c)] = 100.0 * v.ln();
                }
            }
        }
    }
    Ok(())
}

/// Standardizes each column to mean 0, variance 1 (ddof = 1) in place and
/// returns the (mean, std) ledger. Constant columns are an error.
pub fn standardize(
    values: &mut DMatrix<f64>,
    ids: &[String],
) -> Result<Vec<(f64, f64)>, DataError> {
    let t = values.nrows();
    let mut ledger = Vec::with_capacity(values.ncols());
    for c in 0..values.ncols() {
        let mean = values.column(c).sum() / t as f64;
        let ss: f64 = values.column(c).iter().map(|v| (v - mean).powi(2)).sum();
        let std = (ss / (t as f64 - 1.0)).sqrt();
        if std == 0.0 || !std.is_finite() {
            return Err(DataError::ConstantColumn {
                column: ids[c].clone(),
            });
        }
        for r in 0..t {
            values[(r, c)] = (values[(r, c)] - mean) / std;
        }
        ledger.push((mean, std));
    }
    Ok(ledger)
}

/// Consistency check between a panel and the weight matrix it will be used with.
pub fn check_panel_weights(
    spec: &ModelSpec,
    panel: &PanelDataset,
    weights: &WeightMatrix,
) -> Result<(), DataError> {
    if panel.n_columns() != spec.system_size() {
        return Err(DataError::DimensionMismatch {
            what: "panel columns".to_string(),
            expected: spec.system_size(),
            actual: panel.n_columns(),
        });
    }
    if weights.n_countries() != spec.n_countries {
        return Err(DataError::DimensionMismatch {
            what: "weight matrix countries".to_string(),
            expected: spec.n_countries,
            actual: weights.n_countries(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, Stream};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn small_spec() -> ModelSpec {
        ModelSpec {
            n_countries: 2,
            k_country: 2,
            m_surprise: 1,
            k_aggregate_low_freq: 2,
            lag_domestic: 1,
            lag_foreign: 1,
            lag_aggregate_in_country: 1,
            n_factors: 1,
            l: None,
            k_system: None,
        }
    }

    #[test]
    fn month_parsing_and_ordering() {
        let m: Month = "1999-12".parse().unwrap();
        assert_eq!(m.to_string(), "1999-12");
        assert_eq!(m.next().to_string(), "2000-01");
        assert!(m < m.next());
        assert!("1999-13".parse::<Month>().is_err());
        assert!("1999-1".parse::<Month>().is_err());
        assert!("nope".parse::<Month>().is_err());
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, "\"1999-12\"");
        assert_eq!(serde_json::from_str::<Month>(&json).unwrap(), m);
    }

    #[test]
    fn contiguity_is_enforced() {
        let start: Month = "2001-11".parse().unwrap();
        let months = start.span(4);
        assert!(check_contiguous(&months).is_ok());
        let gap = vec![months[0], months[2]];
        assert!(matches!(
            check_contiguous(&gap),
            Err(DataError::NonContiguous { .. })
        ));
    }

    #[test]
    fn log_transform_basics() {
        let ids = vec!["a.x".to_string(), "a.y".to_string()];
        let periods = "2000-01".parse::<Month>().unwrap().span(2);
        let mut values =
            DMatrix::from_row_slice(2, 2, &[1.0, 5.0, std::f64::consts::E, 7.0]);
        apply_transforms(
            &mut values,
            &[Transform::Log100, Transform::Pct],
            &periods,
            &ids,
        )
        .unwrap();
        assert!((values[(0, 0)] - 0.0).abs() < 1e-12);
        assert!((values[(1, 0)] - 100.0).abs() < 1e-12);
        assert_eq!(values[(0, 1)], 5.0);

        let mut bad = DMatrix::from_row_slice(2, 2, &[1.0, 5.0, -2.0, 7.0]);
        let err = apply_transforms(
            &mut bad,
            &[Transform::Log100, Transform::Pct],
            &periods,
            &ids,
        )
        .unwrap_err();
        match err {
            DataError::NonPositiveLog { value, period, column } => {
                assert_eq!(value, -2.0);
                assert_eq!(period.to_string(), "2000-02");
                assert_eq!(column, "a.x");
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn log_transform_matches_elementwise_oracle() {
        let mut rng = derive_rng(3, Stream::Simulation, &[10]);
        let t = 40;
        let raw = DMatrix::from_fn(t, 1, |_, _| rng.random::<f64>() * 10.0 + 0.1);
        let mut transformed = raw.clone();
        let periods = "1990-01".parse::<Month>().unwrap().span(t);
        apply_transforms(
            &mut transformed,
            &[Transform::Log100],
            &periods,
            &["b.z".to_string()],
        )
        .unwrap();
        for r in 0..t {
            let oracle = 100.0 * raw[(r, 0)].ln();
            assert!((transformed[(r, 0)] - oracle).abs() <= 1e-12);
        }
    }

    #[test]
    fn standardize_simple_column() {
        let ids = vec!["c.one".to_string()];
        let mut values = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let ledger = standardize(&mut values, &ids).unwrap();
        assert_eq!(ledger[0].0, 2.0);
        assert!((ledger[0].1 - 1.0).abs() < 1e-12); // std of (1,2,3) with ddof=1
        assert!((values[(0, 0)] + 1.0).abs() < 1e-12);
        assert!(values[(1, 0)].abs() < 1e-12);
        assert!((values[(2, 0)] - 1.0).abs() < 1e-12);

        let mut constant = DMatrix::from_column_slice(3, 1, &[4.0, 4.0, 4.0]);
        assert!(matches!(
            standardize(&mut constant, &ids),
            Err(DataError::ConstantColumn { .. })
        ));
    }

    #[test]
    fn panel_round_trips_through_the_ledger() {
        let spec = small_spec();
        let k = spec.system_size();
        let t = 30;
        let mut rng = derive_rng(8, Stream::Simulation, &[11]);
        // Strictly positive so the log column is valid.
        let raw = DMatrix::from_fn(t, k, |_, _| {
            (rng.sample::<f64, _>(StandardNormal)).exp() + 0.5
        });
        let ids: Vec<String> = (0..k).map(|c| format!("col.{c}")).collect();
        let mut transforms = vec![Transform::Pct; k];
        transforms[3] = Transform::Log100;
        let periods = "2005-06".parse::<Month>().unwrap().span(t);
        let panel = PanelDataset::from_raw(
            &spec,
            periods,
            raw.clone(),
            ids.clone(),
            transforms.clone(),
        )
        .unwrap();

        // Columns are standardized: mean 0, var 1 within 1e-10.
        for c in 0..k {
            let col = panel.values.column(c);
            let mean = col.sum() / t as f64;
            let var: f64 =
                col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t as f64 - 1.0);
            assert!(mean.abs() <= 1e-10, "col {c} mean {mean}");
            assert!((var - 1.0).abs() <= 1e-10, "col {c} var {var}");
        }

        // Ledger inverts back to the transformed values.
        let transformed = {
            let mut v = raw.clone();
            apply_transforms(&mut v, &transforms, &panel.periods, &ids).unwrap();
            v
        };
        let back = panel.unstandardized();
        assert!((back - transformed).abs().max() <= 1e-10);

        // Block assignment follows the stacked order.
        assert_eq!(panel.columns[0].block, BlockId::Surprise);
        assert_eq!(panel.columns[2].block, BlockId::Aggregate);
        assert_eq!(panel.columns[4].block, BlockId::Country(1));
        assert_eq!(panel.columns[7].block, BlockId::Country(2));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let spec = small_spec();
        let k = spec.system_size();
        let t = 5;
        let raw = DMatrix::from_element(t, k, 1.0);
        let mut ids: Vec<String> = (0..k).map(|c| format!("col.{c}")).collect();
        ids[3] = ids[2].clone();
        let err = PanelDataset::from_raw(
            &spec,
            "2000-01".parse::<Month>().unwrap().span(t),
            raw,
            ids,
            vec![Transform::Pct; k],
        )
        .unwrap_err();
        assert!(matches!(err, DataError::DuplicateColumn { .. }));
    }

    #[test]
    fn panel_hash_changes_with_any_input() {
        use sha2::Digest;
        let spec = small_spec();
        let k = spec.system_size();
        let t = 6;
        let mut rng = derive_rng(9, Stream::Simulation, &[12]);
        let raw = DMatrix::from_fn(t, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let ids: Vec<String> = (0..k).map(|c| format!("col.{c}")).collect();
        let build = |raw: DMatrix<f64>| {
            PanelDataset::from_raw(
                &spec,
                "2000-01".parse::<Month>().unwrap().span(t),
                raw,
                ids.clone(),
                vec![Transform::Pct; k],
            )
            .unwrap()
        };
        let digest = |p: &PanelDataset| {
            let mut h = sha2::Sha256::new();
            p.hash_into(&mut h);
            h.finalize()
        };
        let p1 = build(raw.clone());
        let mut raw2 = raw.clone();
        raw2[(0, 0)] += 1e-9;
        let p2 = build(raw2);
        assert_eq!(digest(&p1), digest(&p1));
        assert_ne!(digest(&p1), digest(&p2));
    }
}
