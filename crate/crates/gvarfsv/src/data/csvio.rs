//! CSV ingestion and export for monthly panels and flow matrices.
//!
//! All panel files share one wide layout: a leading `period` column with
//! `YYYY-MM` keys, then one column per series with `<block>.<variable>`
//! headers. A full dataset is one surprises file, one aggregate file, and
//! one file per country, all over the same period range.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{DataError, Month, PanelDataset, Transform};
use crate::model::ModelSpec;

/// File locations of one panel dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelPaths {
    pub surprises: PathBuf,
    pub aggregate: PathBuf,
    /// One file per country, in stacked block order.
    pub countries: Vec<PathBuf>,
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> DataError + '_ {
    move |source| DataError::Csv {
        path: path.display().to_string(),
        source,
    }
}

/// Reads one wide monthly CSV: `period` column first, f64 data columns after.
///
/// Returns the parsed months, the data column headers, and a T×C matrix.
pub fn read_series_csv(
    path: &Path,
) -> Result<(Vec<Month>, Vec<String>, DMatrix<f64>), DataError> {
    let pstr = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;
    let headers = reader.headers().map_err(csv_err(path))?.clone();
    let Some(first) = headers.get(0) else {
        return Err(DataError::BadPeriodHeader {
            path: pstr,
            found: String::new(),
        });
    };
    if first != "period" {
        return Err(DataError::BadPeriodHeader {
            path: pstr,
            found: first.to_string(),
        });
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();

    let mut months = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(csv_err(path))?;
        if row.len() != names.len() + 1 {
            return Err(DataError::DimensionMismatch {
                what: format!("{pstr}:{line} field count"),
                expected: names.len() + 1,
                actual: row.len(),
            });
        }
        months.push(row[0].parse::<Month>()?);
        let mut vals = Vec::with_capacity(names.len());
        for (c, text) in row.iter().skip(1).enumerate() {
            let v: f64 = text.parse().map_err(|_| DataError::BadField {
                what: "value",
                text: format!("{text} (column {})", names[c]),
                path: pstr.clone(),
                line,
            })?;
            vals.push(v);
        }
        rows.push(vals);
    }
    let t = rows.len();
    let values = DMatrix::from_fn(t, names.len(), |r, c| rows[r][c]);
    Ok((months, names, values))
}

/// Writes a wide monthly CSV in the layout [`read_series_csv`] expects.
///
/// Values print via Rust's shortest round-trippable float formatting, so a
/// write-read cycle reproduces the matrix bit for bit.
pub fn write_series_csv(
    path: &Path,
    months: &[Month],
    names: &[String],
    values: &DMatrix<f64>,
) -> Result<(), DataError> {
    let io_err = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    let mut header = String::from("period");
    for n in names {
        header.push(',');
        header.push_str(n);
    }
    writeln!(f, "{header}").map_err(io_err)?;
    for (r, month) in months.iter().enumerate() {
        write!(f, "{month}").map_err(io_err)?;
        for c in 0..values.ncols() {
            write!(f, ",{}", values[(r, c)]).map_err(io_err)?;
        }
        writeln!(f).map_err(io_err)?;
    }
    Ok(())
}

/// Reads per-period flow matrices: header `period,origin,<dest...>`, with one
/// row per origin and consecutive rows sharing a period key.
///
/// Origin labels must appear in destination-column order within each period.
pub fn read_flow_cube_csv(path: &Path) -> Result<Vec<DMatrix<f64>>, DataError> {
    let pstr = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;
    let headers = reader.headers().map_err(csv_err(path))?.clone();
    if headers.get(0) != Some("period") || headers.get(1) != Some("origin") {
        return Err(DataError::BadPeriodHeader {
            path: pstr,
            found: headers.iter().take(2).collect::<Vec<_>>().join(","),
        });
    }
    let dests: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
    let n = dests.len();

    let mut cubes: Vec<(Month, DMatrix<f64>, usize)> = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(csv_err(path))?;
        let month = row
            .get(0)
            .ok_or_else(|| DataError::BadField {
                what: "period",
                text: String::new(),
                path: pstr.clone(),
                line,
            })?
            .parse::<Month>()?;
        let origin = row.get(1).unwrap_or_default();
        let need_new = cubes.last().map(|(m, _, filled)| *m != month || *filled == n);
        if need_new.unwrap_or(true) {
            cubes.push((month, DMatrix::zeros(n, n), 0));
        }
        let (_, matrix, filled) = cubes.last_mut().unwrap();
        if origin != dests[*filled] {
            return Err(DataError::BadField {
                what: "origin (must follow destination column order)",
                text: origin.to_string(),
                path: pstr.clone(),
                line,
            });
        }
        for c in 0..n {
            let text = row.get(2 + c).unwrap_or_default();
            matrix[(*filled, c)] = text.parse().map_err(|_| DataError::BadField {
                what: "flow value",
                text: text.to_string(),
                path: pstr.clone(),
                line,
            })?;
        }
        *filled += 1;
    }
    for (month, _, filled) in &cubes {
        if *filled != n {
            return Err(DataError::DimensionMismatch {
                what: format!("{pstr}: rows for period {month}"),
                expected: n,
                actual: *filled,
            });
        }
    }
    Ok(cubes.into_iter().map(|(_, m, _)| m).collect())
}

/// Loads, transforms, and standardizes a full panel dataset.
///
/// The surprise file fixes the period range; every other file must match it
/// row for row. `transforms` maps column ids to tags; unlisted columns are
/// taken as already-in-percent (`pct`).
pub fn load_panel(
    spec: &ModelSpec,
    paths: &PanelPaths,
    transforms: &HashMap<String, Transform>,
) -> Result<PanelDataset, DataError> {
    if paths.countries.len() != spec.n_countries {
        return Err(DataError::DimensionMismatch {
            what: "country file count".to_string(),
            expected: spec.n_countries,
            actual: paths.countries.len(),
        });
    }
    let (periods, mut ids, mut values) = read_series_csv(&paths.surprises)?;
    expect_cols(&paths.surprises, &ids, spec.n_surprise_rows())?;

    let mut append = |path: &Path, expected: usize| -> Result<(), DataError> {
        let (months, names, block) = read_series_csv(path)?;
        expect_cols(path, &names, expected)?;
        if months.len() != periods.len() {
            return Err(DataError::PeriodMismatch {
                path: path.display().to_string(),
                row: months.len().min(periods.len()),
            });
        }
        for (r, (a, b)) in periods.iter().zip(&months).enumerate() {
            if a != b {
                return Err(DataError::PeriodMismatch {
                    path: path.display().to_string(),
                    row: r,
                });
            }
        }
        ids.extend(names);
        values = stack_columns(&values, &block);
        Ok(())
    };
    append(&paths.aggregate, spec.k_aggregate_low_freq)?;
    for path in &paths.countries {
        append(path, spec.k_country)?;
    }

    let tags: Vec<Transform> = ids
        .iter()
        .map(|id| transforms.get(id).copied().unwrap_or_default())
        .collect();
    PanelDataset::from_raw(spec, periods, values, ids, tags)
}

fn expect_cols(path: &Path, names: &[String], expected: usize) -> Result<(), DataError> {
    if names.len() != expected {
        return Err(DataError::DimensionMismatch {
            what: format!("{} data columns", path.display()),
            expected,
            actual: names.len(),
        });
    }
    Ok(())
}

fn stack_columns(left: &DMatrix<f64>, right: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(left.nrows(), left.ncols() + right.ncols());
    out.view_mut((0, 0), left.shape()).copy_from(left);
    out.view_mut((0, left.ncols()), right.shape()).copy_from(right);
    out
}
