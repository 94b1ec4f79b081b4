//! Weight construction from raw flow data.
//!
//! The aggregate block averages countries with relative GDP shares; country
//! blocks average their partners with bilateral export shares. Both start
//! from nonnegative flow matrices observed over several periods: flows are
//! time-averaged first, self-flows are zeroed (export case), and each row is
//! normalized to sum to one.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::DataError;

/// Which share concept the flows encode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    /// Relative GDP contributions; flows are 1×N per period, the result is
    /// the aggregate block's weight row.
    GdpShare,
    /// Bilateral exports; flows are N×N per period (rows = origin), the
    /// result is the country rows with a zero diagonal.
    ExportShare,
}

/// Time-averages `flows` and normalizes rows into weights.
///
/// Returns a 1×N row for [`WeightKind::GdpShare`] or an N×N block for
/// [`WeightKind::ExportShare`]. Fails on negative or non-finite flows, on
/// shape disagreements, and on rows that average to all zero.
pub fn build_weights(
    kind: WeightKind,
    flows: &[DMatrix<f64>],
) -> Result<DMatrix<f64>, DataError> {
    let Some(first) = flows.first() else {
        return Err(DataError::DimensionMismatch {
            what: "flow periods".to_string(),
            expected: 1,
            actual: 0,
        });
    };
    let (rows, cols) = first.shape();
    let expected_rows = match kind {
        WeightKind::GdpShare => 1,
        WeightKind::ExportShare => cols,
    };
    if rows != expected_rows {
        return Err(DataError::DimensionMismatch {
            what: "flow matrix rows".to_string(),
            expected: expected_rows,
            actual: rows,
        });
    }
    let mut mean = DMatrix::zeros(rows, cols);
    for (p, flow) in flows.iter().enumerate() {
        if flow.shape() != (rows, cols) {
            return Err(DataError::DimensionMismatch {
                what: format!("flow matrix shape at period {p}"),
                expected: rows * cols,
                actual: flow.nrows() * flow.ncols(),
            });
        }
        for c in 0..cols {
            for r in 0..rows {
                let v = flow[(r, c)];
                if !v.is_finite() {
                    return Err(DataError::NonFinite {
                        what: format!("flows at period {p}"),
                        row: r,
                        col: c,
                    });
                }
                if v < 0.0 {
                    return Err(DataError::NegativeFlow { value: v, row: r, col: c });
                }
                mean[(r, c)] += v;
            }
        }
    }
    mean /= flows.len() as f64;

    if kind == WeightKind::ExportShare {
        for i in 0..rows {
            mean[(i, i)] = 0.0;
        }
    }
    for r in 0..rows {
        let sum: f64 = mean.row(r).sum();
        if sum <= 0.0 {
            return Err(DataError::ZeroFlowRow { row: r });
        }
        for c in 0..cols {
            mean[(r, c)] /= sum;
        }
    }
    Ok(mean)
}
