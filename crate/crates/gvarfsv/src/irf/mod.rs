//! Impulse responses from the stacked system and accepted impact matrices.
//!
//! Each retained posterior draw contributes one response tensor: the response
//! at horizon n is the top-left K×K block of the companion matrix raised to
//! the n-th power, applied to the draw's accepted impact matrix, so horizon 0
//! is the impact itself, bit for bit. Draws whose propagation overflows to
//! non-finite values are excluded from the summaries and counted; draws whose
//! rotation search was exhausted never enter the tensor. Summaries are
//! pointwise quantiles across draws (linear interpolation between order
//! statistics), rescaled into original units via the standardization ledger.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnMeta, Transform};
use crate::exec::{self, ExecMode};
use crate::gibbs::RetainedDraw;
use crate::ident::IdentifiedDraw;
use crate::model::{companion_matrix, ModelError, ModelSpec, WeightMatrix};

/// Default response horizon in months: three years of monthly responses.
pub const DEFAULT_HORIZON: usize = 36;

/// Default summary quantiles: the median and the 68% credible band.
pub const DEFAULT_QUANTILES: [f64; 3] = [0.16, 0.5, 0.84];

/// Errors raised while computing or writing impulse responses.
#[derive(Debug, thiserror::Error)]
pub enum IrfError {
    #[error("invalid impulse-response request: {0}")]
    BadConfig(String),
    #[error("no identified draws available to summarize")]
    EmptyDraws,
    #[error("standardization ledger has no entry for variable {variable}")]
    MissingLedger { variable: String },
    #[error("dimension mismatch in {what}: expected {expected}, found {actual}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv failure on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("JSON encoding failure: {0}")]
    Json(#[from] serde_json::Error),
}

/// Measurement unit of one variable's responses after rescaling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    /// The underlying series entered as 100·log; responses are percent.
    #[serde(rename = "percent")]
    Percent,
    /// The underlying series entered as a rate; responses are percentage
    /// points.
    #[serde(rename = "pp")]
    PercentagePoints,
}

impl Unit {
    pub fn from_transform(t: Transform) -> Unit {
        match t {
            Transform::Log100 => Unit::Percent,
            Transform::Pct => Unit::PercentagePoints,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Unit::Percent => "percent",
            Unit::PercentagePoints => "pp",
        }
    }
}

/// Responses of every variable to every shock, per draw and horizon.
///
/// `responses[draw][h]` is a K×K matrix with variables on rows and shocks on
/// columns; slice 0 equals the accepted impact matrix of that draw.
#[derive(Clone, Debug, PartialEq)]
pub struct IrfTensor {
    pub k_system: usize,
    /// Largest horizon; each draw carries `horizon + 1` slices.
    pub horizon: usize,
    pub responses: Vec<Vec<DMatrix<f64>>>,
    /// Draws dropped because propagation left the finite range.
    pub excluded_nonfinite: usize,
    /// Draws dropped because their rotation search was exhausted.
    pub skipped_unidentified: usize,
    /// Per-variable units; present once the tensor has been rescaled.
    pub units: Option<Vec<Unit>>,
}

/// Result of propagating a single draw.
#[derive(Clone, Debug, PartialEq)]
pub enum Propagation {
    Finite(Vec<DMatrix<f64>>),
    /// First horizon at which a response stopped being finite.
    NonFinite { horizon: usize },
}

/// Powers the companion matrix against the impact columns.
///
/// Returns `horizon + 1` response matrices; entry 0 is a verbatim copy of the
/// impact. An overflow to NaN/±inf flags the draw instead of erroring, so
/// explosive posterior draws can be excluded and reported.
pub fn propagate_irf(
    companion: &DMatrix<f64>,
    impact: &DMatrix<f64>,
    horizon: usize,
) -> Result<Propagation, IrfError> {
    let k = impact.nrows();
    let n = companion.nrows();
    if companion.ncols() != n || k == 0 || n % k != 0 {
        return Err(IrfError::DimensionMismatch {
            what: "companion matrix for the impact's variable count".into(),
            expected: k,
            actual: n,
        });
    }
    let shocks = impact.ncols();
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(impact.clone());
    let mut state = DMatrix::zeros(n, shocks);
    state.view_mut((0, 0), (k, shocks)).copy_from(impact);
    for h in 1..=horizon {
        state = companion * state;
        let top = state.view((0, 0), (k, shocks)).into_owned();
        if top.iter().any(|v| !v.is_finite()) {
            return Ok(Propagation::NonFinite { horizon: h });
        }
        out.push(top);
    }
    Ok(Propagation::Finite(out))
}

/// Builds the full response tensor for a set of retained posterior draws and
/// their identification outcomes. Draws are propagated independently (and in
/// parallel when requested); the result does not depend on the execution
/// mode because no randomness is involved.
pub fn irf_for_draws(
    spec: &ModelSpec,
    weights: &WeightMatrix,
    draws: &[RetainedDraw],
    idents: &[Option<IdentifiedDraw>],
    horizon: usize,
    mode: ExecMode,
) -> Result<IrfTensor, IrfError> {
    if draws.len() != idents.len() {
        return Err(IrfError::DimensionMismatch {
            what: "identification outcomes per retained draw".into(),
            expected: draws.len(),
            actual: idents.len(),
        });
    }
    let k = spec.system_size();
    let per_draw: Vec<Option<Propagation>> = exec::try_map_indexed(draws.len(), mode, |i| {
        let Some(ident) = &idents[i] else {
            return Ok(None);
        };
        let stacked = draws[i].stacked(spec, weights)?;
        let companion = companion_matrix(&stacked);
        propagate_irf(&companion, &ident.impact, horizon).map(Some)
    })?;

    let mut responses = Vec::new();
    let mut excluded_nonfinite = 0;
    let mut skipped_unidentified = 0;
    for outcome in per_draw {
        match outcome {
            None => skipped_unidentified += 1,
            Some(Propagation::NonFinite { .. }) => excluded_nonfinite += 1,
            Some(Propagation::Finite(slices)) => responses.push(slices),
        }
    }
    Ok(IrfTensor {
        k_system: k,
        horizon,
        responses,
        excluded_nonfinite,
        skipped_unidentified,
        units: None,
    })
}

/// Multiplies each variable's responses by its original-series standard
/// deviation and attaches unit tags, taking the model's standardized
/// responses back to interpretable units.
pub fn rescale_to_units(tensor: &IrfTensor, ledger: &[ColumnMeta]) -> Result<IrfTensor, IrfError> {
    if ledger.len() != tensor.k_system {
        return Err(IrfError::MissingLedger {
            variable: format!(
                "index {} (ledger holds {} of {} columns)",
                ledger.len().min(tensor.k_system),
                ledger.len(),
                tensor.k_system
            ),
        });
    }
    for meta in ledger {
        if !(meta.std.is_finite() && meta.std > 0.0) {
            return Err(IrfError::BadConfig(format!(
                "ledger std for {} is {}, cannot rescale",
                meta.id, meta.std
            )));
        }
    }
    let mut out = tensor.clone();
    for slices in &mut out.responses {
        for mat in slices {
            for (v, meta) in ledger.iter().enumerate() {
                for c in 0..tensor.k_system {
                    mat[(v, c)] *= meta.std;
                }
            }
        }
    }
    out.units = Some(
        ledger
            .iter()
            .map(|meta| Unit::from_transform(meta.transform))
            .collect(),
    );
    Ok(out)
}

/// Pointwise posterior quantiles per (shock, variable, horizon).
#[derive(Clone, Debug, PartialEq)]
pub struct IrfSummary {
    pub k_system: usize,
    pub horizon: usize,
    pub quantiles: Vec<f64>,
    /// `bands[qi][h]` holds the `quantiles[qi]` quantile at horizon `h`,
    /// variables on rows and shocks on columns.
    pub bands: Vec<Vec<DMatrix<f64>>>,
    /// Number of draws the quantiles are taken over.
    pub n_draws: usize,
    pub excluded_nonfinite: usize,
    pub skipped_unidentified: usize,
    pub units: Option<Vec<Unit>>,
}

/// Linear interpolation between order statistics of the sorted sample, the
/// same estimator for every cell: position (n−1)·q, fractional part
/// interpolated between the bracketing values.
fn interpolated_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let position = (n - 1) as f64 * q;
    let lo = position.floor() as usize;
    let frac = position - lo as f64;
    if frac == 0.0 || lo + 1 == n {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Collapses the draw dimension into pointwise quantiles.
pub fn summarize(tensor: &IrfTensor, quantiles: &[f64]) -> Result<IrfSummary, IrfError> {
    let n = tensor.responses.len();
    if n == 0 {
        return Err(IrfError::EmptyDraws);
    }
    if quantiles.is_empty() {
        return Err(IrfError::BadConfig("no quantiles requested".into()));
    }
    for &q in quantiles {
        if !(0.0..=1.0).contains(&q) {
            return Err(IrfError::BadConfig(format!(
                "quantile {q} is outside [0, 1]"
            )));
        }
    }
    let k = tensor.k_system;
    let mut bands: Vec<Vec<DMatrix<f64>>> = quantiles
        .iter()
        .map(|_| (0..=tensor.horizon).map(|_| DMatrix::zeros(k, k)).collect())
        .collect();
    let mut cell = vec![0.0f64; n];
    for h in 0..=tensor.horizon {
        for v in 0..k {
            for s in 0..k {
                for (d, slices) in tensor.responses.iter().enumerate() {
                    cell[d] = slices[h][(v, s)];
                }
                cell.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite responses"));
                for (qi, &q) in quantiles.iter().enumerate() {
                    bands[qi][h][(v, s)] = interpolated_quantile(&cell, q);
                }
            }
        }
    }
    Ok(IrfSummary {
        k_system: k,
        horizon: tensor.horizon,
        quantiles: quantiles.to_vec(),
        bands,
        n_draws: n,
        excluded_nonfinite: tensor.excluded_nonfinite,
        skipped_unidentified: tensor.skipped_unidentified,
        units: tensor.units.clone(),
    })
}

/// Column header for one quantile, e.g. 0.16 → `q16`.
pub fn quantile_header(q: f64) -> String {
    format!("q{}", (q * 100.0).round() as i64)
}

/// Writes the long-format summary CSV: one row per (shock, variable,
/// horizon) with one column per quantile and the variable's unit tag.
pub fn write_irf_csv(
    path: &Path,
    summary: &IrfSummary,
    variables: &[String],
    shocks: &[String],
) -> Result<(), IrfError> {
    let k = summary.k_system;
    if variables.len() != k || shocks.len() != k {
        return Err(IrfError::DimensionMismatch {
            what: "variable/shock labels for the summary".into(),
            expected: k,
            actual: variables.len().min(shocks.len()),
        });
    }
    let units = summary.units.as_ref().ok_or_else(|| {
        IrfError::BadConfig("summary has no units; rescale before writing".into())
    })?;
    let io_err = |source| IrfError::Io {
        path: path.to_path_buf(),
        source,
    };
    let csv_err = |source| IrfError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut writer = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut header = vec!["shock".to_string(), "variable".into(), "horizon".into()];
    header.extend(summary.quantiles.iter().map(|&q| quantile_header(q)));
    header.push("unit".into());
    writer.write_record(&header).map_err(csv_err)?;
    for s in 0..k {
        for v in 0..k {
            for h in 0..=summary.horizon {
                let mut record = vec![shocks[s].clone(), variables[v].clone(), h.to_string()];
                for band in &summary.bands {
                    record.push(band[h][(v, s)].to_string());
                }
                record.push(units[v].tag().to_string());
                writer.write_record(&record).map_err(csv_err)?;
            }
        }
    }
    writer
        .into_inner()
        .map_err(|e| io_err(std::io::Error::other(e)))?
        .flush()
        .map_err(io_err)?;
    Ok(())
}

/// Sidecar metadata written next to the summary CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrfMeta {
    /// Draws the quantiles are computed over.
    pub n_draws: usize,
    pub excluded_nonfinite: usize,
    pub skipped_unidentified: usize,
    pub horizon: usize,
    pub quantiles: Vec<f64>,
    pub shocks: Vec<String>,
    pub variables: Vec<String>,
    /// Hex digest of the run inputs, for provenance.
    pub input_digest: String,
}

pub fn write_irf_meta(path: &Path, meta: &IrfMeta) -> Result<(), IrfError> {
    let body = serde_json::to_string_pretty(meta)?;
    std::fs::write(path, body.as_bytes()).map_err(|source| IrfError::Io {
        path: path.to_path_buf(),
        source,
    })
}
