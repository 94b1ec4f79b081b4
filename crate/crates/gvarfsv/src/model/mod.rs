//! System layout: dimensions, block offsets, structural-zero masks, weights.
//!
//! The stacked vector orders blocks as `(m_US, m_EA, ytilde_0, y_1, ..., y_N)`:
//! `2m` surprise rows, `k_tilde` low-frequency aggregate rows (together the
//! aggregate block of length `l = 2m + k_tilde`), then `k` rows per country,
//! for a system size of `K = l + k*N`. This ordering is what the Cholesky-based
//! identification step requires, so every module shares it.

mod assemble;
mod coeffs;

pub use assemble::{
    assemble_stacked_system, build_cross_section_averages, companion_matrix, spectral_radius,
    StackedSystem,
};
pub use coeffs::{CoefficientState, CountryCoefficients};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Errors from layout validation and system assembly.
#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("dimension mismatch in {what}: expected {expected}, found {actual}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },
    #[error("weight row {row} sums to {sum} (must be 1 within 1e-12, or all zero)")]
    WeightRowSum { row: usize, sum: f64 },
    #[error("negative or non-finite weight at row {row}, country {col}: {value}")]
    BadWeight { row: usize, col: usize, value: f64 },
    #[error("country {country} has nonzero self-weight {value}")]
    SelfWeight { country: usize, value: f64 },
    #[error("structural zero violated in {what} at row {row}, col {col}: {value}")]
    MaskViolated {
        what: String,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("invalid model spec: {0:?}")]
    InvalidSpec(Vec<SpecViolation>),
}

/// One violated `ModelSpec` invariant; `validate_spec` returns all of them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecViolation {
    /// Field or formula the violation refers to.
    pub field: String,
    pub message: String,
}

/// Dimensions and lag orders of one GVAR system.
///
/// `l` and `k_system` are derived quantities (`l = 2m + k_tilde`,
/// `K = l + k*N`); they may be stored redundantly in serialized specs, in
/// which case [`validate_spec`] checks them against the formulas.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Number of countries, N.
    pub n_countries: usize,
    /// Variables per country, k.
    pub k_country: usize,
    /// Surprise instruments per region, m (the system carries two regions).
    pub m_surprise: usize,
    /// Low-frequency aggregate variables, k_tilde.
    pub k_aggregate_low_freq: usize,
    /// Domestic lag order, P.
    pub lag_domestic: usize,
    /// Foreign (cross-section average) lag order, Q.
    pub lag_foreign: usize,
    /// Aggregate-block lag order inside country equations, R.
    pub lag_aggregate_in_country: usize,
    /// Number of latent volatility factors, F.
    pub n_factors: usize,
    /// Optional stored copy of l = 2m + k_tilde.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    /// Optional stored copy of K = l + k*N.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_system: Option<usize>,
}

impl ModelSpec {
    /// Number of surprise rows, 2m.
    pub fn n_surprise_rows(&self) -> usize {
        2 * self.m_surprise
    }

    /// Aggregate block length l = 2m + k_tilde.
    pub fn block_len_aggregate(&self) -> usize {
        2 * self.m_surprise + self.k_aggregate_low_freq
    }

    /// Full system size K = l + k*N.
    pub fn system_size(&self) -> usize {
        self.block_len_aggregate() + self.k_country * self.n_countries
    }

    /// Deepest lag across P, Q, R; all stacked lag matrices are stored at
    /// this depth with zero padding.
    pub fn max_lag(&self) -> usize {
        self.lag_domestic
            .max(self.lag_foreign)
            .max(self.lag_aggregate_in_country)
    }

    /// Regressors per aggregate (non-surprise) equation:
    /// intercept + l per domestic lag + k per foreign lag.
    pub fn agg_regressor_count(&self) -> usize {
        1 + self.block_len_aggregate() * self.lag_domestic + self.k_country * self.lag_foreign
    }

    /// Regressors per country equation:
    /// intercept + k per domestic and foreign lag + l per aggregate lag.
    pub fn country_regressor_count(&self) -> usize {
        1 + self.k_country * (self.lag_domestic + self.lag_foreign)
            + self.block_len_aggregate() * self.lag_aggregate_in_country
    }

    /// Length of the vectorized free aggregate coefficients a_0
    /// (k_tilde equations × regressor count).
    pub fn agg_vec_len(&self) -> usize {
        self.k_aggregate_low_freq * self.agg_regressor_count()
    }

    /// Length of one vectorized country coefficient vector a_j.
    pub fn country_vec_len(&self) -> usize {
        self.k_country * self.country_regressor_count()
    }

    /// First stacked row of country `j` (1-based).
    pub fn country_block_start(&self, j: usize) -> usize {
        debug_assert!(j >= 1 && j <= self.n_countries);
        self.block_len_aggregate() + (j - 1) * self.k_country
    }

    /// Copy with the derived `l` and `k_system` fields filled in.
    pub fn with_derived(mut self) -> Self {
        self.l = Some(self.block_len_aggregate());
        self.k_system = Some(self.system_size());
        self
    }
}

/// Checks every `ModelSpec` invariant, returning all violations.
pub fn validate_spec(spec: &ModelSpec) -> Vec<SpecViolation> {
    let mut out = Vec::new();
    let mut require_positive = |field: &str, value: usize| {
        if value == 0 {
            out.push(SpecViolation {
                field: field.to_string(),
                message: format!("{field} must be >= 1, got 0"),
            });
        }
    };
    require_positive("n_countries", spec.n_countries);
    require_positive("k_country", spec.k_country);
    require_positive("m_surprise", spec.m_surprise);
    require_positive("k_aggregate_low_freq", spec.k_aggregate_low_freq);
    require_positive("lag_domestic", spec.lag_domestic);
    require_positive("lag_foreign", spec.lag_foreign);
    require_positive("lag_aggregate_in_country", spec.lag_aggregate_in_country);
    require_positive("n_factors", spec.n_factors);

    if spec.n_factors > spec.system_size() {
        out.push(SpecViolation {
            field: "n_factors".to_string(),
            message: format!(
                "factor count exceeds system size: F={} > K={}",
                spec.n_factors,
                spec.system_size()
            ),
        });
    }
    if let Some(l) = spec.l {
        if l != spec.block_len_aggregate() {
            out.push(SpecViolation {
                field: "l".to_string(),
                message: format!(
                    "stored l={l} violates l = 2m + k_tilde = {}",
                    spec.block_len_aggregate()
                ),
            });
        }
    }
    if let Some(k_system) = spec.k_system {
        if k_system != spec.system_size() {
            out.push(SpecViolation {
                field: "k_system".to_string(),
                message: format!(
                    "stored K={k_system} violates K = l + k*N = {}",
                    spec.system_size()
                ),
            });
        }
    }
    out
}

/// Cross-section weights: row 0 holds the aggregate block's weights over
/// countries, rows 1..=N each country's weights over the other countries.
///
/// Rows are row-stochastic within 1e-12. A row may instead be entirely zero,
/// which encodes a block with no partners (its cross-section average is zero);
/// this keeps degenerate single-country systems expressible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DMatrix<f64>", into = "DMatrix<f64>")]
pub struct WeightMatrix {
    w: DMatrix<f64>,
}

impl TryFrom<DMatrix<f64>> for WeightMatrix {
    type Error = ModelError;

    fn try_from(w: DMatrix<f64>) -> Result<Self, ModelError> {
        Self::from_matrix(w)
    }
}

impl From<WeightMatrix> for DMatrix<f64> {
    fn from(value: WeightMatrix) -> Self {
        value.w
    }
}

impl WeightMatrix {
    /// Validates and wraps an (N+1)×N weight matrix.
    pub fn from_matrix(w: DMatrix<f64>) -> Result<Self, ModelError> {
        let n = w.ncols();
        if n == 0 || w.nrows() != n + 1 {
            return Err(ModelError::DimensionMismatch {
                what: "weight matrix rows (need N+1 x N)".to_string(),
                expected: n + 1,
                actual: w.nrows(),
            });
        }
        for i in 0..=n {
            let mut sum = 0.0;
            for j in 1..=n {
                let v = w[(i, j - 1)];
                if !v.is_finite() || v < 0.0 {
                    return Err(ModelError::BadWeight {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
                sum += v;
            }
            if i >= 1 {
                let self_weight = w[(i, i - 1)];
                if self_weight != 0.0 {
                    return Err(ModelError::SelfWeight {
                        country: i,
                        value: self_weight,
                    });
                }
            }
            if sum != 0.0 && (sum - 1.0).abs() > 1e-12 {
                return Err(ModelError::WeightRowSum { row: i, sum });
            }
        }
        Ok(WeightMatrix { w })
    }

    /// Combines a 1×N aggregate row with an N×N country block.
    pub fn assemble(agg_row: &DMatrix<f64>, country: &DMatrix<f64>) -> Result<Self, ModelError> {
        if agg_row.nrows() != 1 || agg_row.ncols() != country.ncols() {
            return Err(ModelError::DimensionMismatch {
                what: "aggregate weight row".to_string(),
                expected: country.ncols(),
                actual: agg_row.ncols(),
            });
        }
        if country.nrows() != country.ncols() {
            return Err(ModelError::DimensionMismatch {
                what: "country weight block (must be square)".to_string(),
                expected: country.ncols(),
                actual: country.nrows(),
            });
        }
        let n = country.ncols();
        let mut w = DMatrix::zeros(n + 1, n);
        w.row_mut(0).copy_from(&agg_row.row(0));
        for i in 0..n {
            w.row_mut(i + 1).copy_from(&country.row(i));
        }
        Self::from_matrix(w)
    }

    pub fn n_countries(&self) -> usize {
        self.w.ncols()
    }

    /// Weight of country `j` (1-based) in the average for block `i` (0 = aggregate).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j - 1)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.w
    }
}

/// Structural-zero mask over the aggregate block's coefficient grid.
///
/// Rows are the l aggregate equations, columns the aggregate regressors
/// (intercept, then P lags of the aggregate block, then Q lags of the
/// cross-section average). The first 2m rows — the surprise equations — are
/// masked in full: surprises are unpredictable by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ZeroMask {
    n_masked_rows: usize,
    rows: usize,
    cols: usize,
}

impl ZeroMask {
    pub fn for_spec(spec: &ModelSpec) -> Self {
        ZeroMask {
            n_masked_rows: spec.n_surprise_rows(),
            rows: spec.block_len_aggregate(),
            cols: spec.agg_regressor_count(),
        }
    }

    /// Whether coefficient slot (equation `row`, regressor `col`) is a structural zero.
    pub fn is_masked(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.rows && col < self.cols);
        let _ = col;
        row < self.n_masked_rows
    }

    pub fn n_masked_rows(&self) -> usize {
        self.n_masked_rows
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_spec() -> ModelSpec {
        ModelSpec {
            n_countries: 17,
            k_country: 5,
            m_surprise: 2,
            k_aggregate_low_freq: 12,
            lag_domestic: 4,
            lag_foreign: 4,
            lag_aggregate_in_country: 4,
            n_factors: 10,
            l: None,
            k_system: None,
        }
    }

    #[test]
    fn reference_configuration_validates_with_k_101() {
        let spec = paper_spec().with_derived();
        assert!(validate_spec(&spec).is_empty());
        assert_eq!(spec.block_len_aggregate(), 16);
        assert_eq!(spec.system_size(), 101);
        assert_eq!(spec.k_system, Some(101));
    }

    #[test]
    fn factor_count_above_system_size_is_flagged() {
        let mut spec = paper_spec();
        spec.n_factors = spec.system_size() + 1;
        let diags = validate_spec(&spec);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("factor count exceeds system size"));
    }

    #[test]
    fn stored_l_mismatch_names_the_formula() {
        let mut spec = paper_spec();
        spec.l = Some(7);
        let diags = validate_spec(&spec);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].field, "l");
        assert!(diags[0].message.contains("l = 2m + k_tilde"));
    }

    #[test]
    fn zero_counts_are_all_reported() {
        let mut spec = paper_spec();
        spec.k_country = 0;
        spec.lag_foreign = 0;
        let diags = validate_spec(&spec);
        assert_eq!(diags.len(), 2);
    }

    #[test]
    fn spec_json_round_trip_keeps_field_names() {
        let spec = paper_spec().with_derived();
        let json = serde_json::to_string(&spec).unwrap();
        for field in [
            "n_countries",
            "k_country",
            "m_surprise",
            "k_aggregate_low_freq",
            "lag_domestic",
            "lag_foreign",
            "lag_aggregate_in_country",
            "n_factors",
            "k_system",
        ] {
            assert!(json.contains(field), "missing field {field} in {json}");
        }
        let back: ModelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn weight_rows_must_be_stochastic_or_empty() {
        // 2 countries: row 0 = aggregate, rows 1-2 = countries.
        let ok = DMatrix::from_row_slice(3, 2, &[0.4, 0.6, 0.0, 1.0, 1.0, 0.0]);
        assert!(WeightMatrix::from_matrix(ok).is_ok());

        let bad_sum = DMatrix::from_row_slice(3, 2, &[0.4, 0.7, 0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(
            WeightMatrix::from_matrix(bad_sum),
            Err(ModelError::WeightRowSum { row: 0, .. })
        ));

        let self_weight = DMatrix::from_row_slice(3, 2, &[0.4, 0.6, 0.5, 0.5, 1.0, 0.0]);
        assert!(matches!(
            WeightMatrix::from_matrix(self_weight),
            Err(ModelError::SelfWeight { country: 1, .. })
        ));

        // All-zero country row encodes "no partners".
        let degenerate = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        assert!(WeightMatrix::from_matrix(degenerate).is_ok());
    }

    #[test]
    fn mask_covers_exactly_the_surprise_rows() {
        let spec = paper_spec();
        let mask = ZeroMask::for_spec(&spec);
        let (rows, cols) = mask.grid();
        assert_eq!(rows, 16);
        assert_eq!(cols, spec.agg_regressor_count());
        for row in 0..rows {
            for col in 0..cols {
                assert_eq!(mask.is_masked(row, col), row < 4);
            }
        }
    }
}
