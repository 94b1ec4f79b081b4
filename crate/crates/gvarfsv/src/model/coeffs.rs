//! VAR coefficients in matrix form plus the vectorization used by the priors.
//!
//! The hierarchical prior and the equation-wise regression updates both work
//! on stacked coefficient vectors. The convention is column-major vec of the
//! coefficient matrix `[alpha | A_1 .. A_P | B_1 .. B_Q (| C_1 .. C_R)]`
//! restricted to the free equations: slot index = column * n_equations + row.
//! Surprise equations (the first 2m aggregate rows) carry structural zeros and
//! are excluded from the aggregate vector entirely.

use nalgebra::{DMatrix, DVector};

use super::{ModelError, ModelSpec};

/// Coefficients of one country block: intercept, domestic lags A, foreign
/// (cross-section average) lags B, aggregate lags C.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CountryCoefficients {
    /// Intercept, length k.
    pub intercept: DVector<f64>,
    /// Domestic lag matrices, P entries of k×k.
    pub domestic: Vec<DMatrix<f64>>,
    /// Foreign-average lag matrices, Q entries of k×k.
    pub foreign: Vec<DMatrix<f64>>,
    /// Aggregate-block lag matrices, R entries of k×l.
    pub aggregate: Vec<DMatrix<f64>>,
}

/// All VAR coefficients of the system in matrix form.
///
/// The aggregate block keeps its full l-row matrices so that the stacked
/// system can be assembled directly; the first 2m rows of every aggregate
/// matrix (and of the intercept) are structural zeros.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CoefficientState {
    /// Aggregate intercept, length l (first 2m entries zero).
    pub agg_intercept: DVector<f64>,
    /// Aggregate domestic lag matrices, P entries of l×l.
    pub agg_domestic: Vec<DMatrix<f64>>,
    /// Aggregate foreign-average lag matrices, Q entries of l×k.
    pub agg_foreign: Vec<DMatrix<f64>>,
    /// Country blocks, N entries.
    pub countries: Vec<CountryCoefficients>,
}

impl CoefficientState {
    /// All-zero coefficients with the shapes implied by `spec`.
    pub fn zeros(spec: &ModelSpec) -> Self {
        let l = spec.block_len_aggregate();
        let k = spec.k_country;
        CoefficientState {
            agg_intercept: DVector::zeros(l),
            agg_domestic: vec![DMatrix::zeros(l, l); spec.lag_domestic],
            agg_foreign: vec![DMatrix::zeros(l, k); spec.lag_foreign],
            countries: vec![
                CountryCoefficients {
                    intercept: DVector::zeros(k),
                    domestic: vec![DMatrix::zeros(k, k); spec.lag_domestic],
                    foreign: vec![DMatrix::zeros(k, k); spec.lag_foreign],
                    aggregate: vec![DMatrix::zeros(k, l); spec.lag_aggregate_in_country],
                };
                spec.n_countries
            ],
        }
    }

    /// Checks that every matrix has the shape implied by `spec`.
    pub fn check_shapes(&self, spec: &ModelSpec) -> Result<(), ModelError> {
        let l = spec.block_len_aggregate();
        let k = spec.k_country;
        let dim = |what: &str, expected: usize, actual: usize| -> Result<(), ModelError> {
            if expected != actual {
                Err(ModelError::DimensionMismatch {
                    what: what.to_string(),
                    expected,
                    actual,
                })
            } else {
                Ok(())
            }
        };
        dim("aggregate intercept", l, self.agg_intercept.len())?;
        dim("aggregate domestic lag count", spec.lag_domestic, self.agg_domestic.len())?;
        dim("aggregate foreign lag count", spec.lag_foreign, self.agg_foreign.len())?;
        dim("country count", spec.n_countries, self.countries.len())?;
        for a in &self.agg_domestic {
            dim("aggregate domestic rows", l, a.nrows())?;
            dim("aggregate domestic cols", l, a.ncols())?;
        }
        for b in &self.agg_foreign {
            dim("aggregate foreign rows", l, b.nrows())?;
            dim("aggregate foreign cols", k, b.ncols())?;
        }
        for (j, c) in self.countries.iter().enumerate() {
            let tag = |part: &str| format!("country {} {part}", j + 1);
            dim(&tag("intercept"), k, c.intercept.len())?;
            dim(&tag("domestic lag count"), spec.lag_domestic, c.domestic.len())?;
            dim(&tag("foreign lag count"), spec.lag_foreign, c.foreign.len())?;
            dim(
                &tag("aggregate lag count"),
                spec.lag_aggregate_in_country,
                c.aggregate.len(),
            )?;
            for a in &c.domestic {
                dim(&tag("domestic rows"), k, a.nrows())?;
                dim(&tag("domestic cols"), k, a.ncols())?;
            }
            for b in &c.foreign {
                dim(&tag("foreign rows"), k, b.nrows())?;
                dim(&tag("foreign cols"), k, b.ncols())?;
            }
            for cm in &c.aggregate {
                dim(&tag("aggregate rows"), k, cm.nrows())?;
                dim(&tag("aggregate cols"), l, cm.ncols())?;
            }
        }
        Ok(())
    }

    /// Returns the first structural-zero slot holding a nonzero value, if any.
    pub fn mask_violation(&self, spec: &ModelSpec) -> Option<(usize, usize, f64)> {
        let masked = spec.n_surprise_rows();
        for row in 0..masked {
            let v = self.agg_intercept[row];
            if v != 0.0 {
                return Some((row, 0, v));
            }
        }
        let mut col = 1;
        for a in &self.agg_domestic {
            for c in 0..a.ncols() {
                for row in 0..masked {
                    let v = a[(row, c)];
                    if v != 0.0 {
                        return Some((row, col + c, v));
                    }
                }
            }
            col += a.ncols();
        }
        for b in &self.agg_foreign {
            for c in 0..b.ncols() {
                for row in 0..masked {
                    let v = b[(row, c)];
                    if v != 0.0 {
                        return Some((row, col + c, v));
                    }
                }
            }
            col += b.ncols();
        }
        None
    }

    /// Stacks the free aggregate coefficients into a_0 (length k_tilde * (1 + lP + kQ)).
    ///
    /// Column-major over the grid whose rows are the k_tilde non-surprise
    /// equations and whose columns are intercept, domestic lags, foreign lags.
    pub fn vectorize_aggregate(&self, spec: &ModelSpec) -> DVector<f64> {
        let kt = spec.k_aggregate_low_freq;
        let skip = spec.n_surprise_rows();
        let mut out = DVector::zeros(spec.agg_vec_len());
        let mut col = 0;
        {
            for row in 0..kt {
                out[col * kt + row] = self.agg_intercept[skip + row];
            }
            col += 1;
        }
        for a in &self.agg_domestic {
            for c in 0..a.ncols() {
                for row in 0..kt {
                    out[(col + c) * kt + row] = a[(skip + row, c)];
                }
            }
            col += a.ncols();
        }
        for b in &self.agg_foreign {
            for c in 0..b.ncols() {
                for row in 0..kt {
                    out[(col + c) * kt + row] = b[(skip + row, c)];
                }
            }
            col += b.ncols();
        }
        debug_assert_eq!(col, spec.agg_regressor_count());
        out
    }

    /// Writes a_0 back into the aggregate matrices; surprise rows stay zero.
    pub fn set_from_aggregate_vec(
        &mut self,
        spec: &ModelSpec,
        a0: &DVector<f64>,
    ) -> Result<(), ModelError> {
        if a0.len() != spec.agg_vec_len() {
            return Err(ModelError::DimensionMismatch {
                what: "aggregate coefficient vector a_0".to_string(),
                expected: spec.agg_vec_len(),
                actual: a0.len(),
            });
        }
        let kt = spec.k_aggregate_low_freq;
        let skip = spec.n_surprise_rows();
        let mut col = 0;
        {
            for row in 0..kt {
                self.agg_intercept[skip + row] = a0[col * kt + row];
            }
            col += 1;
        }
        for a in &mut self.agg_domestic {
            for c in 0..a.ncols() {
                for row in 0..kt {
                    a[(skip + row, c)] = a0[(col + c) * kt + row];
                }
            }
            col += a.ncols();
        }
        for b in &mut self.agg_foreign {
            for c in 0..b.ncols() {
                for row in 0..kt {
                    b[(skip + row, c)] = a0[(col + c) * kt + row];
                }
            }
            col += b.ncols();
        }
        Ok(())
    }

    /// Stacks country `j` (1-based) into a_j (length k * (1 + k(P+Q) + lR)).
    pub fn vectorize_country(&self, spec: &ModelSpec, j: usize) -> DVector<f64> {
        let k = spec.k_country;
        let cb = &self.countries[j - 1];
        let mut out = DVector::zeros(spec.country_vec_len());
        let mut col = 0;
        {
            for row in 0..k {
                out[col * k + row] = cb.intercept[row];
            }
            col += 1;
        }
        for group in [&cb.domestic, &cb.foreign, &cb.aggregate] {
            for m in group {
                for c in 0..m.ncols() {
                    for row in 0..k {
                        out[(col + c) * k + row] = m[(row, c)];
                    }
                }
                col += m.ncols();
            }
        }
        debug_assert_eq!(col, spec.country_regressor_count());
        out
    }

    /// Writes a_j back into country `j` (1-based).
    pub fn set_from_country_vec(
        &mut self,
        spec: &ModelSpec,
        j: usize,
        aj: &DVector<f64>,
    ) -> Result<(), ModelError> {
        if aj.len() != spec.country_vec_len() {
            return Err(ModelError::DimensionMismatch {
                what: format!("country {j} coefficient vector"),
                expected: spec.country_vec_len(),
                actual: aj.len(),
            });
        }
        let k = spec.k_country;
        let cb = &mut self.countries[j - 1];
        let mut col = 0;
        {
            for row in 0..k {
                cb.intercept[row] = aj[col * k + row];
            }
            col += 1;
        }
        for group in [&mut cb.domestic, &mut cb.foreign, &mut cb.aggregate] {
            for m in group {
                for c in 0..m.ncols() {
                    for row in 0..k {
                        m[(row, c)] = aj[(col + c) * k + row];
                    }
                }
                col += m.ncols();
            }
        }
        Ok(())
    }
}
