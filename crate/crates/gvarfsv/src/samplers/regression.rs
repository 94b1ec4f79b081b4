//! Heteroscedastic Bayesian regression — the workhorse behind the
//! equation-by-equation coefficient draws and the loadings step.
//!
//! Model: y = Xβ + e, e_t ~ N(0, λ_t) with known per-period variances λ_t,
//! prior β ~ N(m, diag(v)). Posterior: N(μ̄, V̄) with
//! V̄ = (X'Λ⁻¹X + V⁻¹)⁻¹ and μ̄ = V̄(X'Λ⁻¹y + V⁻¹m), evaluated through one
//! Cholesky factorization of the posterior precision.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use super::SamplerError;

/// Factorized Gaussian posterior of one regression equation.
///
/// Kept as (mean, precision Cholesky) so sampling is a triangular solve and
/// tests can recover the exact covariance.
pub struct RegressionPosterior {
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl RegressionPosterior {
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Dense posterior covariance V̄ = (LL')⁻¹ — for oracles and diagnostics.
    pub fn covariance(&self) -> DMatrix<f64> {
        let j = self.mean.len();
        self.chol.solve(&DMatrix::identity(j, j))
    }

    /// μ̄ + L⁻ᵀ z with z standard normal: a draw from N(μ̄, V̄).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let j = self.mean.len();
        let z = DVector::from_fn(j, |_, _| rng.sample::<f64, _>(StandardNormal));
        let u = self
            .chol
            .l()
            .tr_solve_lower_triangular(&z)
            .expect("Cholesky factor is nonsingular by construction");
        &self.mean + u
    }
}

/// Computes the posterior moments of one heteroscedastic regression.
///
/// `error_vols` are per-period error variances (strictly positive);
/// `prior_var` is the diagonal of the prior covariance. Structural-zero
/// columns must be removed from `x` before the call. Errors if the posterior
/// precision fails the Cholesky factorization (degenerate regressors).
pub fn regression_posterior(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    prior_mean: &DVector<f64>,
    prior_var: &DVector<f64>,
    error_vols: &[f64],
) -> Result<RegressionPosterior, SamplerError> {
    let t = y.len();
    let j = x.ncols();
    if x.nrows() != t {
        return Err(SamplerError::DimensionMismatch {
            what: "regressor rows".to_string(),
            expected: t,
            actual: x.nrows(),
        });
    }
    if prior_mean.len() != j || prior_var.len() != j {
        return Err(SamplerError::DimensionMismatch {
            what: "prior moments".to_string(),
            expected: j,
            actual: prior_mean.len().min(prior_var.len()),
        });
    }
    if error_vols.len() != t {
        return Err(SamplerError::DimensionMismatch {
            what: "error variance path".to_string(),
            expected: t,
            actual: error_vols.len(),
        });
    }
    for (i, &v) in error_vols.iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(SamplerError::BadVariance {
                what: "error variances".to_string(),
                index: i,
                value: v,
            });
        }
    }
    for (i, &v) in prior_var.iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(SamplerError::BadVariance {
                what: "prior variances".to_string(),
                index: i,
                value: v,
            });
        }
    }

    // Whiten rows by 1/√λ_t, then the precision is X_w'X_w + V⁻¹.
    let mut xw = x.clone();
    let mut yw = y.clone();
    for r in 0..t {
        let s = 1.0 / error_vols[r].sqrt();
        yw[r] *= s;
        for c in 0..j {
            xw[(r, c)] *= s;
        }
    }
    let mut precision = xw.transpose() * &xw;
    let mut rhs = xw.transpose() * yw;
    for c in 0..j {
        precision[(c, c)] += 1.0 / prior_var[c];
        rhs[c] += prior_mean[c] / prior_var[c];
    }
    let chol = Cholesky::new(precision).ok_or_else(|| SamplerError::NonSpd {
        what: "regression posterior precision".to_string(),
    })?;
    let mean = chol.solve(&rhs);
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(SamplerError::NonFinite {
            what: "regression posterior mean".to_string(),
        });
    }
    Ok(RegressionPosterior { mean, chol })
}

/// One coefficient draw from the regression posterior.
pub fn draw_var_equation<R: Rng + ?Sized>(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    prior_mean: &DVector<f64>,
    prior_var: &DVector<f64>,
    error_vols: &[f64],
    rng: &mut R,
) -> Result<DVector<f64>, SamplerError> {
    Ok(regression_posterior(y, x, prior_mean, prior_var, error_vols)?.sample(rng))
}
