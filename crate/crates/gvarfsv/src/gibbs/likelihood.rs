//! Gaussian log likelihood of the VAR residuals under the factor structure.
//!
//! Each period contributes ln N(ε_t; 0, Ξ_t) with Ξ_t = L Σ_t L' + Ω_t. The
//! deviance −2·ln L feeds the DIC model comparison; evaluating it costs a
//! K×K Cholesky per period, so chains only track it when asked to.

use nalgebra::{Cholesky, DMatrix};

use super::GibbsError;

const LN_2PI: f64 = 1.8378770664093453;

/// Log likelihood of K×T residuals given loadings and per-period variances.
///
/// `factor_var` is F×T and `idio_var` K×T, both on the variance (not log)
/// scale. Errors if any period's covariance fails its Cholesky factorization.
pub fn gaussian_log_likelihood(
    eps: &DMatrix<f64>,
    loadings: &DMatrix<f64>,
    factor_var: &DMatrix<f64>,
    idio_var: &DMatrix<f64>,
) -> Result<f64, GibbsError> {
    let (k, t_len) = eps.shape();
    let f = loadings.ncols();
    if loadings.nrows() != k || factor_var.shape() != (f, t_len) || idio_var.shape() != (k, t_len)
    {
        return Err(GibbsError::BadConfig(format!(
            "likelihood inputs disagree: eps {k}x{t_len}, loadings {}x{f}, \
             factor variances {}x{}, idiosyncratic variances {}x{}",
            loadings.nrows(),
            factor_var.nrows(),
            factor_var.ncols(),
            idio_var.nrows(),
            idio_var.ncols(),
        )));
    }
    let mut total = 0.0;
    for t in 0..t_len {
        let mut scaled = loadings.clone();
        for c in 0..f {
            let v = factor_var[(c, t)];
            for r in 0..k {
                scaled[(r, c)] *= v;
            }
        }
        let mut xi = scaled * loadings.transpose();
        for r in 0..k {
            xi[(r, r)] += idio_var[(r, t)];
        }
        let chol = Cholesky::new(xi).ok_or(GibbsError::NonSpdCovariance { period: t })?;
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let z = chol
            .l()
            .solve_lower_triangular(&eps.column(t))
            .expect("Cholesky factor is nonsingular by construction");
        total -= 0.5 * (k as f64 * LN_2PI + log_det + z.norm_squared());
    }
    if !total.is_finite() {
        return Err(GibbsError::NonFinite("log likelihood".to_string()));
    }
    Ok(total)
}
