//! Factor stochastic volatility: common factors with time-varying variances
//! plus idiosyncratic stochastic-volatility errors.
//!
//! The reduced-form shock of the stacked system is
//!
//!   ε_t = L f_t + u_t,   f_t ~ N(0, Σ_t),   u_t ~ N(0, Ω_t),
//!
//! with Σ_t = diag(exp σ_{1t}, …) and Ω_t = diag(exp ω_{1t}, …) following
//! independent log-AR(1) processes. This module owns the state container and
//! the conditional draws for loadings, factors, and every volatility path;
//! surprise rows keep constant idiosyncratic variance (their monthly
//! aggregates have no meaningful intra-month volatility clustering to fit).

mod ffbs;
mod mixture;
mod params;

pub use ffbs::ffbs_given_indicators;
pub use mixture::{draw_indicators, MIX_MEAN, MIX_P, MIX_VAR};
pub use params::{draw_phi, draw_sigma_sq, draw_theta};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::exec::{self, ExecMode};
use crate::rng::{derive_rng, Stream};
use crate::samplers::{regression_posterior, SamplerError};

/// Prior variance of each factor loading.
pub const LOADING_PRIOR_VAR: f64 = 0.1;
/// Inverse-gamma prior (shape, rate) for constant idiosyncratic variances.
const CONST_VAR_PRIOR: (f64, f64) = (0.01, 0.01);

/// AR(1) parameters of one log-volatility process.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SvParams {
    /// Unconditional mean θ of the log variance.
    pub theta: f64,
    /// Persistence φ, |φ| < 1.
    pub phi: f64,
    /// Innovation standard deviation ς > 0.
    pub sigma: f64,
}

impl SvParams {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if !self.theta.is_finite() || !self.phi.is_finite() || !self.sigma.is_finite() {
            return Err(SamplerError::NonFinite {
                what: "volatility parameters".into(),
            });
        }
        if self.phi.abs() >= 1.0 {
            return Err(SamplerError::BadVariance {
                what: "volatility persistence (|phi| must be < 1)".into(),
                index: 0,
                value: self.phi,
            });
        }
        if !(self.sigma > 0.0) {
            return Err(SamplerError::BadVariance {
                what: "volatility innovation sd".into(),
                index: 0,
                value: self.sigma,
            });
        }
        Ok(())
    }
}

impl Default for SvParams {
    fn default() -> Self {
        SvParams {
            theta: 0.0,
            phi: 0.95,
            sigma: 0.2,
        }
    }
}

/// Full factor-SV state: loadings, factor paths, log-variance paths, and the
/// per-series AR(1) parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct VolatilityState {
    /// K×F loading matrix.
    pub loadings: DMatrix<f64>,
    /// F×T factor paths (column t = f_t).
    pub factors: DMatrix<f64>,
    /// F×T log variances of the factors.
    pub factor_logvar: DMatrix<f64>,
    /// K×T log variances of the idiosyncratic errors.
    pub idio_logvar: DMatrix<f64>,
    /// AR(1) parameters, one per factor.
    pub factor_params: Vec<SvParams>,
    /// AR(1) parameters, one per series (ignored for flagged series).
    pub idio_params: Vec<SvParams>,
    /// Series whose idiosyncratic variance is constant over time.
    pub constant_idio: Vec<bool>,
}

impl VolatilityState {
    /// Neutral starting state: zero loadings and factors, unit variances.
    /// The first `n_constant` series are flagged constant-variance.
    pub fn init(k_system: usize, n_factors: usize, t_len: usize, n_constant: usize) -> Self {
        VolatilityState {
            loadings: DMatrix::zeros(k_system, n_factors),
            factors: DMatrix::zeros(n_factors, t_len),
            factor_logvar: DMatrix::zeros(n_factors, t_len),
            idio_logvar: DMatrix::zeros(k_system, t_len),
            factor_params: vec![SvParams::default(); n_factors],
            idio_params: vec![SvParams::default(); k_system],
            constant_idio: (0..k_system).map(|i| i < n_constant).collect(),
        }
    }

    pub fn k_system(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn n_factors(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn t_len(&self) -> usize {
        self.idio_logvar.ncols()
    }

    pub fn check_shapes(&self) -> Result<(), SamplerError> {
        let (k, f, t) = (self.k_system(), self.n_factors(), self.t_len());
        let checks = [
            ("factor paths", self.factors.shape(), (f, t)),
            ("factor log variances", self.factor_logvar.shape(), (f, t)),
            ("idiosyncratic log variances", self.idio_logvar.shape(), (k, t)),
            ("factor parameters", (self.factor_params.len(), 0), (f, 0)),
            ("idiosyncratic parameters", (self.idio_params.len(), 0), (k, 0)),
            ("constant-variance flags", (self.constant_idio.len(), 0), (k, 0)),
        ];
        for (what, actual, expected) in checks {
            if actual != expected {
                return Err(SamplerError::DimensionMismatch {
                    what: what.into(),
                    expected: expected.0 * expected.1.max(1),
                    actual: actual.0 * actual.1.max(1),
                });
            }
        }
        Ok(())
    }
}

/// One full stochastic-volatility update for a single series: mixture
/// indicators given the current path, an exact FFBS redraw of the path, then
/// the (θ, φ, ς) conditionals on the new path.
pub fn draw_sv_path<R: Rng + ?Sized>(
    shocks: &[f64],
    h: &[f64],
    params: &SvParams,
    rng: &mut R,
) -> Result<(Vec<f64>, SvParams), SamplerError> {
    let t_len = shocks.len();
    if t_len < 2 || h.len() != t_len {
        return Err(SamplerError::DimensionMismatch {
            what: "volatility series".into(),
            expected: t_len.max(2),
            actual: h.len(),
        });
    }
    // Offset keeps the log transform finite when a shock is exactly zero;
    // it is tied to the series scale so it never distorts typical values.
    let mean = shocks.iter().sum::<f64>() / t_len as f64;
    let var = shocks.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / t_len as f64;
    let offset = (1e-8 * var).max(1e-300);
    let ystar: Vec<f64> = shocks.iter().map(|s| (s * s + offset).ln()).collect();

    let indicators = draw_indicators(&ystar, h, rng)?;
    let new_h = ffbs_given_indicators(&ystar, &indicators, params, rng)?;
    let mut new_params = *params;
    new_params.phi = draw_phi(&new_h, &new_params, rng);
    new_params.theta = draw_theta(&new_h, &new_params, rng);
    new_params.sigma = draw_sigma_sq(&new_h, &new_params, rng)?.sqrt();
    new_params.validate()?;
    Ok((new_h, new_params))
}

/// Conjugate variance update for a flagged constant-variance series:
/// v ~ IG(a₀ + T/2, b₀ + Σ shock²/2). Returns v.
pub fn update_constant_variance<R: Rng + ?Sized>(shocks: &[f64], rng: &mut R) -> f64 {
    let (a0, b0) = CONST_VAR_PRIOR;
    let shape = a0 + shocks.len() as f64 / 2.0;
    let rate = b0 + shocks.iter().map(|s| s * s).sum::<f64>() / 2.0;
    let g = Gamma::new(shape, 1.0 / rate)
        .expect("constant-variance posterior parameters are positive")
        .sample(rng);
    1.0 / g
}

/// Updates every volatility path and its parameters: the F factor series
/// (shocks = the factor draws themselves) and the K idiosyncratic series
/// (shocks = residuals net of the common component). Series are independent
/// given the conditioning state, so they are mapped in parallel with one
/// derived RNG stream each.
pub fn update_volatility_paths(
    state: &mut VolatilityState,
    idio_resid: &DMatrix<f64>,
    seed: u64,
    sweep: u64,
    mode: ExecMode,
) -> Result<(), SamplerError> {
    state.check_shapes()?;
    let (k, f, t_len) = (state.k_system(), state.n_factors(), state.t_len());
    if idio_resid.shape() != (k, t_len) {
        return Err(SamplerError::DimensionMismatch {
            what: "idiosyncratic residual matrix".into(),
            expected: k * t_len,
            actual: idio_resid.nrows() * idio_resid.ncols(),
        });
    }

    struct Unit {
        shocks: Vec<f64>,
        h: Vec<f64>,
        params: SvParams,
        constant: bool,
    }
    let mut units = Vec::with_capacity(f + k);
    for i in 0..f {
        units.push(Unit {
            shocks: state.factors.row(i).iter().copied().collect(),
            h: state.factor_logvar.row(i).iter().copied().collect(),
            params: state.factor_params[i],
            constant: false,
        });
    }
    for j in 0..k {
        units.push(Unit {
            shocks: idio_resid.row(j).iter().copied().collect(),
            h: state.idio_logvar.row(j).iter().copied().collect(),
            params: state.idio_params[j],
            constant: state.constant_idio[j],
        });
    }

    let results = exec::try_map_indexed(units.len(), mode, |u| {
        let mut rng = derive_rng(seed, Stream::Volatility, &[sweep, u as u64]);
        let unit = &units[u];
        if unit.constant {
            let v = update_constant_variance(&unit.shocks, &mut rng);
            Ok((vec![v.ln(); t_len], None))
        } else {
            let (path, p) = draw_sv_path(&unit.shocks, &unit.h, &unit.params, &mut rng)?;
            Ok((path, Some(p)))
        }
    })?;

    for (u, (path, p)) in results.into_iter().enumerate() {
        if u < f {
            for (t, v) in path.into_iter().enumerate() {
                state.factor_logvar[(u, t)] = v;
            }
            state.factor_params[u] = p.expect("factor series always update parameters");
        } else {
            let j = u - f;
            for (t, v) in path.into_iter().enumerate() {
                state.idio_logvar[(j, t)] = v;
            }
            if let Some(p) = p {
                state.idio_params[j] = p;
            }
        }
    }
    Ok(())
}

/// Posterior of one row of loadings given factors and that series'
/// idiosyncratic variance path (a plain heteroscedastic regression with
/// prior N(0, [`LOADING_PRIOR_VAR`]·I)).
pub fn loadings_row_posterior(
    resid_row: &DVector<f64>,
    factors: &DMatrix<f64>,
    idio_logvar_row: &[f64],
) -> Result<crate::samplers::RegressionPosterior, SamplerError> {
    let f = factors.nrows();
    let design = factors.transpose();
    let vols: Vec<f64> = idio_logvar_row.iter().map(|w| w.exp()).collect();
    regression_posterior(
        resid_row,
        &design,
        &DVector::zeros(f),
        &DVector::from_element(f, LOADING_PRIOR_VAR),
        &vols,
    )
}

/// Draws the full K×F loading matrix, one independent row per series.
pub fn draw_loadings(
    resid: &DMatrix<f64>,
    factors: &DMatrix<f64>,
    idio_logvar: &DMatrix<f64>,
    seed: u64,
    sweep: u64,
    mode: ExecMode,
) -> Result<DMatrix<f64>, SamplerError> {
    let (k, t_len) = resid.shape();
    let f = factors.nrows();
    if factors.ncols() != t_len || idio_logvar.shape() != (k, t_len) {
        return Err(SamplerError::DimensionMismatch {
            what: "loadings inputs".into(),
            expected: t_len,
            actual: factors.ncols(),
        });
    }
    if f == 0 {
        return Ok(DMatrix::zeros(k, 0));
    }
    let rows = exec::try_map_indexed(k, mode, |i| {
        let mut rng = derive_rng(seed, Stream::Loadings, &[sweep, i as u64]);
        let y = resid.row(i).transpose();
        let omega: Vec<f64> = idio_logvar.row(i).iter().copied().collect();
        Ok(loadings_row_posterior(&y, factors, &omega)?.sample(&mut rng))
    })?;
    Ok(DMatrix::from_fn(k, f, |i, c| rows[i][c]))
}

/// Factorized Gaussian posterior of one period's factor vector.
pub struct FactorPosterior {
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl FactorPosterior {
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Dense B_t = (Σ_t⁻¹ + L'Ω_t⁻¹L)⁻¹ — for oracles and diagnostics.
    pub fn covariance(&self) -> DMatrix<f64> {
        let f = self.mean.len();
        self.chol.solve(&DMatrix::identity(f, f))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let f = self.mean.len();
        let z = DVector::from_fn(f, |_, _| rng.sample::<f64, _>(StandardNormal));
        let u = self
            .chol
            .l()
            .tr_solve_lower_triangular(&z)
            .expect("Cholesky factor is nonsingular by construction");
        &self.mean + u
    }
}

/// Moments of f_t | ε_t: precision Σ_t⁻¹ + L'Ω_t⁻¹L, mean B_t L'Ω_t⁻¹ ε_t.
pub fn factor_posterior(
    eps_t: &DVector<f64>,
    loadings: &DMatrix<f64>,
    factor_logvar_t: &[f64],
    idio_logvar_t: &[f64],
) -> Result<FactorPosterior, SamplerError> {
    let (k, f) = loadings.shape();
    if eps_t.len() != k || factor_logvar_t.len() != f || idio_logvar_t.len() != k {
        return Err(SamplerError::DimensionMismatch {
            what: "factor posterior inputs".into(),
            expected: k + f,
            actual: eps_t.len() + factor_logvar_t.len(),
        });
    }
    // L'Ω⁻¹ shared by precision and mean.
    let mut lt_om = loadings.transpose();
    for i in 0..k {
        let w = (-idio_logvar_t[i]).exp();
        for r in 0..f {
            lt_om[(r, i)] *= w;
        }
    }
    let mut precision = &lt_om * loadings;
    for r in 0..f {
        precision[(r, r)] += (-factor_logvar_t[r]).exp();
    }
    let chol = Cholesky::new(precision).ok_or_else(|| SamplerError::NonSpd {
        what: "factor posterior precision".into(),
    })?;
    let mean = chol.solve(&(lt_om * eps_t));
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(SamplerError::NonFinite {
            what: "factor posterior mean".into(),
        });
    }
    Ok(FactorPosterior { mean, chol })
}

/// Draws all factor columns f_1..f_T; periods are conditionally independent
/// and are mapped in parallel with one derived RNG stream each.
pub fn draw_factors(
    eps: &DMatrix<f64>,
    loadings: &DMatrix<f64>,
    factor_logvar: &DMatrix<f64>,
    idio_logvar: &DMatrix<f64>,
    seed: u64,
    sweep: u64,
    mode: ExecMode,
) -> Result<DMatrix<f64>, SamplerError> {
    let (k, t_len) = eps.shape();
    let f = loadings.ncols();
    if loadings.nrows() != k
        || factor_logvar.shape() != (f, t_len)
        || idio_logvar.shape() != (k, t_len)
    {
        return Err(SamplerError::DimensionMismatch {
            what: "factor draw inputs".into(),
            expected: k * t_len,
            actual: idio_logvar.nrows() * idio_logvar.ncols(),
        });
    }
    let cols = exec::try_map_indexed(t_len, mode, |t| {
        let mut rng = derive_rng(seed, Stream::Factors, &[sweep, t as u64]);
        let eps_t = eps.column(t).into_owned();
        let sigma: Vec<f64> = factor_logvar.column(t).iter().copied().collect();
        let omega: Vec<f64> = idio_logvar.column(t).iter().copied().collect();
        Ok(factor_posterior(&eps_t, loadings, &sigma, &omega)?.sample(&mut rng))
    })?;
    Ok(DMatrix::from_fn(f, t_len, |r, t| cols[t][r]))
}

/// Period-t reduced-form covariance Ξ_t = L Σ_t L' + Ω_t.
pub fn xi_at(
    loadings: &DMatrix<f64>,
    factor_logvar_t: &[f64],
    idio_logvar_t: &[f64],
) -> DMatrix<f64> {
    let (k, f) = loadings.shape();
    let mut scaled = loadings.clone();
    for c in 0..f {
        let s = factor_logvar_t[c].exp();
        for r in 0..k {
            scaled[(r, c)] *= s;
        }
    }
    let mut xi = scaled * loadings.transpose();
    for r in 0..k {
        xi[(r, r)] += idio_logvar_t[r].exp();
    }
    xi
}

/// Time-averaged covariance Ξ̄ = L·diag(mean_t exp σ)·L' + diag(mean_t exp ω);
/// equals the average of Ξ_t because the loadings are time-invariant.
pub fn xi_bar(
    loadings: &DMatrix<f64>,
    factor_logvar: &DMatrix<f64>,
    idio_logvar: &DMatrix<f64>,
) -> Result<DMatrix<f64>, SamplerError> {
    let t_len = idio_logvar.ncols();
    if t_len == 0 || factor_logvar.ncols() != t_len {
        return Err(SamplerError::DimensionMismatch {
            what: "covariance averaging window".into(),
            expected: t_len.max(1),
            actual: factor_logvar.ncols(),
        });
    }
    let mean_sigma: Vec<f64> = (0..factor_logvar.nrows())
        .map(|r| factor_logvar.row(r).iter().map(|v| v.exp()).sum::<f64>() / t_len as f64)
        .collect();
    let mean_omega: Vec<f64> = (0..idio_logvar.nrows())
        .map(|r| idio_logvar.row(r).iter().map(|v| v.exp()).sum::<f64>() / t_len as f64)
        .collect();
    let log_sigma: Vec<f64> = mean_sigma.iter().map(|v| v.ln()).collect();
    let log_omega: Vec<f64> = mean_omega.iter().map(|v| v.ln()).collect();
    let xi = xi_at(loadings, &log_sigma, &log_omega);
    if xi.iter().any(|v| !v.is_finite()) {
        return Err(SamplerError::NonFinite {
            what: "average reduced-form covariance".into(),
        });
    }
    Ok(xi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simulate_sv_shocks(params: &SvParams, t_len: usize, rng: &mut impl Rng) -> Vec<f64> {
        let mut h =
            params.theta + params.sigma / (1.0 - params.phi * params.phi).sqrt() * rng.sample::<f64, _>(StandardNormal);
        let mut shocks = Vec::with_capacity(t_len);
        for _ in 0..t_len {
            shocks.push((h / 2.0).exp() * rng.sample::<f64, _>(StandardNormal));
            h = params.theta
                + params.phi * (h - params.theta)
                + params.sigma * rng.sample::<f64, _>(StandardNormal);
        }
        shocks
    }

    #[test]
    fn loadings_row_posterior_matches_scalar_oracle() {
        // K irrelevant (one row), F=1, T=6 hand-set numbers.
        let resid = DVector::from_column_slice(&[0.4, -0.2, 0.9, 0.1, -0.5, 0.3]);
        let factors = DMatrix::from_row_slice(1, 6, &[1.0, -0.5, 2.0, 0.3, -1.2, 0.8]);
        let omega = [0.1, -0.3, 0.4, 0.0, -0.2, 0.25];
        let post = loadings_row_posterior(&resid, &factors, &omega).unwrap();
        let mut prec = 1.0 / LOADING_PRIOR_VAR;
        let mut num = 0.0;
        for t in 0..6 {
            let w = (-omega[t]).exp();
            prec += factors[(0, t)] * factors[(0, t)] * w;
            num += factors[(0, t)] * resid[t] * w;
        }
        assert!((post.mean()[0] - num / prec).abs() < 1e-10);
        assert!((post.covariance()[(0, 0)] - 1.0 / prec).abs() < 1e-10);
    }

    #[test]
    fn zero_factors_make_the_loading_posterior_the_prior() {
        let resid = DVector::from_column_slice(&[1.0, 2.0, -3.0, 0.5]);
        let factors = DMatrix::zeros(2, 4);
        let omega = [0.0; 4];
        let post = loadings_row_posterior(&resid, &factors, &omega).unwrap();
        assert!(post.mean().abs().max() < 1e-14);
        let cov = post.covariance();
        assert!((cov[(0, 0)] - LOADING_PRIOR_VAR).abs() < 1e-12);
        assert!((cov[(1, 1)] - LOADING_PRIOR_VAR).abs() < 1e-12);
        assert!(cov[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn draw_loadings_assembles_the_per_row_streams() {
        // The matrix draw must equal row-by-row draws with the same derived
        // streams — and be identical across execution modes.
        let mut rng = derive_rng(80, Stream::Init, &[0]);
        let (k, f, t_len) = (5, 2, 30);
        let factors = DMatrix::from_fn(f, t_len, |_, _| rng.sample::<f64, _>(StandardNormal));
        let resid = DMatrix::from_fn(k, t_len, |_, _| rng.sample::<f64, _>(StandardNormal));
        let omega = DMatrix::from_fn(k, t_len, |_, _| 0.3 * rng.sample::<f64, _>(StandardNormal));

        let seq = draw_loadings(&resid, &factors, &omega, 9, 4, ExecMode::Sequential).unwrap();
        let par = draw_loadings(&resid, &factors, &omega, 9, 4, ExecMode::Parallel).unwrap();
        assert_eq!(seq, par);

        for i in 0..k {
            let mut row_rng = derive_rng(9, Stream::Loadings, &[4, i as u64]);
            let y = resid.row(i).transpose();
            let om: Vec<f64> = omega.row(i).iter().copied().collect();
            let draw = loadings_row_posterior(&y, &factors, &om)
                .unwrap()
                .sample(&mut row_rng);
            for c in 0..f {
                assert_eq!(seq[(i, c)].to_bits(), draw[c].to_bits(), "row {i} col {c}");
            }
        }
    }

    #[test]
    fn factor_posterior_matches_dense_formula() {
        // F=2, K=3: oracle inverts (Σ⁻¹ + L'Ω⁻¹L) densely.
        let loadings = DMatrix::from_row_slice(3, 2, &[0.8, -0.3, 1.1, 0.4, -0.6, 0.9]);
        let eps = DVector::from_column_slice(&[0.5, -1.2, 0.7]);
        let sigma = [0.2, -0.4];
        let omega = [-0.1, 0.3, 0.05];
        let post = factor_posterior(&eps, &loadings, &sigma, &omega).unwrap();

        let om_inv = DMatrix::from_diagonal(&DVector::from_fn(3, |i, _| (-omega[i]).exp()));
        let sig_inv = DMatrix::from_diagonal(&DVector::from_fn(2, |i, _| (-sigma[i]).exp()));
        let b = (sig_inv + loadings.transpose() * &om_inv * &loadings)
            .try_inverse()
            .unwrap();
        let mean = &b * (loadings.transpose() * om_inv * eps);
        assert!((post.mean() - &mean).abs().max() < 1e-12);
        assert!((post.covariance() - b).abs().max() < 1e-12);
    }

    #[test]
    fn zero_loadings_return_the_factor_prior() {
        let loadings = DMatrix::zeros(4, 2);
        let eps = DVector::from_column_slice(&[1.0, -2.0, 0.3, 0.8]);
        let sigma = [0.5, -0.7];
        let omega = [0.0; 4];
        let post = factor_posterior(&eps, &loadings, &sigma, &omega).unwrap();
        assert!(post.mean().abs().max() < 1e-14);
        let cov = post.covariance();
        assert!((cov[(0, 0)] - 0.5f64.exp()).abs() < 1e-12);
        assert!((cov[(1, 1)] - (-0.7f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn noiseless_identity_loadings_recover_the_shock() {
        // Ω → 0 with L = I pins f_t to ε_t.
        let loadings = DMatrix::identity(2, 2);
        let eps = DVector::from_column_slice(&[0.9, -1.4]);
        let sigma = [0.0, 0.0];
        let omega = [(1e-12f64).ln(); 2];
        let post = factor_posterior(&eps, &loadings, &sigma, &omega).unwrap();
        assert!((post.mean() - eps).abs().max() < 1e-5);
    }

    #[test]
    fn draw_factors_is_mode_invariant_and_matches_per_period_streams() {
        let mut rng = derive_rng(81, Stream::Init, &[1]);
        let (k, f, t_len) = (4, 2, 25);
        let loadings = DMatrix::from_fn(k, f, |_, _| rng.sample::<f64, _>(StandardNormal));
        let eps = DMatrix::from_fn(k, t_len, |_, _| rng.sample::<f64, _>(StandardNormal));
        let sigma = DMatrix::from_fn(f, t_len, |_, _| 0.2 * rng.sample::<f64, _>(StandardNormal));
        let omega = DMatrix::from_fn(k, t_len, |_, _| 0.2 * rng.sample::<f64, _>(StandardNormal));

        let seq =
            draw_factors(&eps, &loadings, &sigma, &omega, 11, 7, ExecMode::Sequential).unwrap();
        let par = draw_factors(&eps, &loadings, &sigma, &omega, 11, 7, ExecMode::Parallel).unwrap();
        assert_eq!(seq, par);

        let t_probe = 13;
        let mut col_rng = derive_rng(11, Stream::Factors, &[7, t_probe as u64]);
        let s: Vec<f64> = sigma.column(t_probe).iter().copied().collect();
        let o: Vec<f64> = omega.column(t_probe).iter().copied().collect();
        let draw = factor_posterior(&eps.column(t_probe).into_owned(), &loadings, &s, &o)
            .unwrap()
            .sample(&mut col_rng);
        for r in 0..f {
            assert_eq!(seq[(r, t_probe)].to_bits(), draw[r].to_bits());
        }
    }

    #[test]
    fn sv_kernel_recovers_parameters_from_simulated_shocks() {
        // Full kernel (indicators + FFBS + parameter draws) on heteroscedastic
        // shocks; posterior means land near the generating values.
        let truth = SvParams {
            theta: -0.5,
            phi: 0.9,
            sigma: 0.35,
        };
        let mut rng = derive_rng(82, Stream::Init, &[2]);
        let shocks = simulate_sv_shocks(&truth, 1500, &mut rng);
        let mut h = vec![0.0; 1500];
        let mut params = SvParams::default();
        let sweeps = 600;
        let mut sum_phi = 0.0;
        let mut sum_theta = 0.0;
        let mut kept = 0.0;
        for s in 0..sweeps {
            let (new_h, new_p) = draw_sv_path(&shocks, &h, &params, &mut rng).unwrap();
            h = new_h;
            params = new_p;
            if s >= sweeps / 2 {
                sum_phi += params.phi;
                sum_theta += params.theta;
                kept += 1.0;
            }
        }
        let phi_hat = sum_phi / kept;
        let theta_hat = sum_theta / kept;
        assert!((phi_hat - truth.phi).abs() < 0.12, "phi posterior mean {phi_hat}");
        assert!(
            (theta_hat - truth.theta).abs() < 0.4,
            "theta posterior mean {theta_hat}"
        );
    }

    #[test]
    fn homoscedastic_shocks_concentrate_theta_at_the_log_variance() {
        // Constant-variance data: exp(θ) posterior mean within 10% of truth.
        let true_var = 0.25f64;
        let mut rng = derive_rng(83, Stream::Init, &[3]);
        let shocks: Vec<f64> = (0..1500)
            .map(|_| true_var.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut h = vec![0.0; 1500];
        let mut params = SvParams::default();
        let mut sum = 0.0;
        let mut kept = 0.0;
        for s in 0..500 {
            let (new_h, new_p) = draw_sv_path(&shocks, &h, &params, &mut rng).unwrap();
            h = new_h;
            params = new_p;
            if s >= 250 {
                sum += params.theta.exp();
                kept += 1.0;
            }
        }
        let var_hat = sum / kept;
        assert!(
            (var_hat - true_var).abs() / true_var < 0.1,
            "exp(theta) posterior mean {var_hat} vs {true_var}"
        );
    }

    #[test]
    fn constant_variance_posterior_matches_inverse_gamma_mean() {
        let mut rng = derive_rng(84, Stream::Init, &[4]);
        let shocks: Vec<f64> = (0..400)
            .map(|_| 0.7 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let sum_sq: f64 = shocks.iter().map(|s| s * s).sum();
        let shape = 0.01 + 200.0;
        let rate = 0.01 + sum_sq / 2.0;
        let expected = rate / (shape - 1.0);
        let n = 30_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += update_constant_variance(&shocks, &mut rng);
        }
        let mean = sum / n as f64;
        assert!(
            (mean - expected).abs() / expected < 0.02,
            "posterior mean {mean} vs {expected}"
        );
    }

    #[test]
    fn flagged_series_keep_constant_paths_and_parameters() {
        let mut state = VolatilityState::init(4, 1, 60, 2);
        let mut rng = derive_rng(85, Stream::Init, &[5]);
        state.factors =
            DMatrix::from_fn(1, 60, |_, _| rng.sample::<f64, _>(StandardNormal));
        let resid = DMatrix::from_fn(4, 60, |_, _| rng.sample::<f64, _>(StandardNormal));
        let before = state.idio_params.clone();
        update_volatility_paths(&mut state, &resid, 21, 3, ExecMode::Sequential).unwrap();
        for j in 0..2 {
            let first = state.idio_logvar[(j, 0)];
            for t in 1..60 {
                assert_eq!(state.idio_logvar[(j, t)], first, "series {j} period {t}");
            }
            assert_eq!(state.idio_params[j], before[j], "series {j} parameters");
        }
        // Unflagged series did move and got fresh parameters.
        assert_ne!(state.idio_params[2], before[2]);
        let row2: Vec<f64> = state.idio_logvar.row(2).iter().copied().collect();
        assert!(row2.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn volatility_update_is_mode_invariant() {
        let mut rng = derive_rng(86, Stream::Init, &[6]);
        let mut a = VolatilityState::init(5, 2, 40, 2);
        a.factors = DMatrix::from_fn(2, 40, |_, _| rng.sample::<f64, _>(StandardNormal));
        let resid = DMatrix::from_fn(5, 40, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut b = a.clone();
        update_volatility_paths(&mut a, &resid, 31, 9, ExecMode::Sequential).unwrap();
        update_volatility_paths(&mut b, &resid, 31, 9, ExecMode::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn covariance_assembly_matches_hand_formula() {
        let loadings = DMatrix::from_row_slice(2, 1, &[0.5, -1.0]);
        let sigma = [0.3];
        let omega = [-0.2, 0.1];
        let xi = xi_at(&loadings, &sigma, &omega);
        let s = 0.3f64.exp();
        assert!((xi[(0, 0)] - (0.25 * s + (-0.2f64).exp())).abs() < 1e-14);
        assert!((xi[(0, 1)] - (-0.5 * s)).abs() < 1e-14);
        assert!((xi[(1, 0)] - (-0.5 * s)).abs() < 1e-14);
        assert!((xi[(1, 1)] - (s + 0.1f64.exp())).abs() < 1e-14);
    }

    #[test]
    fn averaged_covariance_equals_mean_of_period_covariances() {
        let mut rng = derive_rng(87, Stream::Init, &[7]);
        let (k, f, t_len) = (4, 2, 15);
        let loadings = DMatrix::from_fn(k, f, |_, _| rng.sample::<f64, _>(StandardNormal));
        let sigma = DMatrix::from_fn(f, t_len, |_, _| 0.4 * rng.sample::<f64, _>(StandardNormal));
        let omega = DMatrix::from_fn(k, t_len, |_, _| 0.4 * rng.sample::<f64, _>(StandardNormal));
        let bar = xi_bar(&loadings, &sigma, &omega).unwrap();
        let mut acc = DMatrix::<f64>::zeros(k, k);
        for t in 0..t_len {
            let s: Vec<f64> = sigma.column(t).iter().copied().collect();
            let o: Vec<f64> = omega.column(t).iter().copied().collect();
            acc += xi_at(&loadings, &s, &o);
        }
        acc /= t_len as f64;
        assert!((&bar - &acc).abs().max() < 1e-12);
        assert!(Cholesky::new(bar).is_some(), "average covariance not SPD");
    }
}
