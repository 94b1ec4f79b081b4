//! Synthetic ground truth and forward simulation.
//!
//! Parameter-recovery and model-selection checks need panels generated from a
//! known stable system: random block coefficients rescaled to a target
//! companion spectral radius, random loadings, and stochastic-volatility
//! parameters for every shock series. Simulation discards a warm-up window so
//! the recorded sample starts near the stationary distribution.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::{
    assemble_stacked_system, spectral_radius, CoefficientState, ModelError, ModelSpec,
    StackedSystem, WeightMatrix,
};
use crate::rng::{derive_rng, Stream};
use crate::sv::SvParams;

/// Number of warm-up periods discarded before recording.
pub const WARMUP: usize = 50;
/// Any simulated value beyond this magnitude aborts the run.
const EXPLOSION_LIMIT: f64 = 1e8;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("system is unstable: companion spectral radius {rho:.4} (need < {limit})")]
    Unstable { rho: f64, limit: f64 },
    #[error("simulation exploded at period {period}: |y| reached {value:.3e}")]
    Explosive { period: usize, value: f64 },
    #[error("invalid simulation request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A complete generating process: coefficients, weights, factor structure,
/// and the volatility law of every shock series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthParams {
    pub coeffs: CoefficientState,
    pub weights: WeightMatrix,
    /// K×F factor loadings.
    pub loadings: DMatrix<f64>,
    /// Log-variance AR(1) parameters per factor.
    pub factor_params: Vec<SvParams>,
    /// Log-variance AR(1) parameters per series (ignored where constant).
    pub idio_params: Vec<SvParams>,
    /// Series simulated with constant idiosyncratic variance.
    pub constant_idio: Vec<bool>,
    /// That constant variance, per series (ignored where not flagged).
    pub constant_var: Vec<f64>,
}

/// Row-stochastic random weights: every off-diagonal cell gets a uniform
/// draw, rows are normalized. Degenerate N = 1 leaves the country row zero.
pub fn random_weights<R: Rng + ?Sized>(n_countries: usize, rng: &mut R) -> WeightMatrix {
    let n = n_countries;
    let mut w = DMatrix::zeros(n + 1, n);
    for i in 0..=n {
        let mut sum = 0.0;
        for j in 1..=n {
            if i == j {
                continue;
            }
            let v = 0.5 + rng.random::<f64>();
            w[(i, j - 1)] = v;
            sum += v;
        }
        if sum > 0.0 {
            for j in 0..n {
                w[(i, j)] /= sum;
            }
        }
    }
    WeightMatrix::from_matrix(w).expect("constructed rows are stochastic or zero")
}

fn draw_sv_params<R: Rng + ?Sized>(rng: &mut R) -> SvParams {
    SvParams {
        theta: -0.5 + 0.3 * rng.sample::<f64, _>(StandardNormal),
        phi: 0.85 + 0.1 * rng.random::<f64>(),
        sigma: 0.15 + 0.1 * rng.random::<f64>(),
    }
}

/// Draws a random generating process whose companion spectral radius equals
/// `target_radius`. Structural zeros on the surprise equations are respected;
/// scaling lag-h matrices by c^h scales every companion eigenvalue by c, so
/// the rescaled system hits the target exactly.
pub fn synthetic_truth<R: Rng + ?Sized>(
    spec: &ModelSpec,
    target_radius: f64,
    rng: &mut R,
) -> Result<TruthParams, SimError> {
    if !(target_radius > 0.0 && target_radius < 1.0) {
        return Err(SimError::BadRequest(format!(
            "target spectral radius must be in (0, 1), got {target_radius}"
        )));
    }
    let violations = crate::model::validate_spec(spec);
    if !violations.is_empty() {
        return Err(SimError::Model(ModelError::InvalidSpec(violations)));
    }
    let weights = random_weights(spec.n_countries, rng);
    let k_sys = spec.system_size();
    let skip = spec.n_surprise_rows();

    let mut coeffs = CoefficientState::zeros(spec);
    let fill = |m: &mut DMatrix<f64>, first_row: usize, scale: f64, rng: &mut R| {
        for c in 0..m.ncols() {
            for r in first_row..m.nrows() {
                m[(r, c)] = scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
    };
    for row in skip..spec.block_len_aggregate() {
        coeffs.agg_intercept[row] = 0.1 * rng.sample::<f64, _>(StandardNormal);
    }
    for p in 0..spec.lag_domestic {
        let scale = 0.3 / (p + 1) as f64;
        fill(&mut coeffs.agg_domestic[p], skip, scale, rng);
    }
    for q in 0..spec.lag_foreign {
        let scale = 0.2 / (q + 1) as f64;
        fill(&mut coeffs.agg_foreign[q], skip, scale, rng);
    }
    for j in 0..spec.n_countries {
        for row in 0..spec.k_country {
            coeffs.countries[j].intercept[row] = 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
        for p in 0..spec.lag_domestic {
            let scale = 0.3 / (p + 1) as f64;
            fill(&mut coeffs.countries[j].domestic[p], 0, scale, rng);
        }
        for q in 0..spec.lag_foreign {
            let scale = 0.2 / (q + 1) as f64;
            fill(&mut coeffs.countries[j].foreign[q], 0, scale, rng);
        }
        for r in 0..spec.lag_aggregate_in_country {
            let scale = 0.2 / (r + 1) as f64;
            fill(&mut coeffs.countries[j].aggregate[r], 0, scale, rng);
        }
    }

    let system = assemble_stacked_system(spec, &coeffs, &weights)?;
    let rho = spectral_radius(&system);
    if rho > 0.0 {
        let c = target_radius / rho;
        let rescale = |mats: &mut [DMatrix<f64>]| {
            for (idx, m) in mats.iter_mut().enumerate() {
                *m *= c.powi(idx as i32 + 1);
            }
        };
        rescale(&mut coeffs.agg_domestic);
        rescale(&mut coeffs.agg_foreign);
        for cb in &mut coeffs.countries {
            rescale(&mut cb.domestic);
            rescale(&mut cb.foreign);
            rescale(&mut cb.aggregate);
        }
    }

    let loadings = DMatrix::from_fn(k_sys, spec.n_factors, |_, _| {
        0.4 * rng.sample::<f64, _>(StandardNormal)
    });
    let factor_params = (0..spec.n_factors).map(|_| draw_sv_params(rng)).collect();
    let idio_params = (0..k_sys).map(|_| draw_sv_params(rng)).collect();
    let constant_idio: Vec<bool> = (0..k_sys).map(|i| i < skip).collect();
    let constant_var = (0..k_sys).map(|_| 0.3 + 0.4 * rng.random::<f64>()).collect();

    Ok(TruthParams {
        coeffs,
        weights,
        loadings,
        factor_params,
        idio_params,
        constant_idio,
        constant_var,
    })
}

/// Simulates `t_len` recorded periods of the full generating process
/// (VAR + factor SV errors), after discarding [`WARMUP`] periods.
///
/// The RNG stream is derived from the seed alone, so equal seeds give
/// bit-identical panels.
pub fn simulate_panel(
    spec: &ModelSpec,
    truth: &TruthParams,
    t_len: usize,
    seed: u64,
) -> Result<DMatrix<f64>, SimError> {
    if t_len == 0 {
        return Err(SimError::BadRequest("need at least one period".into()));
    }
    let system = assemble_stacked_system(spec, &truth.coeffs, &truth.weights)?;
    let rho = spectral_radius(&system);
    if rho >= 0.999 {
        return Err(SimError::Unstable { rho, limit: 0.999 });
    }
    let k_sys = spec.system_size();
    let f = spec.n_factors;
    if truth.loadings.shape() != (k_sys, f) {
        return Err(SimError::Model(ModelError::DimensionMismatch {
            what: "loadings".to_string(),
            expected: k_sys * f,
            actual: truth.loadings.nrows() * truth.loadings.ncols(),
        }));
    }
    let h_max = spec.max_lag();
    let mut rng = derive_rng(seed, Stream::Simulation, &[t_len as u64]);

    // Log-variance states start at their stationary distributions.
    let mut h_f: Vec<f64> = truth
        .factor_params
        .iter()
        .map(|p| p.theta + p.sigma / (1.0 - p.phi * p.phi).sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut h_u: Vec<f64> = (0..k_sys)
        .map(|i| {
            if truth.constant_idio[i] {
                truth.constant_var[i].ln()
            } else {
                let p = &truth.idio_params[i];
                p.theta + p.sigma / (1.0 - p.phi * p.phi).sqrt() * rng.sample::<f64, _>(StandardNormal)
            }
        })
        .collect();

    let mut history: Vec<DVector<f64>> = vec![DVector::zeros(k_sys); h_max];
    let mut out = DMatrix::zeros(t_len, k_sys);
    for period in 0..WARMUP + t_len {
        let factors = DVector::from_fn(f, |i, _| {
            (h_f[i] / 2.0).exp() * rng.sample::<f64, _>(StandardNormal)
        });
        let mut eps = &truth.loadings * &factors;
        for i in 0..k_sys {
            eps[i] += (h_u[i] / 2.0).exp() * rng.sample::<f64, _>(StandardNormal);
        }
        let mut y = system.intercept.clone() + eps;
        for lag in 0..h_max {
            y += &system.lags[lag] * &history[lag];
        }
        let max_abs = y.abs().max();
        if !max_abs.is_finite() || max_abs > EXPLOSION_LIMIT {
            return Err(SimError::Explosive {
                period,
                value: max_abs,
            });
        }
        if period >= WARMUP {
            out.row_mut(period - WARMUP).copy_from(&y.transpose());
        }
        history.rotate_right(1);
        history[0] = y;

        for (i, p) in truth.factor_params.iter().enumerate() {
            h_f[i] =
                p.theta + p.phi * (h_f[i] - p.theta) + p.sigma * rng.sample::<f64, _>(StandardNormal);
        }
        for i in 0..k_sys {
            if !truth.constant_idio[i] {
                let p = &truth.idio_params[i];
                h_u[i] = p.theta
                    + p.phi * (h_u[i] - p.theta)
                    + p.sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    Ok(out)
}

/// Maps stacked lag matrices into the scale of standardized data: if
/// z_t = D⁻¹(y_t − μ) with D = diag(std), then z follows a VAR with
/// G'_h = D⁻¹ G_h D. Structural zeros are preserved entry-wise.
pub fn standardized_stacked_lags(
    system: &StackedSystem,
    ledger: &[(f64, f64)],
) -> Vec<DMatrix<f64>> {
    let k = system.intercept.len();
    assert_eq!(ledger.len(), k, "ledger length must match system size");
    system
        .lags
        .iter()
        .map(|g| {
            DMatrix::from_fn(k, k, |r, c| g[(r, c)] * ledger[c].1 / ledger[r].1)
        })
        .collect()
}
