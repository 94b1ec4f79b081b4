//! The six-step Gibbs sampler over coefficients, priors, and volatilities.
//!
//! One sweep conditions each block on the rest, in a fixed order:
//!
//! 1. VAR coefficients, one free equation at a time, on the factor-adjusted
//!    target with the equation's own idiosyncratic variance path;
//! 2. the pooling prior (μ, V) over the country coefficient vectors;
//! 3. the Normal-Gamma scales (τ, λ) on the aggregate vector plus the
//!    Metropolis step on b with burn-in proposal adaptation;
//! 4. factor loadings, row by row, on the VAR residuals;
//! 5. the common factors, period by period;
//! 6. every stochastic-volatility path and its AR(1) parameters.
//!
//! Each unit of parallel work draws from its own RNG stream derived from
//! `(seed, step, sweep, unit)`, so sequential and parallel execution produce
//! bit-identical chains, and a resumed chain continues exactly where the
//! original would have gone.

mod design;
mod likelihood;
mod store;

pub use design::{build_design_set, equation_plan, var_residuals, DesignSet, Equation};
pub use likelihood::gaussian_log_likelihood;
pub use store::{read_draw_store, write_draw_store, DrawManifest};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binio::BinIoError;
use crate::data::{check_panel_weights, DataError, PanelDataset};
use crate::exec::{self, ExecMode};
use crate::model::{
    assemble_stacked_system, validate_spec, CoefficientState, ModelError, ModelSpec,
    StackedSystem, WeightMatrix,
};
use crate::rng::{derive_rng, Stream};
use crate::samplers::{
    draw_var_equation, mh_step_btau, update_normal_gamma, update_pooling, BtauAdapt,
    NormalGammaState, PoolingState, SamplerError,
};
use crate::sv::VolatilityState;

/// Initial proposal scale for the b Metropolis step.
pub const BTAU_INITIAL_SCALE: f64 = 0.25;
/// Ridge prior variance used by the least-squares initialization pass.
const INIT_PRIOR_VAR: f64 = 10.0;

/// Errors raised while configuring or running a chain.
#[derive(Debug, thiserror::Error)]
pub enum GibbsError {
    #[error("invalid chain setup: {0}")]
    BadConfig(String),
    #[error("period {period} covariance is not positive definite")]
    NonSpdCovariance { period: usize },
    #[error("non-finite value produced in {0}")]
    NonFinite(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    BinIo(#[from] BinIoError),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint does not match the inputs: {0}")]
    CheckpointMismatch(String),
    #[error("JSON encoding failure: {0}")]
    Json(#[from] serde_json::Error),
}

/// Run-length and scheduling parameters of one chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Total number of sweeps, burn-in included.
    pub sweeps: u64,
    /// Sweeps discarded before retention starts.
    pub burn_in: u64,
    /// Keep every `thin`-th post-burn-in sweep.
    #[serde(default = "default_thin")]
    pub thin: u64,
    /// Master seed; every RNG stream in the chain derives from it.
    pub seed: u64,
    #[serde(default)]
    pub mode: ExecMode,
    /// Track the per-draw deviance needed for DIC (one K×K Cholesky per
    /// period per retained draw, so off by default).
    #[serde(default)]
    pub compute_deviance: bool,
}

fn default_thin() -> u64 {
    1
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), GibbsError> {
        if self.sweeps == 0 {
            return Err(GibbsError::BadConfig("sweeps must be positive".into()));
        }
        if self.burn_in >= self.sweeps {
            return Err(GibbsError::BadConfig(format!(
                "burn-in {} must be smaller than sweeps {}",
                self.burn_in, self.sweeps
            )));
        }
        if self.thin == 0 {
            return Err(GibbsError::BadConfig("thin must be positive".into()));
        }
        Ok(())
    }

    /// Number of draws a full run retains.
    pub fn n_retained(&self) -> u64 {
        (self.sweeps - self.burn_in) / self.thin
    }
}

/// Everything that evolves across sweeps.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    /// Completed sweeps so far.
    pub sweep: u64,
    pub coeffs: CoefficientState,
    pub ng: NormalGammaState,
    pub adapt: BtauAdapt,
    pub pooling: PoolingState,
    pub vol: VolatilityState,
}

/// One retained posterior draw, reduced to what identification and impulse
/// responses need: coefficients, loadings, and time-averaged variances.
#[derive(Clone, Debug, PartialEq)]
pub struct RetainedDraw {
    /// The sweep this draw was taken at.
    pub sweep: u64,
    pub coeffs: CoefficientState,
    /// K×F factor loadings.
    pub loadings: DMatrix<f64>,
    /// mean_t exp σ_ft, one entry per factor.
    pub factor_var: DVector<f64>,
    /// mean_t exp ω_it, one entry per series.
    pub idio_var: DVector<f64>,
    /// −2·log likelihood at this draw, when deviance tracking is on.
    pub deviance: Option<f64>,
}

impl RetainedDraw {
    /// Time-averaged reduced-form covariance Ξ̄ = L·diag(σ̄)·L' + diag(ω̄).
    pub fn xi_bar(&self) -> DMatrix<f64> {
        let (k, f) = self.loadings.shape();
        let mut scaled = self.loadings.clone();
        for c in 0..f {
            for r in 0..k {
                scaled[(r, c)] *= self.factor_var[c];
            }
        }
        let mut xi = scaled * self.loadings.transpose();
        for r in 0..k {
            xi[(r, r)] += self.idio_var[r];
        }
        xi
    }

    /// Solves this draw's block coefficients into the stacked VAR form.
    pub fn stacked(
        &self,
        spec: &ModelSpec,
        weights: &WeightMatrix,
    ) -> Result<StackedSystem, ModelError> {
        assemble_stacked_system(spec, &self.coeffs, weights)
    }
}

/// Running sums used for the plug-in deviance of the DIC.
#[derive(Clone, Debug, PartialEq)]
struct MeanAccumulator {
    n: u64,
    coeffs: CoefficientState,
    loadings: DMatrix<f64>,
    /// F×T sums of exp σ.
    factor_var_path: DMatrix<f64>,
    /// K×T sums of exp ω.
    idio_var_path: DMatrix<f64>,
    deviance: f64,
}

impl MeanAccumulator {
    fn zeros(spec: &ModelSpec, t_eff: usize) -> Self {
        MeanAccumulator {
            n: 0,
            coeffs: CoefficientState::zeros(spec),
            loadings: DMatrix::zeros(spec.system_size(), spec.n_factors),
            factor_var_path: DMatrix::zeros(spec.n_factors, t_eff),
            idio_var_path: DMatrix::zeros(spec.system_size(), t_eff),
            deviance: 0.0,
        }
    }
}

/// Deviance-based model comparison summary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DicReport {
    pub dic: f64,
    /// Posterior mean of the deviance D̄.
    pub mean_deviance: f64,
    /// Deviance at the posterior-mean parameters D(θ̄).
    pub deviance_at_mean: f64,
    /// Effective parameter count p_D = D̄ − D(θ̄).
    pub effective_params: f64,
}

/// A Gibbs chain bound to one panel: designs, state, and retained draws.
#[derive(Debug)]
pub struct Chain {
    pub spec: ModelSpec,
    pub weights: WeightMatrix,
    pub config: ChainConfig,
    pub designs: DesignSet,
    equations: Vec<Equation>,
    pub state: ChainState,
    pub draws: Vec<RetainedDraw>,
    accum: Option<MeanAccumulator>,
    /// SHA-256 over spec, config, panel, and weights; checkpoints refuse to
    /// resume against different inputs.
    input_digest: [u8; 32],
    btau_accepted: u64,
    btau_steps: u64,
}

/// Digest that ties a chain (and its checkpoints) to its exact inputs.
fn input_digest(
    spec: &ModelSpec,
    config: &ChainConfig,
    panel: &PanelDataset,
    weights: &WeightMatrix,
) -> Result<[u8; 32], GibbsError> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(spec)?);
    h.update(serde_json::to_vec(config)?);
    panel.hash_into(&mut h);
    let w = weights.as_matrix();
    h.update((w.nrows() as u64).to_le_bytes());
    h.update((w.ncols() as u64).to_le_bytes());
    for v in w.as_slice() {
        h.update(v.to_le_bytes());
    }
    Ok(h.finalize().into())
}

impl Chain {
    /// Sets up a chain: validates the inputs, builds the design matrices, and
    /// initializes coefficients with a deterministic ridge-regression pass
    /// (prior N(0, 10·I), unit error variances).
    pub fn new(
        spec: &ModelSpec,
        panel: &PanelDataset,
        weights: &WeightMatrix,
        config: ChainConfig,
    ) -> Result<Chain, GibbsError> {
        config.validate()?;
        let violations = validate_spec(spec);
        if let Some(v) = violations.first() {
            return Err(GibbsError::BadConfig(format!("{}: {}", v.field, v.message)));
        }
        check_panel_weights(spec, panel, weights)?;
        let designs = build_design_set(spec, panel, weights)?;
        let equations = equation_plan(spec);
        let digest = input_digest(spec, &config, panel, weights)?;

        let mut coeffs = CoefficientState::zeros(spec);
        let mut a0 = DVector::zeros(spec.agg_vec_len());
        let mut country_vecs =
            vec![DVector::zeros(spec.country_vec_len()); spec.n_countries];
        let unit_vols = vec![1.0; designs.t_eff];
        for eq in &equations {
            let y = designs.targets.row(eq.global_row).transpose();
            let x = if eq.block == 0 {
                &designs.aggregate
            } else {
                &designs.countries[eq.block - 1]
            };
            let prior_mean = DVector::zeros(eq.slots.len());
            let prior_var = DVector::from_element(eq.slots.len(), INIT_PRIOR_VAR);
            let post =
                crate::samplers::regression_posterior(&y, x, &prior_mean, &prior_var, &unit_vols)?;
            let target = if eq.block == 0 {
                &mut a0
            } else {
                &mut country_vecs[eq.block - 1]
            };
            eq.scatter(post.mean(), target);
        }
        coeffs.set_from_aggregate_vec(spec, &a0)?;
        for (j, aj) in country_vecs.iter().enumerate() {
            coeffs.set_from_country_vec(spec, j + 1, aj)?;
        }

        let mut pooling = PoolingState::init(spec.country_vec_len());
        for aj in &country_vecs {
            pooling.mu += aj / spec.n_countries as f64;
        }

        let state = ChainState {
            sweep: 0,
            coeffs,
            ng: NormalGammaState::init(spec.agg_vec_len()),
            adapt: BtauAdapt::new(BTAU_INITIAL_SCALE),
            pooling,
            vol: VolatilityState::init(
                spec.system_size(),
                spec.n_factors,
                designs.t_eff,
                spec.n_surprise_rows(),
            ),
        };
        let accum = config
            .compute_deviance
            .then(|| MeanAccumulator::zeros(spec, designs.t_eff));
        Ok(Chain {
            spec: spec.clone(),
            weights: weights.clone(),
            config,
            designs,
            equations,
            state,
            draws: Vec::new(),
            accum,
            input_digest: digest,
            btau_accepted: 0,
            btau_steps: 0,
        })
    }

    /// Fraction of b proposals accepted so far.
    pub fn btau_acceptance(&self) -> f64 {
        if self.btau_steps == 0 {
            f64::NAN
        } else {
            self.btau_accepted as f64 / self.btau_steps as f64
        }
    }

    /// SHA-256 over (spec, config, panel, weights), identifying the run's
    /// inputs for provenance checks.
    pub fn input_digest(&self) -> &[u8; 32] {
        &self.input_digest
    }

    /// Runs one sweep; retains the draw when the schedule says so.
    pub fn step(&mut self) -> Result<(), GibbsError> {
        let sweep = self.state.sweep + 1;
        let resid = self.sweep_once(sweep)?;
        if sweep > self.config.burn_in && (sweep - self.config.burn_in) % self.config.thin == 0 {
            self.retain(sweep, &resid)?;
        }
        Ok(())
    }

    /// Runs the chain to its configured sweep count.
    pub fn run(&mut self) -> Result<(), GibbsError> {
        while self.state.sweep < self.config.sweeps {
            self.step()?;
        }
        Ok(())
    }

    /// One full Gibbs sweep. Returns the K×T_eff VAR residuals at the new
    /// coefficients so retention can reuse them.
    fn sweep_once(&mut self, sweep: u64) -> Result<DMatrix<f64>, GibbsError> {
        let seed = self.config.seed;
        let mode = self.config.mode;
        let spec = &self.spec;
        let t_eff = self.designs.t_eff;

        // Step 1: coefficients, equation by equation, on the factor-adjusted
        // target. Everything read inside the map is last sweep's state.
        let common = &self.state.vol.loadings * &self.state.vol.factors;
        let designs = &self.designs;
        let equations = &self.equations;
        let ng = &self.state.ng;
        let pooling = &self.state.pooling;
        let idio_logvar = &self.state.vol.idio_logvar;
        let draws: Vec<DVector<f64>> = exec::try_map_indexed(equations.len(), mode, |e| {
            let eq = &equations[e];
            let row = eq.global_row;
            let y = DVector::from_fn(t_eff, |tt, _| {
                designs.targets[(row, tt)] - common[(row, tt)]
            });
            let x = if eq.block == 0 {
                &designs.aggregate
            } else {
                &designs.countries[eq.block - 1]
            };
            let (prior_mean, prior_var) = if eq.block == 0 {
                (DVector::zeros(eq.slots.len()), eq.gather(&ng.tau))
            } else {
                (eq.gather(&pooling.mu), eq.gather(&pooling.v))
            };
            let vols: Vec<f64> = (0..t_eff).map(|tt| idio_logvar[(row, tt)].exp()).collect();
            let mut rng = derive_rng(seed, Stream::Coefficients, &[sweep, e as u64]);
            draw_var_equation(&y, x, &prior_mean, &prior_var, &vols, &mut rng)
        })?;

        let mut a0 = self.state.coeffs.vectorize_aggregate(spec);
        let mut country_vecs: Vec<DVector<f64>> = (1..=spec.n_countries)
            .map(|j| self.state.coeffs.vectorize_country(spec, j))
            .collect();
        for (e, eq) in self.equations.iter().enumerate() {
            let target = if eq.block == 0 {
                &mut a0
            } else {
                &mut country_vecs[eq.block - 1]
            };
            eq.scatter(&draws[e], target);
        }
        self.state.coeffs.set_from_aggregate_vec(spec, &a0)?;
        for (j, aj) in country_vecs.iter().enumerate() {
            self.state.coeffs.set_from_country_vec(spec, j + 1, aj)?;
        }

        // Step 2: pooling prior over the fresh country vectors.
        let mut rng = derive_rng(seed, Stream::Pooling, &[sweep]);
        self.state.pooling = update_pooling(&country_vecs, &self.state.pooling, &mut rng)?;

        // Step 3: Normal-Gamma scales, then the Metropolis step on b.
        let mut rng = derive_rng(seed, Stream::NormalGamma, &[sweep]);
        self.state.ng = update_normal_gamma(&a0, &self.state.ng, &mut rng)?;
        let mut rng = derive_rng(seed, Stream::Btau, &[sweep]);
        let (b, accepted) = mh_step_btau(&self.state.ng, self.state.adapt.scale, &mut rng);
        self.state.ng.b = b;
        self.btau_steps += 1;
        self.btau_accepted += accepted as u64;
        if sweep <= self.config.burn_in {
            self.state.adapt.observe(accepted);
        }

        // Steps 4–6: loadings, factors, volatilities, all on the VAR
        // residuals at the new coefficients.
        let resid = var_residuals(spec, &self.designs, &self.state.coeffs);
        self.state.vol.loadings = crate::sv::draw_loadings(
            &resid,
            &self.state.vol.factors,
            &self.state.vol.idio_logvar,
            seed,
            sweep,
            mode,
        )?;
        self.state.vol.factors = crate::sv::draw_factors(
            &resid,
            &self.state.vol.loadings,
            &self.state.vol.factor_logvar,
            &self.state.vol.idio_logvar,
            seed,
            sweep,
            mode,
        )?;
        let idio = &resid - &self.state.vol.loadings * &self.state.vol.factors;
        crate::sv::update_volatility_paths(&mut self.state.vol, &idio, seed, sweep, mode)?;

        self.state.sweep = sweep;
        Ok(resid)
    }

    /// Records the current state as a retained draw.
    fn retain(&mut self, sweep: u64, resid: &DMatrix<f64>) -> Result<(), GibbsError> {
        let vol = &self.state.vol;
        let t_len = vol.t_len() as f64;
        let factor_var = DVector::from_fn(vol.n_factors(), |r, _| {
            vol.factor_logvar.row(r).iter().map(|v| v.exp()).sum::<f64>() / t_len
        });
        let idio_var = DVector::from_fn(vol.k_system(), |r, _| {
            vol.idio_logvar.row(r).iter().map(|v| v.exp()).sum::<f64>() / t_len
        });
        let deviance = if self.config.compute_deviance {
            let factor_path = vol.factor_logvar.map(|v| v.exp());
            let idio_path = vol.idio_logvar.map(|v| v.exp());
            let ll = gaussian_log_likelihood(resid, &vol.loadings, &factor_path, &idio_path)?;
            if let Some(acc) = self.accum.as_mut() {
                acc.n += 1;
                add_coeffs(&mut acc.coeffs, &self.state.coeffs);
                acc.loadings += &vol.loadings;
                acc.factor_var_path += &factor_path;
                acc.idio_var_path += &idio_path;
                acc.deviance += -2.0 * ll;
            }
            Some(-2.0 * ll)
        } else {
            None
        };
        self.draws.push(RetainedDraw {
            sweep,
            coeffs: self.state.coeffs.clone(),
            loadings: vol.loadings.clone(),
            factor_var,
            idio_var,
            deviance,
        });
        Ok(())
    }

    /// DIC = 2·D̄ − D(θ̄) from the tracked deviances and the plug-in deviance
    /// at the posterior-mean coefficients, loadings, and variance paths.
    /// Requires `compute_deviance` and at least one retained draw.
    pub fn compute_dic(&self) -> Result<DicReport, GibbsError> {
        let acc = self
            .accum
            .as_ref()
            .filter(|a| a.n > 0)
            .ok_or_else(|| {
                GibbsError::BadConfig(
                    "DIC needs compute_deviance = true and at least one retained draw".into(),
                )
            })?;
        let n = acc.n as f64;
        let mean_coeffs = scale_coeffs(&acc.coeffs, 1.0 / n);
        let mean_loadings = &acc.loadings / n;
        let mean_factor_path = &acc.factor_var_path / n;
        let mean_idio_path = &acc.idio_var_path / n;
        let resid = var_residuals(&self.spec, &self.designs, &mean_coeffs);
        let deviance_at_mean = -2.0
            * gaussian_log_likelihood(&resid, &mean_loadings, &mean_factor_path, &mean_idio_path)?;
        let mean_deviance = acc.deviance / n;
        Ok(DicReport {
            dic: 2.0 * mean_deviance - deviance_at_mean,
            mean_deviance,
            deviance_at_mean,
            effective_params: mean_deviance - deviance_at_mean,
        })
    }
}

fn add_coeffs(sum: &mut CoefficientState, add: &CoefficientState) {
    sum.agg_intercept += &add.agg_intercept;
    for (s, a) in sum.agg_domestic.iter_mut().zip(&add.agg_domestic) {
        *s += a;
    }
    for (s, a) in sum.agg_foreign.iter_mut().zip(&add.agg_foreign) {
        *s += a;
    }
    for (sc, ac) in sum.countries.iter_mut().zip(&add.countries) {
        sc.intercept += &ac.intercept;
        for (s, a) in sc.domestic.iter_mut().zip(&ac.domestic) {
            *s += a;
        }
        for (s, a) in sc.foreign.iter_mut().zip(&ac.foreign) {
            *s += a;
        }
        for (s, a) in sc.aggregate.iter_mut().zip(&ac.aggregate) {
            *s += a;
        }
    }
}

fn scale_coeffs(c: &CoefficientState, s: f64) -> CoefficientState {
    let mut out = c.clone();
    out.agg_intercept *= s;
    for m in &mut out.agg_domestic {
        *m *= s;
    }
    for m in &mut out.agg_foreign {
        *m *= s;
    }
    for cb in &mut out.countries {
        cb.intercept *= s;
        for m in &mut cb.domestic {
            *m *= s;
        }
        for m in &mut cb.foreign {
            *m *= s;
        }
        for m in &mut cb.aggregate {
            *m *= s;
        }
    }
    out
}
