//! Conditional-posterior sampling kernels shared by the Gibbs sweep.
//!
//! Everything here is a pure function of (inputs, RNG): given the same seed
//! stream the draws are bit-reproducible, which is what makes the parallel
//! and sequential execution paths of the sampler identical.

mod gig;
mod normal_gamma;
mod pooling;
mod regression;

pub use gig::{draw_gig, gig_moments_by_quadrature};
pub use normal_gamma::{
    log_p_btau, mh_step_btau, update_normal_gamma, BtauAdapt, NormalGammaState,
};
pub use pooling::{pooling_mean_posterior, update_pooling, PoolingState};
pub use regression::{draw_var_equation, regression_posterior, RegressionPosterior};

/// Errors from the sampling kernels.
#[derive(Debug, thiserror::Error)]
pub enum SamplerError {
    #[error("invalid GIG parameter region: lambda={lambda}, chi={chi}, psi={psi}")]
    GigInvalidRegion { lambda: f64, chi: f64, psi: f64 },
    #[error("posterior precision is not positive definite ({what})")]
    NonSpd { what: String },
    #[error("nonpositive or non-finite variance in {what} at index {index}: {value}")]
    BadVariance {
        what: String,
        index: usize,
        value: f64,
    },
    #[error("dimension mismatch in {what}: expected {expected}, found {actual}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value produced in {what}")]
    NonFinite { what: String },
}
