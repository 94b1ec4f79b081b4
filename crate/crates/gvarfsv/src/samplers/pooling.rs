//! Hierarchical pooling prior over country coefficient vectors.
//!
//! Every a_j shares a common Gaussian prior N(μ, V) with V diagonal. The
//! conditional posterior of μ is Gaussian with
//! Ṽ = (N·V⁻¹ + V_0⁻¹)⁻¹ and μ̃ = Ṽ(V⁻¹Σ_j a_j + V_0⁻¹μ_0); each diagonal
//! variance gets an inverse-Gamma update
//! v_l | • ~ IG(d_v0 + N/2, d_v1 + Σ_j (a_jl − μ_l)²/2). With diagonal V and
//! V_0 both updates run elementwise.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::SamplerError;

/// State of the pooling prior: common mean, diagonal variances, hyperpriors.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolingState {
    pub mu: DVector<f64>,
    /// Diagonal of V.
    pub v: DVector<f64>,
    /// Hyperprior mean μ_0.
    pub mu0: DVector<f64>,
    /// Diagonal of V_0.
    pub v0: DVector<f64>,
    /// Inverse-Gamma hyperprior IG(d_v0, d_v1) on each v_l.
    pub d_v0: f64,
    pub d_v1: f64,
}

impl PoolingState {
    /// Default hyperpriors: μ_0 = 0, V_0 = I, d_v0 = d_v1 = 0.1.
    pub fn init(len: usize) -> Self {
        PoolingState {
            mu: DVector::zeros(len),
            v: DVector::from_element(len, 1.0),
            mu0: DVector::zeros(len),
            v0: DVector::from_element(len, 1.0),
            d_v0: 0.1,
            d_v1: 0.1,
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let len = self.mu.len();
        for (name, vec) in [("pooling v", &self.v), ("pooling v0", &self.v0)] {
            if vec.len() != len {
                return Err(SamplerError::DimensionMismatch {
                    what: name.to_string(),
                    expected: len,
                    actual: vec.len(),
                });
            }
            for (i, &value) in vec.iter().enumerate() {
                if !(value > 0.0) || !value.is_finite() {
                    return Err(SamplerError::BadVariance {
                        what: name.to_string(),
                        index: i,
                        value,
                    });
                }
            }
        }
        if self.mu0.len() != len {
            return Err(SamplerError::DimensionMismatch {
                what: "pooling mu0".to_string(),
                expected: len,
                actual: self.mu0.len(),
            });
        }
        Ok(())
    }
}

/// Posterior moments (μ̃, diag Ṽ) of the common mean — exposed so tests can
/// check them against dense-matrix formulas.
pub fn pooling_mean_posterior(
    a: &[DVector<f64>],
    state: &PoolingState,
) -> Result<(DVector<f64>, DVector<f64>), SamplerError> {
    state.validate()?;
    let len = state.mu.len();
    if a.is_empty() {
        return Err(SamplerError::DimensionMismatch {
            what: "pooling country vectors".to_string(),
            expected: 1,
            actual: 0,
        });
    }
    for (j, aj) in a.iter().enumerate() {
        if aj.len() != len {
            return Err(SamplerError::DimensionMismatch {
                what: format!("pooling vector for country {}", j + 1),
                expected: len,
                actual: aj.len(),
            });
        }
    }
    let n = a.len() as f64;
    let mut mu_tilde = DVector::zeros(len);
    let mut v_tilde = DVector::zeros(len);
    for l in 0..len {
        let sum_l: f64 = a.iter().map(|aj| aj[l]).sum();
        let precision = n / state.v[l] + 1.0 / state.v0[l];
        v_tilde[l] = 1.0 / precision;
        mu_tilde[l] = v_tilde[l] * (sum_l / state.v[l] + state.mu0[l] / state.v0[l]);
    }
    Ok((mu_tilde, v_tilde))
}

/// Gibbs update of the pooling state: draws μ from its Gaussian conditional,
/// then each v_l from its inverse-Gamma conditional using the fresh μ.
pub fn update_pooling<R: Rng + ?Sized>(
    a: &[DVector<f64>],
    state: &PoolingState,
    rng: &mut R,
) -> Result<PoolingState, SamplerError> {
    let (mu_tilde, v_tilde) = pooling_mean_posterior(a, state)?;
    let len = state.mu.len();
    let n = a.len() as f64;
    let mut new = state.clone();
    for l in 0..len {
        new.mu[l] = mu_tilde[l] + v_tilde[l].sqrt() * rng.sample::<f64, _>(StandardNormal);
    }
    let shape = state.d_v0 + 0.5 * n;
    for l in 0..len {
        let ss: f64 = a.iter().map(|aj| (aj[l] - new.mu[l]).powi(2)).sum();
        let rate = state.d_v1 + 0.5 * ss;
        let gamma = Gamma::new(shape, 1.0 / rate).map_err(|_| SamplerError::BadVariance {
            what: "pooling variance posterior".to_string(),
            index: l,
            value: rate,
        })?;
        new.v[l] = 1.0 / gamma.sample(rng);
    }
    Ok(new)
}
