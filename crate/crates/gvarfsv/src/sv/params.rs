//! Conditional updates for the per-series volatility parameters (θ, φ, ς)
//! given a sampled log-volatility path.
//!
//! Priors: θ ~ N(0, 100), (φ+1)/2 ~ Beta(25, 1.5), ς² ~ Gamma(1/2, rate 1/2).
//! The level θ is conjugate normal; persistence φ uses an independence MH
//! step whose proposal is the least-squares conditional (so the acceptance
//! ratio reduces to the prior times the stationary-initialization term);
//! ς² is generalized inverse Gaussian.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::SvParams;
use crate::samplers::{draw_gig, SamplerError};

const THETA_PRIOR_VAR: f64 = 100.0;

/// Log prior of φ plus the stationary-initialization term for h_1; this is
/// exactly the part of the target the least-squares proposal leaves out.
fn log_phi_weight(phi: f64, z1: f64, s2: f64) -> f64 {
    24.0 * ((1.0 + phi) / 2.0).ln() + 0.5 * ((1.0 - phi) / 2.0).ln()
        + 0.5 * (1.0 - phi * phi).ln()
        - 0.5 * (1.0 - phi * phi) * z1 * z1 / s2
}

/// Independence MH update of φ. Returns the (possibly unchanged) value.
pub fn draw_phi<R: Rng + ?Sized>(h: &[f64], params: &SvParams, rng: &mut R) -> f64 {
    let theta = params.theta;
    let s2 = params.sigma * params.sigma;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for t in 1..h.len() {
        let zp = h[t - 1] - theta;
        sxx += zp * zp;
        sxy += zp * (h[t] - theta);
    }
    if sxx <= 0.0 {
        return params.phi;
    }
    let phi_hat = sxy / sxx;
    let sd = (s2 / sxx).sqrt();
    let proposal: f64 = Normal::new(phi_hat, sd).unwrap().sample(rng);
    if proposal.abs() >= 1.0 {
        return params.phi;
    }
    let z1 = h[0] - theta;
    let log_ratio = log_phi_weight(proposal, z1, s2) - log_phi_weight(params.phi, z1, s2);
    if rng.random::<f64>().ln() <= log_ratio {
        proposal
    } else {
        params.phi
    }
}

/// Conjugate normal update of the level θ.
pub fn draw_theta<R: Rng + ?Sized>(h: &[f64], params: &SvParams, rng: &mut R) -> f64 {
    let phi = params.phi;
    let s2 = params.sigma * params.sigma;
    let t_len = h.len();
    let mut prec = 1.0 / THETA_PRIOR_VAR + (1.0 - phi * phi) / s2;
    let mut num = (1.0 - phi * phi) * h[0] / s2;
    if t_len > 1 {
        prec += (t_len - 1) as f64 * (1.0 - phi) * (1.0 - phi) / s2;
        let mut acc = 0.0;
        for t in 1..t_len {
            acc += h[t] - phi * h[t - 1];
        }
        num += (1.0 - phi) * acc / s2;
    }
    let z: f64 = rng.sample(StandardNormal);
    num / prec + z / prec.sqrt()
}

/// GIG update of the innovation variance ς².
pub fn draw_sigma_sq<R: Rng + ?Sized>(
    h: &[f64],
    params: &SvParams,
    rng: &mut R,
) -> Result<f64, SamplerError> {
    let theta = params.theta;
    let phi = params.phi;
    let t_len = h.len();
    let mut s = (1.0 - phi * phi) * (h[0] - theta) * (h[0] - theta);
    for t in 1..t_len {
        let e = h[t] - theta - phi * (h[t - 1] - theta);
        s += e * e;
    }
    let p = -((t_len as f64 - 1.0) / 2.0);
    draw_gig(p, s.max(1e-300), 1.0, rng)
}
