//! Forward-filter backward-sampler for a univariate log-volatility path.
//!
//! Conditional on mixture indicators the model is linear-Gaussian:
//!
//!   y*_t = h_t + u_t,              u_t ~ N(m_{r_t}, v²_{r_t})
//!   h_t  = θ + φ(h_{t−1} − θ) + ς e_t,   h_1 ~ N(θ, ς²/(1−φ²))
//!
//! so the joint posterior of the path is Gaussian and can be drawn exactly
//! with one Kalman pass and one backward sampling pass.

use rand::Rng;
use rand_distr::StandardNormal;

use super::mixture::{MIX_MEAN, MIX_VAR};
use super::SvParams;
use crate::samplers::SamplerError;

/// Draws a full log-volatility path given mixture indicators.
pub fn ffbs_given_indicators<R: Rng + ?Sized>(
    ystar: &[f64],
    indicators: &[usize],
    params: &SvParams,
    rng: &mut R,
) -> Result<Vec<f64>, SamplerError> {
    let t_len = ystar.len();
    if t_len == 0 || indicators.len() != t_len {
        return Err(SamplerError::DimensionMismatch {
            what: "volatility path inputs".into(),
            expected: t_len.max(1),
            actual: indicators.len(),
        });
    }
    params.validate()?;
    let theta = params.theta;
    let phi = params.phi;
    let s2 = params.sigma * params.sigma;

    // Forward filter: a_t = E[h_t | y*_{1..t}], p_t = Var[h_t | y*_{1..t}].
    let mut a_filt = vec![0.0f64; t_len];
    let mut p_filt = vec![0.0f64; t_len];
    let mut a_prev = 0.0;
    let mut p_prev = 0.0;
    for t in 0..t_len {
        let (a_pred, p_pred) = if t == 0 {
            (theta, s2 / (1.0 - phi * phi))
        } else {
            (theta + phi * (a_prev - theta), phi * phi * p_prev + s2)
        };
        let r = indicators[t];
        let z = ystar[t] - MIX_MEAN[r];
        let f = p_pred + MIX_VAR[r];
        let gain = p_pred / f;
        a_filt[t] = a_pred + gain * (z - a_pred);
        p_filt[t] = (1.0 - gain) * p_pred;
        a_prev = a_filt[t];
        p_prev = p_filt[t];
    }

    // Backward sampling: h_T from the filtered marginal, then
    // h_t | h_{t+1} combines the filtered density with the transition.
    let mut h = vec![0.0f64; t_len];
    let z: f64 = rng.sample(StandardNormal);
    h[t_len - 1] = a_filt[t_len - 1] + p_filt[t_len - 1].sqrt() * z;
    for t in (0..t_len - 1).rev() {
        let prec = 1.0 / p_filt[t] + phi * phi / s2;
        let num = a_filt[t] / p_filt[t] + phi * (h[t + 1] - theta * (1.0 - phi)) / s2;
        let mean = num / prec;
        let z: f64 = rng.sample(StandardNormal);
        h[t] = mean + z / prec.sqrt();
    }
    for (t, v) in h.iter().enumerate() {
        if !v.is_finite() {
            return Err(SamplerError::NonFinite {
                what: format!("log-volatility draw at period {t}"),
            });
        }
    }
    Ok(h)
}
