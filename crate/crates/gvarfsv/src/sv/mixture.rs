//! Ten-component Gaussian mixture approximation to the log-χ²(1)
//! distribution, used to linearize log squared shocks.
//!
//! With shock_t = exp(h_t/2)·ε_t, the transformed observation
//! y*_t = ln(shock_t²) = h_t + ln(ε_t²) has a log-χ²(1) error, approximated
//! by this fixed mixture; conditioning on a component indicator makes the
//! state space linear-Gaussian so the whole path can be forward-filtered and
//! backward-sampled.

use rand::Rng;

use crate::samplers::SamplerError;

/// Component probabilities.
pub const MIX_P: [f64; 10] = [
    0.00609, 0.04775, 0.13057, 0.20674, 0.22715, 0.18842, 0.12047, 0.05591, 0.01575, 0.00115,
];
/// Component means (of ln ε² itself).
pub const MIX_MEAN: [f64; 10] = [
    1.92677, 1.34744, 0.73504, 0.02266, -0.85173, -1.97278, -3.46788, -5.55246, -8.68384,
    -14.65000,
];
/// Component variances.
pub const MIX_VAR: [f64; 10] = [
    0.11265, 0.17788, 0.26768, 0.40611, 0.62699, 0.98583, 1.57469, 2.54498, 4.16591, 7.33342,
];

/// Draws one mixture indicator per period from the conditional
/// p(r_t | y*_t, h_t) ∝ p_r · N(y*_t − h_t; m_r, v²_r).
///
/// Responsibilities are formed in log space; if every component underflows
/// at some period (non-finite observation) the error carries that period's
/// index.
pub fn draw_indicators<R: Rng + ?Sized>(
    ystar: &[f64],
    h: &[f64],
    rng: &mut R,
) -> Result<Vec<usize>, SamplerError> {
    let mut out = Vec::with_capacity(ystar.len());
    for t in 0..ystar.len() {
        let resid = ystar[t] - h[t];
        let mut logw = [0.0f64; 10];
        let mut max = f64::NEG_INFINITY;
        for r in 0..10 {
            let d = resid - MIX_MEAN[r];
            logw[r] = MIX_P[r].ln() - 0.5 * MIX_VAR[r].ln() - 0.5 * d * d / MIX_VAR[r];
            if logw[r] > max {
                max = logw[r];
            }
        }
        if !max.is_finite() {
            return Err(SamplerError::NonFinite {
                what: format!("mixture responsibilities at period {t}"),
            });
        }
        let mut total = 0.0;
        let mut w = [0.0f64; 10];
        for r in 0..10 {
            w[r] = (logw[r] - max).exp();
            total += w[r];
        }
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = 9;
        for r in 0..10 {
            acc += w[r];
            if u < acc {
                pick = r;
                break;
            }
        }
        out.push(pick);
    }
    Ok(out)
}
