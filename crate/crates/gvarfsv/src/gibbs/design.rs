//! Design matrices and the equation plan for the equation-wise draws.
//!
//! The block structure makes every free equation a heteroscedastic regression
//! of one series on a fixed set of lagged regressors. Those regressors depend
//! only on the data and the weights, so the design matrices are built once
//! per chain: one T_eff×(1 + lP + kQ) matrix shared by the aggregate
//! equations and one T_eff×(1 + k(P+Q) + lR) matrix per country. Surprise
//! equations have no regressors at all and never appear in the plan, which is
//! what keeps their coefficients exactly zero in every draw.

use nalgebra::{DMatrix, DVector};

use super::GibbsError;
use crate::data::PanelDataset;
use crate::model::{build_cross_section_averages, CoefficientState, ModelSpec, WeightMatrix};

/// Precomputed regression targets and design matrices for one panel.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignSet {
    /// Effective sample length T − max(P, Q, R).
    pub t_eff: usize,
    /// K×T_eff matrix of regression targets, one row per stacked series.
    pub targets: DMatrix<f64>,
    /// T_eff×(1 + lP + kQ) design shared by the aggregate equations:
    /// intercept, P lags of the aggregate block, Q lags of its average.
    pub aggregate: DMatrix<f64>,
    /// Per-country T_eff×(1 + k(P+Q) + lR) designs: intercept, P domestic
    /// lags, Q foreign-average lags, R aggregate-block lags.
    pub countries: Vec<DMatrix<f64>>,
}

/// Builds the design set from a standardized panel.
pub fn build_design_set(
    spec: &ModelSpec,
    panel: &PanelDataset,
    weights: &WeightMatrix,
) -> Result<DesignSet, GibbsError> {
    let h = spec.max_lag();
    let t = panel.n_periods();
    if t < h + 2 {
        return Err(GibbsError::BadConfig(format!(
            "panel has {t} periods but max lag {h} needs at least {}",
            h + 2
        )));
    }
    let t_eff = t - h;
    let k = spec.k_country;
    let l = spec.block_len_aggregate();
    let k_sys = spec.system_size();
    let averages = build_cross_section_averages(&panel.values, spec, weights)?;

    let targets = DMatrix::from_fn(k_sys, t_eff, |i, tt| panel.values[(tt + h, i)]);

    let mut aggregate = DMatrix::zeros(t_eff, spec.agg_regressor_count());
    for tt in 0..t_eff {
        let now = tt + h;
        let mut c = 0;
        aggregate[(tt, c)] = 1.0;
        c += 1;
        for p in 1..=spec.lag_domestic {
            for s in 0..l {
                aggregate[(tt, c + s)] = panel.values[(now - p, s)];
            }
            c += l;
        }
        for q in 1..=spec.lag_foreign {
            for s in 0..k {
                aggregate[(tt, c + s)] = averages[0][(now - q, s)];
            }
            c += k;
        }
        debug_assert_eq!(c, spec.agg_regressor_count());
    }

    let mut countries = Vec::with_capacity(spec.n_countries);
    for j in 1..=spec.n_countries {
        let start = spec.country_block_start(j);
        let mut design = DMatrix::zeros(t_eff, spec.country_regressor_count());
        for tt in 0..t_eff {
            let now = tt + h;
            let mut c = 0;
            design[(tt, c)] = 1.0;
            c += 1;
            for p in 1..=spec.lag_domestic {
                for s in 0..k {
                    design[(tt, c + s)] = panel.values[(now - p, start + s)];
                }
                c += k;
            }
            for q in 1..=spec.lag_foreign {
                for s in 0..k {
                    design[(tt, c + s)] = averages[j][(now - q, s)];
                }
                c += k;
            }
            for r in 1..=spec.lag_aggregate_in_country {
                for s in 0..l {
                    design[(tt, c + s)] = panel.values[(now - r, s)];
                }
                c += l;
            }
            debug_assert_eq!(c, spec.country_regressor_count());
        }
        countries.push(design);
    }

    Ok(DesignSet {
        t_eff,
        targets,
        aggregate,
        countries,
    })
}

/// One free equation of the system: which series it explains, which block it
/// belongs to, and where its coefficients sit in that block's stacked vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Equation {
    /// Row of the stacked system this equation explains.
    pub global_row: usize,
    /// 0 for the aggregate block, j for country j (1-based).
    pub block: usize,
    /// Slot in the block's coefficient vector for each design column, in
    /// design-column order. Strided because the vectorization is column-major
    /// over (equation, regressor).
    pub slots: Vec<usize>,
}

impl Equation {
    /// Extracts this equation's entries from a block-level vector.
    pub fn gather(&self, block_vec: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.slots.len(), |c, _| block_vec[self.slots[c]])
    }

    /// Writes this equation's entries back into a block-level vector.
    pub fn scatter(&self, values: &DVector<f64>, block_vec: &mut DVector<f64>) {
        for (c, &slot) in self.slots.iter().enumerate() {
            block_vec[slot] = values[c];
        }
    }
}

/// All free equations in draw order: the k̃ aggregate equations first, then
/// country 1..N row by row. Surprise equations are excluded.
pub fn equation_plan(spec: &ModelSpec) -> Vec<Equation> {
    let kt = spec.k_aggregate_low_freq;
    let skip = spec.n_surprise_rows();
    let k = spec.k_country;
    let mut plan = Vec::with_capacity(kt + spec.n_countries * k);
    for row in 0..kt {
        plan.push(Equation {
            global_row: skip + row,
            block: 0,
            slots: (0..spec.agg_regressor_count()).map(|c| c * kt + row).collect(),
        });
    }
    for j in 1..=spec.n_countries {
        for row in 0..k {
            plan.push(Equation {
                global_row: spec.country_block_start(j) + row,
                block: j,
                slots: (0..spec.country_regressor_count())
                    .map(|c| c * k + row)
                    .collect(),
            });
        }
    }
    plan
}

/// K×T_eff VAR residuals ε = y − c − Σ_h G_h y_{t−h} at the given
/// coefficients, computed block by block from the design matrices. Surprise
/// rows have no regressors, so their residual is the series itself.
pub fn var_residuals(
    spec: &ModelSpec,
    designs: &DesignSet,
    coeffs: &CoefficientState,
) -> DMatrix<f64> {
    let mut resid = designs.targets.clone();
    let t_eff = designs.t_eff;
    let kt = spec.k_aggregate_low_freq;
    let skip = spec.n_surprise_rows();
    let k = spec.k_country;

    let a0 = coeffs.vectorize_aggregate(spec);
    let beta = DMatrix::from_fn(spec.agg_regressor_count(), kt, |c, r| a0[c * kt + r]);
    let fitted = &designs.aggregate * beta;
    for r in 0..kt {
        for tt in 0..t_eff {
            resid[(skip + r, tt)] -= fitted[(tt, r)];
        }
    }

    for j in 1..=spec.n_countries {
        let aj = coeffs.vectorize_country(spec, j);
        let beta = DMatrix::from_fn(spec.country_regressor_count(), k, |c, r| aj[c * k + r]);
        let fitted = &designs.countries[j - 1] * beta;
        let start = spec.country_block_start(j);
        for r in 0..k {
            for tt in 0..t_eff {
                resid[(start + r, tt)] -= fitted[(tt, r)];
            }
        }
    }
    resid
}
