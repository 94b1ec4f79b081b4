//! Cross-section averages and the stacked K-dimensional representation.
//!
//! The estimation step works equation by equation on the block form (each
//! country regresses on its own lags, lags of its trade-weighted foreign
//! average, and lags of the aggregate block). Identification and impulse
//! responses need the solved stacked form
//! `y_t = c + G_1 y_{t-1} + ... + G_hmax y_{t-hmax} + eps_t`, obtained by
//! substituting the weighted averages back into each block's equations.

use nalgebra::{DMatrix, DVector};

use super::{CoefficientState, ModelError, ModelSpec, WeightMatrix};

/// Solved stacked VAR: intercept `c` and lag matrices `G_1..G_hmax`.
///
/// All lag matrices are stored at depth `max(P, Q, R)`; lags a block does not
/// use are zero blocks. The first 2m rows of `c` and of every `G_h` are zero:
/// surprise equations have no regressors.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedSystem {
    pub intercept: DVector<f64>,
    pub lags: Vec<DMatrix<f64>>,
}

/// Weighted cross-section averages `x_it = sum_j w_ij y_jt` for every block.
///
/// `values` is T×K in stacked column order; the result has N+1 entries of
/// shape T×k, index 0 for the aggregate block's average and index j for
/// country j's foreign average.
pub fn build_cross_section_averages(
    values: &DMatrix<f64>,
    spec: &ModelSpec,
    w: &WeightMatrix,
) -> Result<Vec<DMatrix<f64>>, ModelError> {
    if w.n_countries() != spec.n_countries {
        return Err(ModelError::DimensionMismatch {
            what: "weight matrix countries".to_string(),
            expected: spec.n_countries,
            actual: w.n_countries(),
        });
    }
    if values.ncols() != spec.system_size() {
        return Err(ModelError::DimensionMismatch {
            what: "stacked data columns".to_string(),
            expected: spec.system_size(),
            actual: values.ncols(),
        });
    }
    let t = values.nrows();
    let k = spec.k_country;
    let mut out = Vec::with_capacity(spec.n_countries + 1);
    for i in 0..=spec.n_countries {
        let mut avg = DMatrix::zeros(t, k);
        for j in 1..=spec.n_countries {
            let wij = w.get(i, j);
            if wij == 0.0 {
                continue;
            }
            let block = values.view((0, spec.country_block_start(j)), (t, k));
            for c in 0..k {
                for r in 0..t {
                    avg[(r, c)] += wij * block[(r, c)];
                }
            }
        }
        out.push(avg);
    }
    Ok(out)
}

/// Substitutes the weights into the block equations to form the stacked VAR.
///
/// Fails if coefficient shapes disagree with `spec`, if a structural-zero
/// slot is nonzero, or if the weight matrix is for a different country count.
pub fn assemble_stacked_system(
    spec: &ModelSpec,
    coeffs: &CoefficientState,
    w: &WeightMatrix,
) -> Result<StackedSystem, ModelError> {
    coeffs.check_shapes(spec)?;
    if let Some((row, col, value)) = coeffs.mask_violation(spec) {
        return Err(ModelError::MaskViolated {
            what: "aggregate block".to_string(),
            row,
            col,
            value,
        });
    }
    if w.n_countries() != spec.n_countries {
        return Err(ModelError::DimensionMismatch {
            what: "weight matrix countries".to_string(),
            expected: spec.n_countries,
            actual: w.n_countries(),
        });
    }

    let l = spec.block_len_aggregate();
    let k = spec.k_country;
    let k_sys = spec.system_size();
    let mut intercept = DVector::zeros(k_sys);
    let mut lags = vec![DMatrix::zeros(k_sys, k_sys); spec.max_lag()];

    // Aggregate block: own lags sit on the diagonal, foreign lags spread over
    // country columns with the aggregate weight row.
    intercept.rows_mut(0, l).copy_from(&coeffs.agg_intercept);
    for (p, a) in coeffs.agg_domestic.iter().enumerate() {
        lags[p].view_mut((0, 0), (l, l)).copy_from(a);
    }
    for (q, b) in coeffs.agg_foreign.iter().enumerate() {
        for j in 1..=spec.n_countries {
            let wj = w.get(0, j);
            if wj == 0.0 {
                continue;
            }
            let c0 = spec.country_block_start(j);
            let mut block = lags[q].view_mut((0, c0), (l, k));
            for c in 0..k {
                for r in 0..l {
                    block[(r, c)] += wj * b[(r, c)];
                }
            }
        }
    }

    // Country blocks. The diagonal block only receives the domestic lags
    // because w[j][j] = 0 keeps the foreign average off the own block.
    for j in 1..=spec.n_countries {
        let r0 = spec.country_block_start(j);
        let cb = &coeffs.countries[j - 1];
        intercept.rows_mut(r0, k).copy_from(&cb.intercept);
        for (p, a) in cb.domestic.iter().enumerate() {
            lags[p].view_mut((r0, r0), (k, k)).copy_from(a);
        }
        for (q, b) in cb.foreign.iter().enumerate() {
            for i in 1..=spec.n_countries {
                let wji = w.get(j, i);
                if wji == 0.0 {
                    continue;
                }
                let c0 = spec.country_block_start(i);
                let mut block = lags[q].view_mut((r0, c0), (k, k));
                for c in 0..k {
                    for r in 0..k {
                        block[(r, c)] += wji * b[(r, c)];
                    }
                }
            }
        }
        for (r, cm) in cb.aggregate.iter().enumerate() {
            lags[r].view_mut((r0, 0), (k, l)).copy_from(cm);
        }
    }

    Ok(StackedSystem { intercept, lags })
}

/// Companion form of the stacked lag polynomial: the top block row holds
/// `G_1 .. G_hmax`, the subdiagonal block rows are identities.
pub fn companion_matrix(system: &StackedSystem) -> DMatrix<f64> {
    let k = system.intercept.len();
    let h = system.lags.len();
    let n = k * h;
    let mut comp = DMatrix::zeros(n, n);
    for (i, g) in system.lags.iter().enumerate() {
        comp.view_mut((0, i * k), (k, k)).copy_from(g);
    }
    for b in 1..h {
        for r in 0..k {
            comp[(b * k + r, (b - 1) * k + r)] = 1.0;
        }
    }
    comp
}

/// Largest modulus among the companion eigenvalues; < 1 means the VAR is
/// stable and impulse responses decay.
pub fn spectral_radius(system: &StackedSystem) -> f64 {
    let comp = companion_matrix(system);
    // The unbounded QR iteration behind complex_eigenvalues never terminates
    // on defective companions — an all-zero lag polynomial gives an exactly
    // nilpotent matrix — so cap the iterations and fall back to Gelfand's
    // bound ‖Aᵖ‖^(1/p) with p ≥ n, which is exact for nilpotent matrices and
    // a safe overestimate otherwise.
    if let Some(schur) = nalgebra::linalg::Schur::try_new(comp.clone(), f64::EPSILON, 10_000) {
        return schur
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
    }
    let n = comp.nrows();
    let mut power = comp;
    let mut p = 1u32;
    while (p as usize) < n.max(2) {
        power = &power * &power;
        p *= 2;
    }
    power.norm().powf(1.0 / f64::from(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, Stream};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn test_spec() -> ModelSpec {
        ModelSpec {
            n_countries: 2,
            k_country: 2,
            m_surprise: 1,
            k_aggregate_low_freq: 2,
            lag_domestic: 2,
            lag_foreign: 1,
            lag_aggregate_in_country: 1,
            n_factors: 1,
            l: None,
            k_system: None,
        }
    }

    fn test_weights() -> WeightMatrix {
        WeightMatrix::from_matrix(DMatrix::from_row_slice(
            3,
            2,
            &[0.3, 0.7, 0.0, 1.0, 1.0, 0.0],
        ))
        .unwrap()
    }

    fn random_state(spec: &ModelSpec, seed: u64) -> CoefficientState {
        let mut rng = derive_rng(seed, Stream::Simulation, &[0]);
        let mut state = CoefficientState::zeros(spec);
        let skip = spec.n_surprise_rows();
        let draw = |rng: &mut rand_chacha::ChaCha20Rng| -> f64 {
            0.1 * rng.sample::<f64, _>(StandardNormal)
        };
        for row in skip..spec.block_len_aggregate() {
            state.agg_intercept[row] = draw(&mut rng);
        }
        for a in &mut state.agg_domestic {
            for c in 0..a.ncols() {
                for row in skip..a.nrows() {
                    a[(row, c)] = draw(&mut rng);
                }
            }
        }
        for b in &mut state.agg_foreign {
            for c in 0..b.ncols() {
                for row in skip..b.nrows() {
                    b[(row, c)] = draw(&mut rng);
                }
            }
        }
        for cb in &mut state.countries {
            for row in 0..cb.intercept.len() {
                cb.intercept[row] = draw(&mut rng);
            }
            for group in [&mut cb.domestic, &mut cb.foreign, &mut cb.aggregate] {
                for m in group {
                    for c in 0..m.ncols() {
                        for row in 0..m.nrows() {
                            m[(row, c)] = draw(&mut rng);
                        }
                    }
                }
            }
        }
        state
    }

    #[test]
    fn single_donor_average_copies_that_country() {
        let spec = test_spec();
        // Aggregate average takes only country 2; country 1's average is country 2 too.
        let w = test_weights();
        let w_single = WeightMatrix::from_matrix(DMatrix::from_row_slice(
            3,
            2,
            &[0.0, 1.0, 0.0, 1.0, 1.0, 0.0],
        ))
        .unwrap();
        let t = 5;
        let mut rng = derive_rng(7, Stream::Simulation, &[1]);
        let values = DMatrix::from_fn(t, spec.system_size(), |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        });
        let avgs = build_cross_section_averages(&values, &spec, &w_single).unwrap();
        let c2 = values.view((0, spec.country_block_start(2)), (t, spec.k_country));
        assert_eq!(avgs[0], DMatrix::from(c2));
        assert_eq!(avgs[1], DMatrix::from(c2));
        // country 2 averages country 1 regardless.
        let c1 = values.view((0, spec.country_block_start(1)), (t, spec.k_country));
        assert_eq!(avgs[2], DMatrix::from(c1));
        let _ = w;
    }

    #[test]
    fn averages_match_dense_selection_matrix_oracle() {
        let spec = test_spec();
        let w = test_weights();
        let t = 8;
        let mut rng = derive_rng(11, Stream::Simulation, &[2]);
        let values = DMatrix::from_fn(t, spec.system_size(), |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        });
        let avgs = build_cross_section_averages(&values, &spec, &w).unwrap();
        for i in 0..=spec.n_countries {
            // Oracle: avg_i = values * W_i' with W_i the k x K selection map.
            let mut sel = DMatrix::zeros(spec.k_country, spec.system_size());
            for j in 1..=spec.n_countries {
                for r in 0..spec.k_country {
                    sel[(r, spec.country_block_start(j) + r)] = w.get(i, j);
                }
            }
            let oracle = &values * sel.transpose();
            let diff = (&avgs[i] - &oracle).abs().max();
            assert!(diff <= 1e-12, "block {i}: max diff {diff}");
        }
    }

    #[test]
    fn zero_coefficients_assemble_to_zero_system() {
        let spec = test_spec();
        let system =
            assemble_stacked_system(&spec, &CoefficientState::zeros(&spec), &test_weights())
                .unwrap();
        assert_eq!(system.intercept, DVector::zeros(spec.system_size()));
        assert_eq!(system.lags.len(), spec.max_lag());
        for g in &system.lags {
            assert_eq!(g.abs().max(), 0.0);
        }
    }

    #[test]
    fn surprise_rows_of_the_stacked_system_are_exactly_zero() {
        let spec = test_spec();
        let system =
            assemble_stacked_system(&spec, &random_state(&spec, 3), &test_weights()).unwrap();
        for row in 0..spec.n_surprise_rows() {
            assert_eq!(system.intercept[row], 0.0);
            for g in &system.lags {
                for col in 0..spec.system_size() {
                    assert_eq!(g[(row, col)], 0.0, "row {row} col {col}");
                }
            }
        }
    }

    #[test]
    fn assembly_is_linear_in_the_coefficients() {
        let spec = test_spec();
        let w = test_weights();
        let s1 = random_state(&spec, 5);
        let s2 = random_state(&spec, 6);
        let mut sum = s1.clone();
        sum.agg_intercept += &s2.agg_intercept;
        for (a, b) in sum.agg_domestic.iter_mut().zip(&s2.agg_domestic) {
            *a += b;
        }
        for (a, b) in sum.agg_foreign.iter_mut().zip(&s2.agg_foreign) {
            *a += b;
        }
        for (ca, cb) in sum.countries.iter_mut().zip(&s2.countries) {
            ca.intercept += &cb.intercept;
            for (a, b) in ca.domestic.iter_mut().zip(&cb.domestic) {
                *a += b;
            }
            for (a, b) in ca.foreign.iter_mut().zip(&cb.foreign) {
                *a += b;
            }
            for (a, b) in ca.aggregate.iter_mut().zip(&cb.aggregate) {
                *a += b;
            }
        }
        let g1 = assemble_stacked_system(&spec, &s1, &w).unwrap();
        let g2 = assemble_stacked_system(&spec, &s2, &w).unwrap();
        let gs = assemble_stacked_system(&spec, &sum, &w).unwrap();
        assert!((&gs.intercept - &g1.intercept - &g2.intercept).abs().max() <= 1e-14);
        for h in 0..spec.max_lag() {
            let diff = (&gs.lags[h] - &g1.lags[h] - &g2.lags[h]).abs().max();
            assert!(diff <= 1e-14, "lag {h}: {diff}");
        }
    }

    #[test]
    fn mask_violations_fail_assembly() {
        let spec = test_spec();
        let mut state = random_state(&spec, 9);
        state.agg_foreign[0][(0, 1)] = 0.2;
        assert!(matches!(
            assemble_stacked_system(&spec, &state, &test_weights()),
            Err(ModelError::MaskViolated { row: 0, .. })
        ));
    }

    /// The load-bearing oracle: simulating through the block equations
    /// (aggregate + per-country, averages computed from data each period)
    /// must match simulating through the assembled stacked system.
    #[test]
    fn block_equation_simulation_matches_stacked_simulation() {
        let spec = test_spec();
        let w = test_weights();
        let state = random_state(&spec, 17);
        let system = assemble_stacked_system(&spec, &state, &w).unwrap();

        let l = spec.block_len_aggregate();
        let k = spec.k_country;
        let k_sys = spec.system_size();
        let hmax = spec.max_lag();
        let steps = 50;
        let mut rng = derive_rng(17, Stream::Simulation, &[3]);
        let mut history: Vec<DVector<f64>> = (0..hmax)
            .map(|_| DVector::from_fn(k_sys, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let shocks: Vec<DVector<f64>> = (0..steps)
            .map(|_| DVector::from_fn(k_sys, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();

        // Path A: block equations, averages recomputed from levels.
        let mut path_a = history.clone();
        for t in 0..steps {
            let len = path_a.len();
            let mut y = DVector::zeros(k_sys);
            // Aggregate block.
            for row in 0..l {
                y[row] = state.agg_intercept[row];
            }
            for (p, a) in state.agg_domestic.iter().enumerate() {
                let prev = &path_a[len - 1 - p];
                let contrib = a * prev.rows(0, l);
                for row in 0..l {
                    y[row] += contrib[row];
                }
            }
            for (q, b) in state.agg_foreign.iter().enumerate() {
                let prev = &path_a[len - 1 - q];
                let mut x0 = DVector::zeros(k);
                for j in 1..=spec.n_countries {
                    let wj = w.get(0, j);
                    x0 += wj * prev.rows(spec.country_block_start(j), k);
                }
                let contrib = b * x0;
                for row in 0..l {
                    y[row] += contrib[row];
                }
            }
            // Country blocks.
            for j in 1..=spec.n_countries {
                let r0 = spec.country_block_start(j);
                let cb = &state.countries[j - 1];
                for row in 0..k {
                    y[r0 + row] = cb.intercept[row];
                }
                for (p, a) in cb.domestic.iter().enumerate() {
                    let prev = &path_a[len - 1 - p];
                    let contrib = a * prev.rows(r0, k);
                    for row in 0..k {
                        y[r0 + row] += contrib[row];
                    }
                }
                for (q, b) in cb.foreign.iter().enumerate() {
                    let prev = &path_a[len - 1 - q];
                    let mut xj = DVector::zeros(k);
                    for i in 1..=spec.n_countries {
                        xj += w.get(j, i) * prev.rows(spec.country_block_start(i), k);
                    }
                    let contrib = b * xj;
                    for row in 0..k {
                        y[r0 + row] += contrib[row];
                    }
                }
                for (r, cm) in cb.aggregate.iter().enumerate() {
                    let prev = &path_a[len - 1 - r];
                    let contrib = cm * prev.rows(0, l);
                    for row in 0..k {
                        y[r0 + row] += contrib[row];
                    }
                }
            }
            y += &shocks[t];
            path_a.push(y);
        }

        // Path B: stacked system with the same history and shocks.
        let mut path_b = history.clone();
        for t in 0..steps {
            let len = path_b.len();
            let mut y = system.intercept.clone();
            for (h, g) in system.lags.iter().enumerate() {
                y += g * &path_b[len - 1 - h];
            }
            y += &shocks[t];
            path_b.push(y);
        }

        for t in 0..path_a.len() {
            let diff = (&path_a[t] - &path_b[t]).abs().max();
            assert!(diff <= 1e-10, "period {t}: max diff {diff}");
        }
        history.clear();
    }

    #[test]
    fn paper_scale_system_has_expected_shape() {
        let spec = ModelSpec {
            n_countries: 17,
            k_country: 5,
            m_surprise: 2,
            k_aggregate_low_freq: 12,
            lag_domestic: 4,
            lag_foreign: 4,
            lag_aggregate_in_country: 4,
            n_factors: 10,
            l: None,
            k_system: None,
        };
        // Equal weights for everyone (zero self-weight).
        let n = spec.n_countries;
        let mut w = DMatrix::zeros(n + 1, n);
        for j in 0..n {
            w[(0, j)] = 1.0 / n as f64;
        }
        for i in 1..=n {
            for j in 0..n {
                if j + 1 != i {
                    w[(i, j)] = 1.0 / (n - 1) as f64;
                }
            }
        }
        let w = WeightMatrix::from_matrix(w).unwrap();
        let system =
            assemble_stacked_system(&spec, &CoefficientState::zeros(&spec), &w).unwrap();
        assert_eq!(system.intercept.len(), 101);
        assert_eq!(system.lags.len(), 4);
        assert_eq!(system.lags[0].shape(), (101, 101));
    }

    #[test]
    fn companion_eigenvalues_match_ar2_roots() {
        // y_t = 0.5 y_{t−1} + 0.24 y_{t−2} factors as (λ−0.8)(λ+0.3).
        let system = StackedSystem {
            intercept: DVector::zeros(1),
            lags: vec![
                DMatrix::from_element(1, 1, 0.5),
                DMatrix::from_element(1, 1, 0.24),
            ],
        };
        let comp = companion_matrix(&system);
        assert_eq!(comp.shape(), (2, 2));
        assert_eq!(comp[(0, 0)], 0.5);
        assert_eq!(comp[(0, 1)], 0.24);
        assert_eq!(comp[(1, 0)], 1.0);
        assert_eq!(comp[(1, 1)], 0.0);
        assert!((spectral_radius(&system) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn zero_dynamics_have_spectral_radius_zero() {
        // The all-zero lag polynomial yields a nilpotent companion, which the
        // QR eigenvalue iteration cannot handle; the radius must still come
        // back as exactly stable rather than hanging or erroring.
        let system = StackedSystem {
            intercept: DVector::zeros(11),
            lags: vec![DMatrix::zeros(11, 11), DMatrix::zeros(11, 11)],
        };
        assert_eq!(spectral_radius(&system), 0.0);
    }

    #[test]
    fn companion_iteration_reproduces_the_var_recursion() {
        let spec = test_spec();
        let w = test_weights();
        let state = random_state(&spec, 12);
        let system = assemble_stacked_system(&spec, &state, &w).unwrap();
        let k = spec.system_size();
        let h = spec.max_lag();
        let comp = companion_matrix(&system);

        let mut rng = derive_rng(13, Stream::Simulation, &[1]);
        // Random stacked history [y_{t−1}; y_{t−2}] and zero shocks.
        let hist = DVector::from_fn(k * h, |_, _| rng.sample::<f64, _>(StandardNormal));
        let next = &comp * &hist;
        let mut direct = DVector::zeros(k);
        for lag in 0..h {
            direct += &system.lags[lag] * hist.rows(lag * k, k);
        }
        assert!((next.rows(0, k) - direct).abs().max() < 1e-12);
        // Shifted history moves down one slot.
        assert!((next.rows(k, k) - hist.rows(0, k)).abs().max() < 1e-15);
    }
}
