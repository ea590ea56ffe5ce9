use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::datagen::line_template;
use crate::dictionary::Dictionary;
use crate::energy::SparseCodingProblem;
use crate::learning::ModelKind;
use crate::solver::{reference::lasso_coordinate_descent, solve_lasso, Momentum};

fn model_with_pooling(a: Array2<f64>) -> Model {
    let (simple, _) = a.dim();
    let w = Dictionary::identity(simple, false);
    Model::new(ModelKind::SplitLayer2, w, Some(Dictionary::new(a, true).unwrap()), 0.5, 0.3, 1).unwrap()
}

#[test]
fn identity_pooling_groups_each_unit_with_itself() {
    let report = grouping_report(&model_with_pooling(Array2::eye(5)), 1).unwrap();
    assert!(!report.clamped);
    for (j, g) in report.groups.iter().enumerate() {
        assert_eq!(g, &vec![(j, 1.0)]);
    }
}

#[test]
fn grouping_matches_selection_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        // Coarse values so that ties actually occur.
        let a = Array2::from_shape_fn((12, 4), |_| rng.random_range(0..4) as f64 + 0.5);
        let a = Dictionary::normalized(a, true).unwrap().into_inner();
        let model = model_with_pooling(a.clone());
        let report = grouping_report(&model, 5).unwrap();
        for (j, group) in report.groups.iter().enumerate() {
            let mut taken = [false; 12];
            for &(unit, weight) in group {
                // Oracle: first index among the remaining maxima.
                let mut best = None;
                for i in 0..12 {
                    if !taken[i] && best.is_none_or(|b: usize| a[[i, j]] > a[[b, j]]) {
                        best = Some(i);
                    }
                }
                let best = best.unwrap();
                taken[best] = true;
                assert_eq!((unit, weight), (best, a[[best, j]]));
            }
        }
    }
    let report = grouping_report(&model_with_pooling(Array2::eye(3)), 10).unwrap();
    assert!(report.clamped);
    assert!(report.groups.iter().all(|g| g.len() == 3));
}

/// Simple units are the line templates plus one checkerboard unit; invariant
/// unit `o < 4` pools the lines of orientation `o`, the last one pools only
/// the checkerboard.
fn wired_toy_model(cfg: &ToyConfig) -> Model {
    let n_lines = cfg.n_orientations * cfg.n_positions;
    let mut w = Array2::zeros((cfg.pixels(), n_lines + 1));
    for o in 0..cfg.n_orientations {
        for k in 0..cfg.n_positions {
            let t = flatten(&line_template(cfg, o, k));
            w.column_mut(o * cfg.n_positions + k).assign(&t);
        }
    }
    w.column_mut(n_lines)
        .assign(&Array1::from_shape_fn(cfg.pixels(), |p| if (p / cfg.size + p % cfg.size).is_multiple_of(2) { 1.0 } else { -1.0 }));
    let mut a = Array2::zeros((n_lines + 1, cfg.n_orientations + 1));
    for o in 0..cfg.n_orientations {
        for k in 0..cfg.n_positions {
            a[[o * cfg.n_positions + k, o]] = 1.0;
        }
    }
    a[[n_lines, cfg.n_orientations]] = 1.0;
    Model::new(
        ModelKind::SplitLayer2,
        Dictionary::normalized(w, false).unwrap(),
        Some(Dictionary::normalized(a, true).unwrap()),
        0.1,
        0.01,
        1,
    )
    .unwrap()
}

#[test]
fn hand_wired_toy_model_is_perfectly_pure() {
    let cfg = ToyConfig::default();
    let model = wired_toy_model(&cfg);
    let opts = SolverOptions {
        max_iter: 500,
        tol: 1e-10,
        momentum: Momentum::Fista,
        ..SolverOptions::default()
    };
    let report = orientation_purity(&model, &cfg, 200, &opts, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_eq!(report.n_active(), 4, "{report:?}");
    for (o, unit) in report.active.iter().enumerate() {
        assert_eq!((unit.unit, unit.orientation), (o, o));
        assert!(unit.purity > 1.0 - 1e-12, "{unit:?}");
    }
    assert_eq!(report.frequencies[4], 0.0);
    assert!(report.passes(4, 0.9));

    let orientations = simple_unit_orientations(&model, &cfg).unwrap();
    for (i, &(o, c)) in orientations.iter().take(40).enumerate() {
        assert_eq!(o, i / cfg.n_positions);
        assert!((c - 1.0).abs() < 1e-12);
    }
    let groups = grouping_report(&model, 9).unwrap();
    for (o, g) in groups.groups.iter().take(4).enumerate() {
        assert!(g.iter().all(|&(i, _)| orientations[i].0 == o));
    }
}

#[test]
fn purity_needs_an_invariant_layer() {
    let cfg = ToyConfig::default();
    let w = Dictionary::random(cfg.pixels(), 5, false, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let model = Model::new(ModelKind::SplitLayer1, w, None, 0.5, 0.0, 1).unwrap();
    let r = orientation_purity(&model, &cfg, 10, &SolverOptions::default(), &mut ChaCha8Rng::seed_from_u64(3));
    assert!(r.is_err());
}

fn trace_of(energies: Vec<f64>) -> SolverTrace {
    SolverTrace {
        initial_energy: energies.first().copied().unwrap_or(0.0) + 1.0,
        iterations: energies.len(),
        backtracks: vec![0; energies.len()],
        lipschitz: vec![1.0; energies.len()],
        energies,
    }
}

#[test]
fn converged_trace_has_zero_ratio() {
    let check = verify_rate(&trace_of(vec![3.0; 10]), 3.0, 2.0, 0.0, RateKind::Fista).unwrap();
    assert!(check.holds);
    assert_eq!(check.worst_ratio, 0.0);
    assert!(verify_rate(&trace_of(vec![3.0; 10]), 3.5, 2.0, 1.0, RateKind::Ista).is_err());
}

#[test]
fn accelerated_lasso_meets_its_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for kind in [RateKind::Fista, RateKind::Ista] {
        for _ in 0..5 {
            let w = Dictionary::random(16, 32, false, &mut rng).unwrap();
            let x = Array1::from_shape_fn(16, |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
            let p = SparseCodingProblem::new(w, x, 0.2).unwrap();
            let z_star = lasso_coordinate_descent(&p, 1e-14, 100_000);
            let e_star = crate::energy::eval_sparse_energy(&p, &z_star).unwrap();
            let opts = SolverOptions {
                max_iter: 300,
                tol: 0.0,
                momentum: if kind == RateKind::Fista { Momentum::Fista } else { Momentum::None },
                ..SolverOptions::default()
            };
            let (_, trace) = solve_lasso(&p, &opts).unwrap();
            let lipschitz = trace.lipschitz.iter().copied().fold(0.0, f64::max);
            let d = z_star.dot(&z_star);
            let check = verify_rate(&trace, e_star.min(trace.final_energy()), lipschitz, d, kind).unwrap();
            assert!(check.holds, "{kind:?} {check:?}");
        }
    }
}

proptest! {
    #[test]
    fn a_single_violation_is_always_reported(
        n in 1usize..60,
        seed in any::<u64>(),
        lipschitz in 0.1f64..10.0,
        d in 0.0f64..10.0,
        excess in 1e-9f64..1.0,
        fista in any::<bool>(),
    ) {
        let kind = if fista { RateKind::Fista } else { RateKind::Ista };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e_star = rng.random_range(-5.0..5.0);
        // Everything within the bound, then one iterate pushed above it.
        let mut energies: Vec<f64> = (1..=n)
            .map(|k| e_star + rng.random_range(0.0..1.0) * kind.bound(k, lipschitz, d))
            .collect();
        let bad = rng.random_range(1..=n);
        energies[bad - 1] = e_star + kind.bound(bad, lipschitz, d) * (1.0 + excess) + 1e-9;
        let check = verify_rate(&trace_of(energies.clone()), e_star, lipschitz, d, kind).unwrap();
        prop_assert!(!check.holds);
        prop_assert!(check.worst_ratio > 1.0);
        energies[bad - 1] = e_star;
        prop_assert!(verify_rate(&trace_of(energies), e_star, lipschitz, d, kind).unwrap().holds);
    }
}

fn map_from(grid: Array2<f64>) -> ResponseMap {
    let (nb, nt) = grid.dim();
    ResponseMap {
        unit_id: 0,
        kind: UnitKind::Invariant,
        b_samples: (0..nb).map(|i| i as f64 * 0.5).collect(),
        theta_samples: (0..nt).map(|i| i as f64).collect(),
        grid,
    }
}

#[test]
fn tuning_width_counts_samples_above_half_peak_at_best_orientation() {
    let mut g = Array2::zeros((9, 2));
    for (i, v) in [0.0, 0.2, 0.6, 0.9, 1.0, 0.7, 0.5, 0.1, 0.0].iter().enumerate() {
        g[[i, 1]] = *v;
    }
    g[[0, 0]] = 0.8;
    let map = map_from(g);
    // 0.6, 0.9, 1.0, 0.7 exceed 0.5; spacing 0.5.
    assert_eq!(map.tuning_width(), Some(2.0));
    assert_eq!(map_from(Array2::zeros((3, 3))).tuning_width(), None);
}

#[test]
fn overlap_of_identical_and_disjoint_regions() {
    let a = map_from(Array2::from_shape_fn((4, 4), |(i, _)| if i < 2 { 1.0 } else { 0.0 }));
    let b = map_from(Array2::from_shape_fn((4, 4), |(i, _)| if i >= 2 { 1.0 } else { 0.0 }));
    let silent = map_from(Array2::zeros((4, 4)));
    assert_eq!(mean_pairwise_overlap(&[a.clone(), a.clone()]), 1.0);
    assert_eq!(mean_pairwise_overlap(&[a.clone(), b.clone(), silent]), 0.0);
    assert!((mean_pairwise_overlap(&[a.clone(), a, b]) - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(median(&[3.0, f64::NAN, 1.0, 2.0]), Some(2.0));
    assert_eq!(median(&[4.0, 1.0]), Some(2.5));
    assert_eq!(median(&[]), None);
}

fn small_edge_model() -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = Dictionary::random(36, 20, false, &mut rng).unwrap();
    let a = Dictionary::random(20, 4, true, &mut rng).unwrap();
    Model::new(ModelKind::SplitLayer2, w, Some(a), 0.5, 0.3, 2).unwrap()
}

#[test]
fn response_maps_do_not_depend_on_grid_order() {
    let model = small_edge_model();
    let opts = SolverOptions {
        max_iter: 300,
        tol: 1e-10,
        ..SolverOptions::fista()
    };
    let grid = ResponseGrid::uniform((-3.0, 3.0), 5, 4, 1.0);
    let mut reversed = grid.clone();
    reversed.b_samples.reverse();
    reversed.theta_samples.reverse();
    for kind in [UnitKind::Simple, UnitKind::Invariant] {
        let forward = response_maps(&model, kind, &[0, 3], &grid, &opts).unwrap();
        let backward = response_maps(&model, kind, &[0, 3], &reversed, &opts).unwrap();
        for (f, b) in forward.iter().zip(&backward) {
            for ((ib, it), &v) in f.grid.indexed_iter() {
                assert_eq!(v, b.grid[[4 - ib, 3 - it]]);
                assert!(v >= 0.0);
            }
        }
    }
    let single = response_map(&model, UnitKind::Invariant, 3, &grid, &opts).unwrap();
    assert_eq!(single.grid, response_maps(&model, UnitKind::Invariant, &[0, 3], &grid, &opts).unwrap()[1].grid);
    assert!(response_maps(&model, UnitKind::Invariant, &[4], &grid, &opts).is_err());
    assert!(response_maps(&model, UnitKind::Simple, &[], &grid, &opts).unwrap().is_empty());
}

#[test]
fn default_grid_matches_documented_sampling() {
    let g = ResponseGrid::default();
    assert_eq!(g.b_samples.len(), 41);
    assert_eq!((g.b_samples[0], g.b_samples[40], g.b_samples[1]), (-10.0, 10.0, -9.5));
    assert_eq!(g.theta_samples.len(), 36);
    assert!((g.theta_samples[35] - 35.0 * std::f64::consts::PI / 36.0).abs() < 1e-15);
    assert_eq!(g.k, 1.0);
}
