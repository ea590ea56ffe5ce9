//! Seeded random problem families for convergence and descent checks.

use ndarray::Array1;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{stream_rng, streams};
use crate::analysis::{verify_rate, RateKind};
use crate::dictionary::Dictionary;
use crate::energy::{
    eval_sparse_energy, HierarchicalEnergy, LayerSpec, NonsmoothFactor, SignConstraint, SmoothFactor,
    SparseCodingProblem, UnifiedProblem,
};
use crate::error::Result;
use crate::solver::{
    check_descent_lemma, reference::lasso_coordinate_descent, solve_hierarchical, solve_lasso, CodeState, Momentum,
    SolverOptions,
};

fn randn(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal))
}

/// Lasso with a random unit-column dictionary and a standard normal input.
pub fn random_lasso(rng: &mut ChaCha8Rng, rows: usize, cols: usize, alpha: f64) -> Result<SparseCodingProblem> {
    let w = Dictionary::random(rows, cols, false, rng)?;
    let x = randn(rng, rows);
    SparseCodingProblem::new(w, x, alpha)
}

/// Convex two-layer energy: layer 0 reconstructs `x` with `W` and scales
/// layer 1 by a constant `c`; layer 1 reconstructs `y` with `B` under an L1
/// penalty. Returns the energy and an admissible common Lipschitz constant.
pub fn convex_pair(rng: &mut ChaCha8Rng) -> Result<(HierarchicalEnergy, f64)> {
    let w = Dictionary::random(6, 8, false, rng)?;
    let b = Dictionary::random(5, 7, false, rng)?;
    let c = rng.random_range(0.5..2.0);
    let beta = rng.random_range(0.1..0.5);
    let lipschitz = w.spectral_norm_sq().max(c * b.spectral_norm_sq());
    let first = LayerSpec::new(
        SmoothFactor::QuadraticReconstruction {
            dict: w,
            targets: randn(rng, 6),
            mask: None,
        },
        NonsmoothFactor::Constant(c),
        SignConstraint::Free,
    )?;
    let second = LayerSpec::new(
        SmoothFactor::QuadraticReconstruction {
            dict: b,
            targets: randn(rng, 5),
            mask: None,
        },
        NonsmoothFactor::WeightedL1(beta),
        SignConstraint::Free,
    )?;
    Ok((HierarchicalEnergy::new(vec![first, second])?, lipschitz))
}

/// Random instance of the unified (nonconvex) two-layer energy.
pub fn random_unified(rng: &mut ChaCha8Rng) -> Result<UnifiedProblem> {
    let pixels = rng.random_range(4..=12);
    let simple = rng.random_range(4..=16);
    let invariant = rng.random_range(2..=6);
    let frames = rng.random_range(1..=3);
    let w = Dictionary::random(pixels, simple, false, rng)?;
    let a = Dictionary::random(simple, invariant, true, rng)?;
    let xs = (0..frames).map(|_| randn(rng, pixels)).collect();
    UnifiedProblem::new(w, a, xs, rng.random_range(0.1..1.0), rng.random_range(0.05..0.5))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub instance: usize,
    pub rows: usize,
    pub cols: usize,
    pub holds: bool,
    pub worst_ratio: f64,
    pub worst_k: usize,
}

/// Runs `n` random lasso instances (at most 32×64) for `iterations` steps
/// and checks each trace against the rate bound of `kind`, with the
/// reference minimum from coordinate descent.
pub fn rate_table(n: usize, seed: u64, kind: RateKind, iterations: usize) -> Result<Vec<RateRow>> {
    let mut rng = stream_rng(seed, streams::PROBLEMS);
    let opts = SolverOptions {
        max_iter: iterations,
        tol: 0.0,
        momentum: match kind {
            RateKind::Fista => Momentum::Fista,
            RateKind::Ista => Momentum::None,
        },
        ..SolverOptions::default()
    };
    (0..n)
        .map(|instance| {
            let rows = rng.random_range(8..=32);
            let cols = rng.random_range(rows..=64);
            let alpha = rng.random_range(0.05..0.5);
            let p = random_lasso(&mut rng, rows, cols, alpha)?;
            let z_star = lasso_coordinate_descent(&p, 1e-12, 1_000_000);
            let (_, trace) = solve_lasso(&p, &opts)?;
            let e_star = eval_sparse_energy(&p, &z_star)?.min(trace.energies.iter().copied().fold(f64::INFINITY, f64::min));
            let lipschitz = trace.lipschitz.iter().copied().fold(opts.l0, f64::max);
            let check = verify_rate(&trace, e_star, lipschitz, z_star.dot(&z_star), kind)?;
            Ok(RateRow {
                instance,
                rows,
                cols,
                holds: check.holds,
                worst_ratio: check.worst_ratio,
                worst_k: check.worst_k,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentRow {
    pub family: &'static str,
    pub instance: usize,
    pub slack: f64,
    pub holds: bool,
}

/// Samples `n` random point pairs on each convex family (one-layer lasso and
/// the convex two-layer energy) and evaluates the descent inequality.
pub fn descent_table(n: usize, seed: u64) -> Result<Vec<DescentRow>> {
    let mut rng = stream_rng(seed, streams::PROBLEMS);
    let mut rows = Vec::with_capacity(2 * n);
    for instance in 0..n {
        let p = random_lasso(&mut rng, 6, 9, 0.3)?;
        let lipschitz = p.dict.spectral_norm_sq() * rng.random_range(1.0..3.0);
        let h = p.to_hierarchical();
        let (z, z_hat) = (vec![randn(&mut rng, 9)], vec![randn(&mut rng, 9)]);
        let check = check_descent_lemma(&h, &z, &z_hat, lipschitz)?;
        rows.push(DescentRow {
            family: "lasso",
            instance,
            slack: check.slack,
            holds: check.holds,
        });
    }
    for instance in 0..n {
        let (h, lipschitz) = convex_pair(&mut rng)?;
        let z = vec![randn(&mut rng, 8), randn(&mut rng, 7)];
        let z_hat = vec![randn(&mut rng, 8), randn(&mut rng, 7)];
        let check = check_descent_lemma(&h, &z, &z_hat, lipschitz)?;
        rows.push(DescentRow {
            family: "convex_pair",
            instance,
            slack: check.slack,
            holds: check.holds,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneRow {
    pub family: &'static str,
    pub instance: usize,
    /// Largest energy increase between consecutive iterates.
    pub max_increase: f64,
    pub monotone: bool,
}

/// Absolute slack allowed on an energy increase.
pub const MONOTONE_SLACK: f64 = 1e-12;

/// Runs the solver without momentum on `n` convex and `n` nonconvex random
/// instances from random starting points and records the worst increase.
pub fn monotone_table(n: usize, seed: u64, iterations: usize) -> Result<Vec<MonotoneRow>> {
    let mut rng = stream_rng(seed, streams::PROBLEMS);
    let opts = SolverOptions {
        max_iter: iterations,
        tol: 0.0,
        momentum: Momentum::None,
        ..SolverOptions::default()
    };
    let mut rows = Vec::with_capacity(2 * n);
    for family in ["convex_pair", "unified"] {
        for instance in 0..n {
            let h = if family == "unified" {
                random_unified(&mut rng)?.to_hierarchical()
            } else {
                convex_pair(&mut rng)?.0
            };
            let z0 = h
                .layers()
                .iter()
                .map(|l| {
                    let z = randn(&mut rng, l.dim);
                    match l.sign {
                        SignConstraint::NonNegative => z.mapv(f64::abs),
                        SignConstraint::Free => z,
                    }
                })
                .collect();
            let (_, trace) = solve_hierarchical(&h, CodeState::new(z0, opts.l0), &opts)?;
            let max_increase = trace.max_increase();
            rows.push(MonotoneRow {
                family,
                instance,
                max_increase,
                monotone: max_increase <= MONOTONE_SLACK,
            });
        }
    }
    Ok(rows)
}
