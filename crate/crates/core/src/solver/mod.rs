//! Proximal-gradient inference.
//!
//! Every problem is mapped onto [`HierarchicalEnergy`] and minimized by
//! [`HierarchicalSolver`]: a sweep over the layers applying one backtracked
//! shrinkage step per layer, followed by an optional momentum extrapolation.
//! With one layer this is ISTA (no momentum) or FISTA.

mod certificates;
mod hierarchical;
pub mod reference;

use ndarray::{Array1, ArrayView1};

use crate::energy::{HierarchicalEnergy, InvariantProblem, SignConstraint, SparseCodingProblem};
use crate::error::{Error, Result};

pub use certificates::{check_descent_lemma, check_stationarity, DescentCheck};
pub use hierarchical::HierarchicalSolver;

/// Upper bound on geometric backtracking trials before giving up.
pub const MAX_BACKTRACKS: usize = 100;

/// Momentum schedule applied after each sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Momentum {
    /// `r_k = 0`: plain (hierarchical) ISTA, monotone in energy.
    None,
    /// `t_{k+1} = (1 + √(1 + 4t_k²))/2`, `r_k = (t_k − 1)/t_{k+1}`.
    Fista,
    /// FISTA with `r_k` clamped to the cap.
    CappedFista(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Stop once `|E_{k−1} − E_k| < tol · max(|E_{k−1}|, 1)`.
    pub tol: f64,
    /// Initial Lipschitz estimate for every layer.
    pub l0: f64,
    /// Backtracking multiplier.
    pub eta: f64,
    pub momentum: Momentum,
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            tol: 1e-9,
            l0: 1.0,
            eta: 2.0,
            momentum: Momentum::None,
            record_trace: true,
        }
    }
}

impl SolverOptions {
    pub fn fista() -> Self {
        Self {
            momentum: Momentum::Fista,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be positive".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be ≥ 0, got {}", self.tol)));
        }
        if !(self.l0 > 0.0) || !self.l0.is_finite() {
            return Err(Error::InvalidParameter(format!("L0 must be positive, got {}", self.l0)));
        }
        if !(self.eta > 1.0) || !self.eta.is_finite() {
            return Err(Error::InvalidParameter(format!("eta must exceed 1, got {}", self.eta)));
        }
        if let Momentum::CappedFista(cap) = self.momentum {
            if !(cap > 0.0 && cap < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "momentum cap must lie in (0, 1), got {cap}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-layer codes plus the solver state needed to resume an iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeState {
    pub z: Vec<Array1<f64>>,
    pub lipschitz: Vec<f64>,
    pub t: f64,
    pub z_prev: Option<Vec<Array1<f64>>>,
}

impl CodeState {
    pub fn new(z: Vec<Array1<f64>>, l0: f64) -> Self {
        let n = z.len();
        Self {
            z,
            lipschitz: vec![l0; n],
            t: 1.0,
            z_prev: None,
        }
    }

    pub fn zeros(h: &HierarchicalEnergy, l0: f64) -> Self {
        Self::new(h.zeros(), l0)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverTrace {
    /// Energy at the starting point.
    pub initial_energy: f64,
    /// `energies[k − 1]` is the energy after iteration `k`.
    pub energies: Vec<f64>,
    /// Rejected backtracking trials summed over layers, per iteration.
    pub backtracks: Vec<usize>,
    /// Largest per-layer Lipschitz estimate after each iteration.
    pub lipschitz: Vec<f64>,
    pub iterations: usize,
}

impl SolverTrace {
    pub fn final_energy(&self) -> f64 {
        self.energies.last().copied().unwrap_or(self.initial_energy)
    }

    /// Largest increase between consecutive energies, starting from the initial one.
    pub fn max_increase(&self) -> f64 {
        let mut prev = self.initial_energy;
        let mut worst = f64::NEG_INFINITY;
        for &e in &self.energies {
            worst = worst.max(e - prev);
            prev = e;
        }
        worst
    }
}

/// Soft thresholding `sign(v)(|v| − τ)₊`, or `(v − τ)₊` for nonnegative codes.
pub fn shrink(v: ArrayView1<'_, f64>, tau: f64, constraint: SignConstraint) -> Array1<f64> {
    v.mapv(|x| shrink_scalar(x, tau, constraint))
}

#[inline]
pub(crate) fn shrink_scalar(x: f64, tau: f64, constraint: SignConstraint) -> f64 {
    match constraint {
        SignConstraint::Free => {
            let m = x.abs() - tau;
            if m > 0.0 {
                m.copysign(x)
            } else {
                0.0
            }
        }
        SignConstraint::NonNegative => (x - tau).max(0.0),
    }
}

/// One step of the momentum schedule: returns `(t_{k+1}, r_k)`.
pub fn momentum_update(t: f64) -> (f64, f64) {
    let next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
    (next, (t - 1.0) / next)
}

/// Result of a backtracked layer step.
#[derive(Debug, Clone)]
pub struct Backtrack {
    pub lipschitz: f64,
    pub step: Array1<f64>,
    pub trials: usize,
}

/// The proximal step `p_L(z_a)` on layer `a` with a fixed `L`.
pub fn layer_step(h: &HierarchicalEnergy, z: &[Array1<f64>], a: usize, lipschitz: f64) -> Result<Array1<f64>> {
    h.layer(a)?;
    h.check_codes(z)?;
    if !(lipschitz > 0.0) {
        return Err(Error::InvalidParameter(format!("L must be positive, got {lipschitz}")));
    }
    let images = h.images(z);
    let prepared = hierarchical::PreparedStep::new(h, z, &images, a);
    Ok(prepared.prox(z[a].view(), lipschitz))
}

/// Smallest `L = η^i L_prev` for which the quadratic upper bound holds at the stepped point.
pub fn backtrack(h: &HierarchicalEnergy, z: &[Array1<f64>], a: usize, l_prev: f64, eta: f64) -> Result<Backtrack> {
    h.layer(a)?;
    h.check_codes(z)?;
    if !(l_prev > 0.0) || !(eta > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "backtracking needs L > 0 and eta > 1, got {l_prev}, {eta}"
        )));
    }
    let images = h.images(z);
    let prepared = hierarchical::PreparedStep::new(h, z, &images, a);
    let accepted = prepared.backtrack(a, z[a].view(), l_prev, eta)?;
    Ok(Backtrack {
        lipschitz: accepted.lipschitz,
        step: accepted.code,
        trials: accepted.trials,
    })
}

/// Minimizes an arbitrary hierarchical energy from the given state.
pub fn solve_hierarchical(
    h: &HierarchicalEnergy,
    z0: CodeState,
    opts: &SolverOptions,
) -> Result<(CodeState, SolverTrace)> {
    let mut solver = HierarchicalSolver::from_state(h, z0, opts.clone())?;
    solver.run()?;
    Ok(solver.finish())
}

/// Sparse coding inference from `z = 0`.
pub fn solve_lasso(p: &SparseCodingProblem, opts: &SolverOptions) -> Result<(Array1<f64>, SolverTrace)> {
    let h = p.to_hierarchical();
    let (state, trace) = solve_hierarchical(&h, CodeState::zeros(&h, opts.l0), opts)?;
    Ok((state.z.into_iter().next().expect("one layer"), trace))
}

/// Invariant-layer inference from `u = 0`.
pub fn solve_invariant(p: &InvariantProblem, opts: &SolverOptions) -> Result<(Array1<f64>, SolverTrace)> {
    let h = p.to_hierarchical();
    let (state, trace) = solve_hierarchical(&h, CodeState::zeros(&h, opts.l0), opts)?;
    Ok((state.z.into_iter().next().expect("one layer"), trace))
}
