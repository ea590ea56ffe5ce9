use ndarray::{Array1, ArrayView1, Zip};

use super::{momentum_update, shrink_scalar, CodeState, Momentum, SolverOptions, SolverTrace, MAX_BACKTRACKS};
use crate::energy::{HierarchicalEnergy, LayerSpec};
use crate::error::{Error, Result};

/// Rounding allowance in the quadratic upper-bound test, relative to the
/// magnitude of the smooth value. Without it a step that leaves the code
/// unchanged can be rejected forever once the cached image and a freshly
/// computed one differ in the last bit.
const BOUND_SLACK: f64 = 64.0 * f64::EPSILON;

/// Everything a layer step needs that does not depend on `L`.
pub(crate) struct PreparedStep<'h> {
    layer: &'h LayerSpec,
    weights: Array1<f64>,
    thresholds: Array1<f64>,
    value: f64,
    gradient: Array1<f64>,
}

pub(crate) struct Accepted {
    pub code: Array1<f64>,
    pub image: Array1<f64>,
    pub lipschitz: f64,
    pub trials: usize,
}

impl<'h> PreparedStep<'h> {
    pub fn new(h: &'h HierarchicalEnergy, z: &[Array1<f64>], images: &[Array1<f64>], a: usize) -> Self {
        let layer = &h.layers()[a];
        let weights = h.coupling_weights(a, z);
        let thresholds = h.thresholds(a, &h.next_values(a, images));
        let value = layer.smooth_values(&images[a]).dot(&weights);
        let gradient = layer.smooth_gradient(&images[a], &weights);
        Self {
            layer,
            weights,
            thresholds,
            value,
            gradient,
        }
    }

    pub fn gradient(&self) -> &Array1<f64> {
        &self.gradient
    }

    pub fn thresholds(&self) -> &Array1<f64> {
        &self.thresholds
    }

    /// `sh_{τ/L}(z − ∇/L)`.
    pub fn prox(&self, z: ArrayView1<'_, f64>, lipschitz: f64) -> Array1<f64> {
        let inv = 1.0 / lipschitz;
        let sign = self.layer.sign;
        let mut out = Array1::zeros(z.len());
        Zip::from(&mut out)
            .and(&z)
            .and(&self.gradient)
            .and(&self.thresholds)
            .for_each(|o, &x, &g, &t| *o = shrink_scalar(x - inv * g, t * inv, sign));
        out
    }

    pub fn backtrack(&self, a: usize, z: ArrayView1<'_, f64>, l_start: f64, eta: f64) -> Result<Accepted> {
        let mut lipschitz = l_start;
        for trials in 0..=MAX_BACKTRACKS {
            let code = self.prox(z, lipschitz);
            let image = self.layer.image(code.view());
            let value = self.layer.smooth_values(&image).dot(&self.weights);
            let d = &code - &z;
            let bound = self.value + self.gradient.dot(&d) + 0.5 * lipschitz * d.dot(&d);
            if value <= bound + BOUND_SLACK * (self.value.abs() + value.abs()) {
                return Ok(Accepted {
                    code,
                    image,
                    lipschitz,
                    trials,
                });
            }
            lipschitz *= eta;
        }
        Err(Error::BacktrackExhausted {
            layer: a,
            trials: MAX_BACKTRACKS,
            lipschitz,
        })
    }
}

/// Hierarchical (F)ISTA over a [`HierarchicalEnergy`].
///
/// Holds the extrapolated point `z_k`, the last accepted point `z̃_{k−1}`
/// and the dictionary images of both, so a sweep costs one product by each
/// layer dictionary and one by its transpose (plus one more product per
/// rejected backtracking trial).
pub struct HierarchicalSolver<'h> {
    energy: &'h HierarchicalEnergy,
    opts: SolverOptions,
    point: Vec<Array1<f64>>,
    point_images: Vec<Array1<f64>>,
    accepted: Vec<Array1<f64>>,
    accepted_images: Vec<Array1<f64>>,
    previous: Option<Vec<Array1<f64>>>,
    lipschitz: Vec<f64>,
    t: f64,
    current_energy: f64,
    trace: SolverTrace,
    converged: bool,
}

impl<'h> HierarchicalSolver<'h> {
    pub fn new(energy: &'h HierarchicalEnergy, z0: Vec<Array1<f64>>, opts: SolverOptions) -> Result<Self> {
        let l0 = opts.l0;
        Self::from_state(energy, CodeState::new(z0, l0), opts)
    }

    pub fn from_state(energy: &'h HierarchicalEnergy, state: CodeState, opts: SolverOptions) -> Result<Self> {
        opts.validate()?;
        energy.check_codes(&state.z)?;
        if state.lipschitz.len() != energy.len() || state.lipschitz.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidParameter(
                "code state needs one positive Lipschitz estimate per layer".into(),
            ));
        }
        let images = energy.images(&state.z);
        let current_energy = energy.energy_from_images(&state.z, &images);
        // A resumed solve keeps `t` but restarts extrapolation from `z`.
        let accepted = state.z.clone();
        let accepted_images = images.clone();
        let trace = SolverTrace {
            initial_energy: current_energy,
            ..SolverTrace::default()
        };
        Ok(Self {
            energy,
            opts,
            point: state.z,
            point_images: images,
            accepted,
            accepted_images,
            previous: state.z_prev,
            lipschitz: state.lipschitz,
            t: state.t,
            current_energy,
            trace,
            converged: false,
        })
    }

    /// The last accepted codes (the starting point before the first step).
    pub fn codes(&self) -> &[Array1<f64>] {
        &self.accepted
    }

    pub fn energy(&self) -> f64 {
        self.current_energy
    }

    pub fn iterations(&self) -> usize {
        self.trace.iterations
    }

    pub fn lipschitz(&self) -> &[f64] {
        &self.lipschitz
    }

    pub fn is_converged(&self) -> bool {
        self.converged
    }

    /// One sweep over all layers followed by the momentum update. Returns
    /// the energy of the new accepted point.
    pub fn step(&mut self) -> Result<f64> {
        let h = self.energy;
        let mut current = std::mem::take(&mut self.point);
        let mut images = std::mem::take(&mut self.point_images);
        let mut rejected = 0;
        for a in 0..h.len() {
            let prepared = PreparedStep::new(h, &current, &images, a);
            let accepted = prepared.backtrack(a, current[a].view(), self.lipschitz[a], self.opts.eta)?;
            rejected += accepted.trials;
            self.lipschitz[a] = accepted.lipschitz;
            current[a] = accepted.code;
            images[a] = accepted.image;
        }
        let energy = h.energy_from_images(&current, &images);

        let r = match self.opts.momentum {
            Momentum::None => 0.0,
            Momentum::Fista | Momentum::CappedFista(_) => {
                let (t_next, r) = momentum_update(self.t);
                self.t = t_next;
                match self.opts.momentum {
                    Momentum::CappedFista(cap) => r.min(cap),
                    _ => r,
                }
            }
        };

        let previous = std::mem::replace(&mut self.accepted, current);
        let previous_images = std::mem::replace(&mut self.accepted_images, images);
        if r == 0.0 {
            self.point = self.accepted.clone();
            self.point_images = self.accepted_images.clone();
        } else {
            self.point = extrapolate(&self.accepted, &previous, r);
            self.point_images = extrapolate(&self.accepted_images, &previous_images, r);
        }
        self.previous = Some(previous);

        let last = self.current_energy;
        self.current_energy = energy;
        self.trace.iterations += 1;
        if self.opts.record_trace {
            self.trace.energies.push(energy);
            self.trace.backtracks.push(rejected);
            self.trace
                .lipschitz
                .push(self.lipschitz.iter().copied().fold(0.0, f64::max));
        }
        if (last - energy).abs() < self.opts.tol * last.abs().max(1.0) {
            self.converged = true;
        }
        Ok(energy)
    }

    /// Iterates until the tolerance or the iteration budget is reached.
    pub fn run(&mut self) -> Result<()> {
        while !self.converged && self.trace.iterations < self.opts.max_iter {
            self.step()?;
        }
        Ok(())
    }

    pub fn trace(&self) -> &SolverTrace {
        &self.trace
    }

    pub fn finish(self) -> (CodeState, SolverTrace) {
        (
            CodeState {
                z: self.accepted,
                lipschitz: self.lipschitz,
                t: self.t,
                z_prev: self.previous,
            },
            self.trace,
        )
    }
}

fn extrapolate(now: &[Array1<f64>], before: &[Array1<f64>], r: f64) -> Vec<Array1<f64>> {
    now.iter()
        .zip(before)
        .map(|(n, b)| {
            let mut out = n.clone();
            Zip::from(&mut out).and(b).for_each(|o, &p| *o += r * (*o - p));
            out
        })
        .collect()
}
