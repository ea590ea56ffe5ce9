//! Dictionary learning by stochastic gradient descent with projection onto
//! unit-norm (and, for the pooling matrix, nonnegative) columns.
//!
//! Each update infers codes with the dictionaries fixed, then takes one
//! gradient step on the dictionaries with the codes fixed.

mod inpaint;
mod io;

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dictionary::Dictionary;
use crate::energy::{
    accumulate_codes, eval_invariant_energy, eval_sparse_energy, eval_unified_energy, InvariantProblem,
    SparseCodingProblem, UnifiedProblem,
};
use crate::error::{check_dim, Error, Result};
use crate::solver::{solve_hierarchical, solve_invariant, solve_lasso, CodeState, SolverOptions};

pub use inpaint::{inpaint, inpaint_rms};
pub use io::{load_model, read_model, save_model, write_model, FORMAT_VERSION, MAGIC};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub learning_rate: f64,
    /// `rate_k = learning_rate / (1 + k / decay)`; `0` disables the decay.
    pub decay: f64,
    pub epochs: usize,
    /// Samples whose gradients are averaged into one update.
    pub batch: usize,
    pub seed: u64,
    pub infer_opts: SolverOptions,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            decay: 10_000.0,
            epochs: 1,
            batch: 1,
            seed: 0,
            infer_opts: SolverOptions {
                max_iter: 200,
                tol: 1e-6,
                ..SolverOptions::default()
            },
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.decay >= 0.0) {
            return Err(Error::InvalidParameter(format!("decay must be ≥ 0, got {}", self.decay)));
        }
        if self.batch == 0 {
            return Err(Error::InvalidParameter("batch must be positive".into()));
        }
        self.infer_opts.validate()
    }

    /// Learning rate after `step` updates.
    pub fn rate(&self, step: u64) -> f64 {
        if self.decay > 0.0 {
            self.learning_rate / (1.0 + step as f64 / self.decay)
        } else {
            self.learning_rate
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Sparse coding only.
    SplitLayer1,
    /// Sparse coding plus an invariant layer trained on its accumulated codes.
    SplitLayer2,
    /// Both layers trained jointly on the unified energy.
    Unified,
}

impl ModelKind {
    pub(crate) fn code(self) -> u8 {
        match self {
            ModelKind::SplitLayer1 => 1,
            ModelKind::SplitLayer2 => 2,
            ModelKind::Unified => 3,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            1 => Some(ModelKind::SplitLayer1),
            2 => Some(ModelKind::SplitLayer2),
            3 => Some(ModelKind::Unified),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub w: Dictionary,
    pub a: Option<Dictionary>,
    pub alpha: f64,
    /// Unused (zero) for [`ModelKind::SplitLayer1`].
    pub beta: f64,
    pub kind: ModelKind,
    /// Frames per training sample.
    pub n_frames: usize,
    /// Parameter updates applied so far.
    pub step: u64,
}

impl Model {
    pub fn new(
        kind: ModelKind,
        w: Dictionary,
        a: Option<Dictionary>,
        alpha: f64,
        beta: f64,
        n_frames: usize,
    ) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        if n_frames == 0 {
            return Err(Error::InvalidParameter("a model needs at least one frame".into()));
        }
        match (&a, kind) {
            (None, ModelKind::SplitLayer1) => {}
            (Some(pool), ModelKind::SplitLayer2 | ModelKind::Unified) => {
                check_dim("pooling rows", w.code_dim(), pool.input_dim())?;
                if !pool.is_nonneg() {
                    return Err(Error::InvalidParameter("pooling dictionary must be nonnegative".into()));
                }
                if !(beta > 0.0) || !beta.is_finite() {
                    return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
                }
            }
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "a {kind:?} model {} a pooling dictionary",
                    if a.is_some() { "cannot have" } else { "needs" }
                )))
            }
        }
        Ok(Self {
            w,
            a,
            alpha,
            beta,
            kind,
            n_frames,
            step: 0,
        })
    }

    pub fn code_dim(&self) -> usize {
        self.w.code_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.w.input_dim()
    }

    pub fn inv_dim(&self) -> Option<usize> {
        self.a.as_ref().map(Dictionary::code_dim)
    }

    pub fn pooling(&self) -> Result<&Dictionary> {
        self.a
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("model has no invariant layer".into()))
    }

    fn sparse_problem(&self, x: &Array1<f64>) -> Result<SparseCodingProblem> {
        SparseCodingProblem::new(self.w.clone(), x.clone(), self.alpha)
    }

    fn unified_problem(&self, frames: &[Array1<f64>]) -> Result<UnifiedProblem> {
        UnifiedProblem::new(self.w.clone(), self.pooling()?.clone(), frames.to_vec(), self.alpha, self.beta)
    }
}

/// Inferred codes for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Codes {
    /// One code per frame.
    pub z: Vec<Array1<f64>>,
    /// Invariant code, for models that have one.
    pub u: Option<Array1<f64>>,
    /// Energy of the model at the inferred codes.
    pub energy: f64,
}

/// Infers codes for a sequence of frames with the model's own energy: per
/// frame sparse coding, then (split models) the invariant layer on the
/// accumulated codes, or (unified models) one joint solve.
pub fn infer(model: &Model, frames: &[Array1<f64>], opts: &SolverOptions) -> Result<Codes> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("frame list"));
    }
    match model.kind {
        ModelKind::SplitLayer1 | ModelKind::SplitLayer2 => {
            let mut z = Vec::with_capacity(frames.len());
            let mut energy = 0.0;
            for x in frames {
                let p = model.sparse_problem(x)?;
                let (code, trace) = solve_lasso(&p, opts)?;
                energy += trace.final_energy();
                z.push(code);
            }
            if model.kind == ModelKind::SplitLayer1 {
                return Ok(Codes { z, u: None, energy });
            }
            let pooled = accumulate_codes(&z)?;
            let p = InvariantProblem::new(model.pooling()?.clone(), pooled, model.alpha, model.beta)?;
            let (u, trace) = solve_invariant(&p, opts)?;
            Ok(Codes {
                z,
                u: Some(u),
                energy: trace.final_energy(),
            })
        }
        ModelKind::Unified => {
            let p = model.unified_problem(frames)?;
            let h = p.to_hierarchical();
            let (state, trace) = solve_hierarchical(&h, CodeState::zeros(&h, opts.l0), opts)?;
            let (z, u) = p.unpack(&state.z);
            Ok(Codes {
                z,
                u: Some(u),
                energy: trace.final_energy(),
            })
        }
    }
}

/// Mean model energy at the inferred codes over `samples` (each a frame list).
/// For split two-layer models this is the invariant-layer energy.
pub fn mean_energy(model: &Model, samples: &[Vec<Array1<f64>>], opts: &SolverOptions) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("evaluation samples"));
    }
    let mut total = 0.0;
    for (index, frames) in samples.iter().enumerate() {
        let codes = infer(model, frames, opts).map_err(|e| Error::Sample {
            index,
            source: Box::new(e),
        })?;
        total += codes.energy;
    }
    Ok(total / samples.len() as f64)
}

/// Initial sparse coding dictionary: unit-normalized standard normals.
pub fn init_dictionary(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Result<Dictionary> {
    Dictionary::random(rows, cols, false, rng)
}

/// Initial pooling dictionary: unit-normalized absolute standard normals.
pub fn init_pooling(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Result<Dictionary> {
    Dictionary::random(rows, cols, true, rng)
}

/// Applies stochastic updates to a model, one sample at a time.
///
/// Gradients of a partial batch are held until the batch fills or
/// [`Trainer::flush`] is called.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: Model,
    opts: TrainOptions,
    grad_w: Array2<f64>,
    grad_a: Option<Array2<f64>>,
    pending: usize,
}

impl Trainer {
    pub fn new(model: Model, opts: TrainOptions) -> Result<Self> {
        opts.validate()?;
        let grad_w = Array2::zeros(model.w.matrix().dim());
        let grad_a = model.a.as_ref().map(|a| Array2::zeros(a.matrix().dim()));
        Ok(Self {
            model,
            opts,
            grad_w,
            grad_a,
            pending: 0,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn options(&self) -> &TrainOptions {
        &self.opts
    }

    /// Applies any partial batch and returns the model.
    pub fn into_model(mut self) -> Model {
        self.flush();
        self.model
    }

    /// Sparse coding update on one input; returns the inference energy.
    pub fn sparse_step(&mut self, x: &Array1<f64>) -> Result<f64> {
        self.expect_kind(ModelKind::SplitLayer1)?;
        let p = self.model.sparse_problem(x)?;
        let (z, trace) = solve_lasso(&p, &self.opts.infer_opts)?;
        add_reconstruction_gradient(&mut self.grad_w, &self.model.w, &z, x);
        self.commit();
        Ok(trace.final_energy())
    }

    /// Pooling update on one accumulated code; returns the inference energy.
    pub fn invariant_step(&mut self, pooled: &Array1<f64>) -> Result<f64> {
        self.expect_kind(ModelKind::SplitLayer2)?;
        let p = InvariantProblem::new(self.model.pooling()?.clone(), pooled.clone(), self.model.alpha, self.model.beta)?;
        let (u, trace) = solve_invariant(&p, &self.opts.infer_opts)?;
        let decay = self.model.pooling()?.apply(u.view()).mapv(|v| (-v).exp());
        // ∂E/∂A_ij = −α z*_i e^{−(Au)_i} u_j
        let weights = Array1::from_shape_fn(pooled.len(), |i| -self.model.alpha * pooled[i] * decay[i]);
        add_outer(self.grad_a.as_mut().expect("pooling gradient"), &weights, &u);
        self.commit();
        Ok(trace.final_energy())
    }

    /// Joint update on one sequence; returns the inference energy.
    pub fn unified_step(&mut self, frames: &[Array1<f64>]) -> Result<f64> {
        self.expect_kind(ModelKind::Unified)?;
        check_dim("frames per sample", self.model.n_frames, frames.len())?;
        let p = self.model.unified_problem(frames)?;
        let h = p.to_hierarchical();
        let opts = &self.opts.infer_opts;
        let (state, trace) = solve_hierarchical(&h, CodeState::zeros(&h, opts.l0), opts)?;
        let (z, u) = p.unpack(&state.z);
        for (zt, x) in z.iter().zip(frames) {
            add_reconstruction_gradient(&mut self.grad_w, &self.model.w, zt, x);
        }
        let pooled = accumulate_codes(&z)?;
        let decay = self.model.pooling()?.apply(u.view()).mapv(|v| (-v).exp());
        // ∂E/∂A_ij = −(α/2) (Σ_t |z_{t,i}|) e^{−(Au)_i} u_j
        let weights = Array1::from_shape_fn(pooled.len(), |i| -0.5 * self.model.alpha * pooled[i] * decay[i]);
        add_outer(self.grad_a.as_mut().expect("pooling gradient"), &weights, &u);
        self.commit();
        Ok(trace.final_energy())
    }

    /// Applies the accumulated (averaged) gradients.
    pub fn flush(&mut self) {
        if self.pending == 0 {
            return;
        }
        let rate = self.opts.rate(self.model.step) / self.pending as f64;
        if self.model.kind != ModelKind::SplitLayer2 {
            self.model.w.gradient_step(&self.grad_w, rate);
        }
        if let (Some(a), Some(g)) = (self.model.a.as_mut(), self.grad_a.as_ref()) {
            if self.model.kind != ModelKind::SplitLayer1 {
                a.gradient_step(g, rate);
            }
        }
        self.grad_w.fill(0.0);
        if let Some(g) = self.grad_a.as_mut() {
            g.fill(0.0);
        }
        self.pending = 0;
        self.model.step += 1;
        debug_assert!(self.model.w.max_norm_deviation() <= 1e-9);
        debug_assert!(self
            .model
            .a
            .as_ref()
            .is_none_or(|a| a.max_norm_deviation() <= 1e-9 && a.min_entry() >= 0.0));
    }

    fn commit(&mut self) {
        self.pending += 1;
        if self.pending == self.opts.batch {
            self.flush();
        }
    }

    fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.model.kind == kind {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "{kind:?} update requested on a {:?} model",
                self.model.kind
            )))
        }
    }
}

/// `G += (Wz − x) zᵀ`, the gradient of `½‖x − Wz‖²` in `W`.
fn add_reconstruction_gradient(grad: &mut Array2<f64>, w: &Dictionary, z: &Array1<f64>, x: &Array1<f64>) {
    let residual = w.matrix().dot(z) - x;
    add_outer(grad, &residual, z);
}

fn add_outer(grad: &mut Array2<f64>, left: &Array1<f64>, right: &Array1<f64>) {
    for (j, &r) in right.iter().enumerate() {
        if r != 0.0 {
            grad.index_axis_mut(Axis(1), j).scaled_add(r, left);
        }
    }
}

fn with_index<T>(index: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Sample {
        index,
        source: Box::new(e),
    })
}

/// Untrained split two-layer model on top of `layer1`, as
/// [`train_invariant`] starts it.
pub fn initial_invariant_model(layer1: &Model, inv_dim: usize, beta: f64, seed: u64) -> Result<Model> {
    if inv_dim == 0 {
        return Err(Error::InvalidParameter("inv_dim must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = init_pooling(layer1.code_dim(), inv_dim, &mut rng)?;
    Model::new(
        ModelKind::SplitLayer2,
        layer1.w.clone(),
        Some(a),
        layer1.alpha,
        beta,
        layer1.n_frames,
    )
}

/// Untrained unified model, as [`train_unified`] starts it.
pub fn initial_unified_model(
    input_dim: usize,
    code_dim: usize,
    inv_dim: usize,
    alpha: f64,
    beta: f64,
    n_frames: usize,
    seed: u64,
) -> Result<Model> {
    if code_dim == 0 || inv_dim == 0 {
        return Err(Error::InvalidParameter("code_dim and inv_dim must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = init_dictionary(input_dim, code_dim, &mut rng)?;
    let a = init_pooling(code_dim, inv_dim, &mut rng)?;
    Model::new(ModelKind::Unified, w, Some(a), alpha, beta, n_frames)
}

/// Learns a sparse coding dictionary with `code_dim` units.
pub fn train_sparse_coding(
    samples: &[Array1<f64>],
    code_dim: usize,
    alpha: f64,
    opts: &TrainOptions,
) -> Result<Model> {
    let first = samples.first().ok_or(Error::EmptyInput("training samples"))?;
    if code_dim == 0 {
        return Err(Error::InvalidParameter("code_dim must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let w = init_dictionary(first.len(), code_dim, &mut rng)?;
    let model = Model::new(ModelKind::SplitLayer1, w, None, alpha, 0.0, 1)?;
    let mut trainer = Trainer::new(model, opts.clone())?;
    for _ in 0..opts.epochs {
        for (i, x) in samples.iter().enumerate() {
            with_index(i, trainer.sparse_step(x))?;
        }
    }
    Ok(trainer.into_model())
}

/// Learns the pooling matrix of a split model on top of a trained sparse
/// coding model, from accumulated codes.
pub fn train_invariant(
    pooled: &[Array1<f64>],
    layer1: &Model,
    inv_dim: usize,
    beta: f64,
    opts: &TrainOptions,
) -> Result<Model> {
    if pooled.is_empty() {
        return Err(Error::EmptyInput("accumulated codes"));
    }
    for (index, zs) in pooled.iter().enumerate() {
        if zs.iter().any(|&v| !(v >= 0.0)) {
            return with_index(index, Err(Error::InvalidParameter("accumulated code must be nonnegative".into())));
        }
    }
    let model = initial_invariant_model(layer1, inv_dim, beta, opts.seed)?;
    let mut trainer = Trainer::new(model, opts.clone())?;
    for _ in 0..opts.epochs {
        for (i, zs) in pooled.iter().enumerate() {
            with_index(i, trainer.invariant_step(zs))?;
        }
    }
    Ok(trainer.into_model())
}

/// Learns both dictionaries jointly on sequences of `n_t` frames.
pub fn train_unified(
    sequences: &[Vec<Array1<f64>>],
    code_dim: usize,
    inv_dim: usize,
    alpha: f64,
    beta: f64,
    opts: &TrainOptions,
) -> Result<Model> {
    let first = sequences.first().ok_or(Error::EmptyInput("training sequences"))?;
    let x0 = first.first().ok_or(Error::EmptyInput("frames of a training sequence"))?;
    let model = initial_unified_model(x0.len(), code_dim, inv_dim, alpha, beta, first.len(), opts.seed)?;
    let mut trainer = Trainer::new(model, opts.clone())?;
    for _ in 0..opts.epochs {
        for (i, frames) in sequences.iter().enumerate() {
            with_index(i, trainer.unified_step(frames))?;
        }
    }
    Ok(trainer.into_model())
}

/// Accumulated first-layer codes of each sequence under a sparse coding model.
pub fn pooled_codes(model: &Model, sequences: &[Vec<Array1<f64>>], opts: &SolverOptions) -> Result<Vec<Array1<f64>>> {
    sequences
        .iter()
        .enumerate()
        .map(|(index, frames)| {
            let mut z = Vec::with_capacity(frames.len());
            for x in frames {
                let p = with_index(index, model.sparse_problem(x))?;
                z.push(with_index(index, solve_lasso(&p, opts))?.0);
            }
            accumulate_codes(&z)
        })
        .collect()
}

/// Energy of a sample at given codes under the model (no inference).
pub fn energy_at(model: &Model, frames: &[Array1<f64>], codes: &Codes) -> Result<f64> {
    match model.kind {
        ModelKind::SplitLayer1 => {
            let mut total = 0.0;
            for (x, z) in frames.iter().zip(&codes.z) {
                total += eval_sparse_energy(&model.sparse_problem(x)?, z)?;
            }
            Ok(total)
        }
        ModelKind::SplitLayer2 => {
            let p = InvariantProblem::new(model.pooling()?.clone(), accumulate_codes(&codes.z)?, model.alpha, model.beta)?;
            eval_invariant_energy(&p, codes.u.as_ref().ok_or(Error::EmptyInput("invariant code"))?)
        }
        ModelKind::Unified => eval_unified_energy(
            &model.unified_problem(frames)?,
            &codes.z,
            codes.u.as_ref().ok_or(Error::EmptyInput("invariant code"))?,
        ),
    }
}

#[cfg(test)]
mod tests;
