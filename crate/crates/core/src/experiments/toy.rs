use ndarray::Array1;

use super::{stream_rng, streams};
use crate::analysis::{orientation_purity, simple_unit_orientations, PurityReport};
use crate::datagen::{flatten, gen_toy_patch, ToyConfig};
use crate::error::Result;
use crate::learning::{pooled_codes, train_invariant, train_sparse_coding, train_unified, Model, TrainOptions};
use crate::solver::{Momentum, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyMode {
    /// Sparse coding first, then the pooling layer on accumulated codes.
    Split,
    /// Both layers trained jointly.
    Unified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySetup {
    pub cfg: ToyConfig,
    pub code_dim: usize,
    pub inv_dim: usize,
    pub alpha: f64,
    pub beta: f64,
    pub n_train: usize,
    pub n_eval: usize,
    pub train: TrainOptions,
}

impl Default for ToySetup {
    fn default() -> Self {
        Self {
            cfg: ToyConfig::default(),
            code_dim: 50,
            inv_dim: 4,
            alpha: 0.5,
            beta: 0.3,
            n_train: 5000,
            n_eval: 1000,
            train: TrainOptions {
                infer_opts: SolverOptions {
                    max_iter: 200,
                    tol: 1e-6,
                    momentum: Momentum::Fista,
                    ..SolverOptions::default()
                },
                ..TrainOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyRun {
    /// The sparse coding stage of a split run.
    pub layer1: Option<Model>,
    pub model: Model,
    pub purity: PurityReport,
    /// Best matching line orientation and its cosine for every simple unit.
    pub orientations: Vec<(usize, f64)>,
}

/// `n` flattened line-world patches drawn from `rng`.
pub fn toy_samples(cfg: &ToyConfig, n: usize, rng: &mut impl rand::Rng) -> Vec<Array1<f64>> {
    (0..n).map(|_| flatten(&gen_toy_patch(cfg, rng).patch)).collect()
}

/// Trains on fresh line-world patches and scores the invariant layer.
/// `epochs = 0` skips training and scores the initial model.
pub fn run_toy(setup: &ToySetup, mode: ToyMode) -> Result<ToyRun> {
    setup.cfg.validate()?;
    let seed = setup.train.seed;
    let samples = toy_samples(&setup.cfg, setup.n_train, &mut stream_rng(seed, streams::TRAIN_DATA));
    let single: Vec<Vec<Array1<f64>>> = samples.iter().map(|x| vec![x.clone()]).collect();
    let (layer1, model) = match mode {
        ToyMode::Split => {
            let layer1 = train_sparse_coding(&samples, setup.code_dim, setup.alpha, &setup.train)?;
            let pooled = pooled_codes(&layer1, &single, &setup.train.infer_opts)?;
            let model = train_invariant(&pooled, &layer1, setup.inv_dim, setup.beta, &setup.train)?;
            (Some(layer1), model)
        }
        ToyMode::Unified => (
            None,
            train_unified(&single, setup.code_dim, setup.inv_dim, setup.alpha, setup.beta, &setup.train)?,
        ),
    };
    let purity = orientation_purity(
        &model,
        &setup.cfg,
        setup.n_eval,
        &setup.train.infer_opts,
        &mut stream_rng(seed, streams::EVAL_DATA),
    )?;
    let orientations = simple_unit_orientations(&model, &setup.cfg)?;
    Ok(ToyRun {
        layer1,
        model,
        purity,
        orientations,
    })
}
