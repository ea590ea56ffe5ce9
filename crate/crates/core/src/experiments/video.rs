use ndarray::{Array1, Array2};
use rand::Rng;

use super::{stream_rng, streams};
use crate::analysis::{mean_pairwise_overlap, median, response_maps, ResponseGrid, ResponseMap, UnitKind};
use crate::datagen::{dead_leaves, extract_sequence, preprocess, SequenceConfig};
use crate::error::{Error, Result};
use crate::learning::{pooled_codes, train_invariant, train_sparse_coding, Model, TrainOptions};
use crate::solver::{Momentum, SolverOptions};

/// Translating-window training on (synthetic or supplied) images.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSetup {
    /// Side of each generated image.
    pub image_size: usize,
    /// Number of generated images.
    pub n_images: usize,
    /// Factor applied to every preprocessed image. Unit-contrast images give
    /// dense codes at `α = 0.5`; scaling down restores sparse, localized
    /// filters.
    pub patch_scale: f64,
    pub seq: SequenceConfig,
    pub n_train: usize,
    pub code_dim: usize,
    pub inv_dim: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Passes of the pooling stage over the accumulated codes.
    pub pooling_epochs: usize,
    pub train: TrainOptions,
}

impl Default for VideoSetup {
    /// Desk scale: 100 simple and 25 invariant units.
    fn default() -> Self {
        Self {
            image_size: 128,
            n_images: 16,
            patch_scale: 0.25,
            seq: SequenceConfig::default(),
            n_train: 20_000,
            code_dim: 100,
            inv_dim: 25,
            alpha: 0.5,
            beta: 0.3,
            pooling_epochs: 3,
            train: TrainOptions {
                learning_rate: 0.05,
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

impl VideoSetup {
    /// 400 simple and 100 invariant units.
    pub fn paper_scale() -> Self {
        Self {
            code_dim: 400,
            inv_dim: 100,
            n_train: 100_000,
            ..Self::default()
        }
    }

    /// Training options of the pooling stage.
    pub fn pooling_train(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.pooling_epochs,
            ..self.train.clone()
        }
    }
}

/// Preprocessed dead-leaves images, scaled by `patch_scale`.
pub fn synthetic_images(setup: &VideoSetup) -> Result<Vec<Array2<f64>>> {
    let mut rng = stream_rng(setup.train.seed, streams::IMAGES);
    let raw: Vec<Array2<f64>> = (0..setup.n_images).map(|_| dead_leaves(setup.image_size, &mut rng)).collect();
    prepare_images(&raw, setup)
}

/// Preprocesses raw grayscale images and scales them by `patch_scale`.
pub fn prepare_images(raw: &[Array2<f64>], setup: &VideoSetup) -> Result<Vec<Array2<f64>>> {
    if !(setup.patch_scale > 0.0) || !setup.patch_scale.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "patch scale must be positive, got {}",
            setup.patch_scale
        )));
    }
    raw.iter()
        .map(|image| Ok(preprocess(image.view())? * setup.patch_scale))
        .collect()
}

/// Training sequences for `setup`, drawn from the training data stream.
pub fn training_sequences(images: &[Array2<f64>], setup: &VideoSetup) -> Result<Vec<Vec<Array1<f64>>>> {
    video_sequences(
        images,
        &setup.seq,
        setup.n_train,
        &mut stream_rng(setup.train.seed, streams::TRAIN_DATA),
    )
}

/// `n` sequences from a stream disjoint from the training data.
pub fn held_out_sequences(images: &[Array2<f64>], setup: &VideoSetup, n: usize) -> Result<Vec<Vec<Array1<f64>>>> {
    video_sequences(images, &setup.seq, n, &mut stream_rng(setup.train.seed, streams::HELD_OUT))
}

/// `n` sequences, each cut from a uniformly chosen image.
pub fn video_sequences<R: Rng + ?Sized>(
    images: &[Array2<f64>],
    seq: &SequenceConfig,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec<Array1<f64>>>> {
    if images.is_empty() {
        return Err(Error::EmptyInput("images"));
    }
    (0..n)
        .map(|_| {
            let image = &images[rng.random_range(0..images.len())];
            Ok(extract_sequence(image.view(), seq, rng)?.vectors())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitRun {
    pub layer1: Model,
    pub layer2: Model,
    /// Accumulated first-layer codes of the training sequences.
    pub pooled: Vec<Array1<f64>>,
}

/// Sparse coding on every frame, then the pooling layer on accumulated codes.
pub fn train_split(sequences: &[Vec<Array1<f64>>], setup: &VideoSetup) -> Result<SplitRun> {
    let frames: Vec<Array1<f64>> = sequences.iter().flatten().cloned().collect();
    let mut layer1 = train_sparse_coding(&frames, setup.code_dim, setup.alpha, &setup.train)?;
    layer1.n_frames = setup.seq.n_frames;
    let pooled = pooled_codes(&layer1, sequences, &setup.train.infer_opts)?;
    let layer2 = train_invariant(&pooled, &layer1, setup.inv_dim, setup.beta, &setup.pooling_train())?;
    Ok(SplitRun { layer1, layer2, pooled })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WidthSummary {
    /// Position tuning width per unit; `None` for units that never respond.
    pub simple: Vec<Option<f64>>,
    pub invariant: Vec<Option<f64>>,
    pub simple_median: Option<f64>,
    pub invariant_median: Option<f64>,
}

impl WidthSummary {
    /// Median invariant width over median simple width.
    pub fn ratio(&self) -> Option<f64> {
        match (self.invariant_median, self.simple_median) {
            (Some(i), Some(s)) if s > 0.0 => Some(i / s),
            _ => None,
        }
    }
}

/// Response maps of every simple and invariant unit of a two-layer model,
/// with the median position tuning widths over responding units.
pub fn width_summary(
    model: &Model,
    grid: &ResponseGrid,
    opts: &SolverOptions,
) -> Result<(WidthSummary, Vec<ResponseMap>, Vec<ResponseMap>)> {
    let all_simple: Vec<usize> = (0..model.code_dim()).collect();
    let all_invariant: Vec<usize> = (0..model.pooling()?.code_dim()).collect();
    let simple_maps = response_maps(model, UnitKind::Simple, &all_simple, grid, opts)?;
    let invariant_maps = response_maps(model, UnitKind::Invariant, &all_invariant, grid, opts)?;
    let simple: Vec<Option<f64>> = simple_maps.iter().map(ResponseMap::tuning_width).collect();
    let invariant: Vec<Option<f64>> = invariant_maps.iter().map(ResponseMap::tuning_width).collect();
    let med = |w: &[Option<f64>]| median(&w.iter().flatten().copied().collect::<Vec<_>>());
    let summary = WidthSummary {
        simple_median: med(&simple),
        invariant_median: med(&invariant),
        simple,
        invariant,
    };
    Ok((summary, simple_maps, invariant_maps))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub beta: f64,
    /// Mean pairwise overlap of the invariant units' response regions.
    pub overlap: f64,
    /// Invariant units responding somewhere on the grid.
    pub n_responding: usize,
}

/// Retrains the pooling layer on the same accumulated codes for each `β`
/// and measures how much the invariant units' response regions overlap.
pub fn beta_sweep(
    run: &SplitRun,
    betas: &[f64],
    inv_dim: usize,
    train: &TrainOptions,
    grid: &ResponseGrid,
    opts: &SolverOptions,
) -> Result<Vec<SweepRow>> {
    let units: Vec<usize> = (0..inv_dim).collect();
    betas
        .iter()
        .map(|&beta| {
            let model = train_invariant(&run.pooled, &run.layer1, inv_dim, beta, train)?;
            let maps = response_maps(&model, UnitKind::Invariant, &units, grid, opts)?;
            Ok(SweepRow {
                beta,
                overlap: mean_pairwise_overlap(&maps),
                n_responding: maps.iter().filter(|m| m.tuning_width().is_some()).count(),
            })
        })
        .collect()
}

pub fn nondecreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] >= w[0])
}
