use ndarray::Array1;
use rand::seq::index::sample;
use rand::Rng;

use super::{stream_rng, streams, toy_samples, ToySetup};
use crate::analysis::median;
use crate::error::{Error, Result};
use crate::learning::{inpaint_rms, train_sparse_coding, train_unified, Model};
use crate::solver::SolverOptions;

/// Observation mask hiding `round(ratio · n)` pixels chosen uniformly.
pub fn random_mask<R: Rng + ?Sized>(n: usize, ratio: f64, rng: &mut R) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidParameter(format!("mask ratio must lie in [0, 1], got {ratio}")));
    }
    let hidden = (ratio * n as f64).round() as usize;
    if hidden >= n {
        return Err(Error::EmptyInput("observed pixels"));
    }
    let mut mask = vec![true; n];
    for i in sample(rng, n, hidden) {
        mask[i] = false;
    }
    Ok(mask)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InpaintRow {
    pub index: usize,
    pub one_layer: f64,
    pub two_layer: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InpaintSummary {
    pub rows: Vec<InpaintRow>,
    pub median_one_layer: f64,
    pub median_two_layer: f64,
}

impl InpaintSummary {
    pub fn two_layer_wins(&self) -> bool {
        self.median_two_layer <= self.median_one_layer
    }
}

/// Hidden-pixel RMS of both models on every patch, with the same mask for
/// both models on a given patch.
pub fn compare_inpainting(
    one_layer: &Model,
    two_layer: &Model,
    patches: &[Array1<f64>],
    ratio: f64,
    seed: u64,
    opts: &SolverOptions,
) -> Result<InpaintSummary> {
    if patches.is_empty() {
        return Err(Error::EmptyInput("in-painting patches"));
    }
    let mut rng = stream_rng(seed, streams::MASKS);
    let mut rows = Vec::with_capacity(patches.len());
    for (index, x) in patches.iter().enumerate() {
        let mask = random_mask(x.len(), ratio, &mut rng)?;
        rows.push(InpaintRow {
            index,
            one_layer: inpaint_rms(one_layer, x, &mask, opts)?,
            two_layer: inpaint_rms(two_layer, x, &mask, opts)?,
        });
    }
    let col = |f: fn(&InpaintRow) -> f64| median(&rows.iter().map(f).collect::<Vec<_>>()).unwrap_or(f64::NAN);
    Ok(InpaintSummary {
        median_one_layer: col(|r| r.one_layer),
        median_two_layer: col(|r| r.two_layer),
        rows,
    })
}

/// Trains a one-layer and a unified model on the same line-world patches and
/// compares them on `n_patches` held-out patches with `ratio` of the pixels
/// hidden.
pub fn toy_inpainting(setup: &ToySetup, n_patches: usize, ratio: f64) -> Result<InpaintSummary> {
    setup.cfg.validate()?;
    let seed = setup.train.seed;
    let samples = toy_samples(&setup.cfg, setup.n_train, &mut stream_rng(seed, streams::TRAIN_DATA));
    let one_layer = train_sparse_coding(&samples, setup.code_dim, setup.alpha, &setup.train)?;
    let single: Vec<Vec<Array1<f64>>> = samples.into_iter().map(|x| vec![x]).collect();
    let two_layer = train_unified(&single, setup.code_dim, setup.inv_dim, setup.alpha, setup.beta, &setup.train)?;
    compare_inpainting(
        &one_layer,
        &two_layer,
        &toy_held_out(setup, n_patches),
        ratio,
        seed,
        &setup.train.infer_opts,
    )
}

/// Line-world patches from a stream disjoint from training and evaluation.
pub fn toy_held_out(setup: &ToySetup, n: usize) -> Vec<Array1<f64>> {
    toy_samples(&setup.cfg, n, &mut stream_rng(setup.train.seed, streams::HELD_OUT))
}
