//! Energy functions for the sparse-coding layer, the invariant layer, the
//! unified two-layer model, and the generic n-layer product form
//!
//! ```text
//! E(z) = Σ_{a=0}^{n} ⟨g_a(z_a), e_{a+1}(z_{a+1})⟩,   g_0 = 1, e_{n+1} = 1
//! ```
//!
//! Each factor may be vector valued ("channels"); the pairing between a
//! nonsmooth factor and the next layer's smooth factor is a dot product over
//! channels. This is what lets the unified model couple the pooled magnitude
//! of simple unit `i` with its own modulation `(1 + e^{-(Au)_i}) / 2`.
//!
//! Layers are indexed from zero in this API.

use ndarray::{Array1, ArrayView1};

use crate::dictionary::Dictionary;
use crate::error::{check_dim, Error, Result};

/// Sign constraint on a layer's code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignConstraint {
    Free,
    NonNegative,
}

/// Smooth factor `e_a` of a layer.
#[derive(Debug, Clone)]
pub enum SmoothFactor {
    /// `e = 1` on every channel.
    Constant { channels: usize },
    /// `½ Σ_t ‖m ⊙ (x_t − W z_t)‖²`, with the frames `x_t` stored back to back
    /// in `targets` and the code holding one block of `cols(W)` per frame.
    /// `mask`, when present, weights each pixel of a frame (1 = observed).
    QuadraticReconstruction {
        dict: Dictionary,
        targets: Array1<f64>,
        mask: Option<Array1<f64>>,
    },
    /// `α Σ_i w_i e^{−(Au)_i}` with fixed weights `w` (the accumulated code).
    ExpModulation {
        dict: Dictionary,
        alpha: f64,
        weights: Array1<f64>,
    },
    /// Channel `i` is `α (1 + e^{−(Au)_i}) / 2`.
    LogisticModulation { dict: Dictionary, alpha: f64 },
}

/// Nonsmooth factor `g_a` of a layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NonsmoothFactor {
    /// `g = c` on every channel.
    Constant(f64),
    /// Channel `i` of `g` is `weight · Σ_{j ≡ i} |z_j|`, pooling the code over
    /// blocks of the next layer's channel count.
    WeightedL1(f64),
}

#[derive(Debug, Clone)]
pub struct LayerSpec {
    pub dim: usize,
    pub smooth: SmoothFactor,
    pub nonsmooth: NonsmoothFactor,
    pub sign: SignConstraint,
}

impl LayerSpec {
    /// Builds a layer whose code size is implied by the smooth factor.
    pub fn new(smooth: SmoothFactor, nonsmooth: NonsmoothFactor, sign: SignConstraint) -> Result<Self> {
        let dim = match &smooth {
            SmoothFactor::Constant { .. } => {
                return Err(Error::InvalidParameter(
                    "a constant smooth factor needs an explicit code size".into(),
                ))
            }
            SmoothFactor::QuadraticReconstruction { dict, targets, .. } => {
                let rows = dict.input_dim();
                if targets.is_empty() || targets.len() % rows != 0 {
                    return Err(Error::DimensionMismatch {
                        context: "reconstruction targets",
                        expected: rows,
                        found: targets.len(),
                    });
                }
                targets.len() / rows * dict.code_dim()
            }
            SmoothFactor::ExpModulation { dict, .. } | SmoothFactor::LogisticModulation { dict, .. } => {
                dict.code_dim()
            }
        };
        Self::with_dim(dim, smooth, nonsmooth, sign)
    }

    pub fn with_dim(
        dim: usize,
        smooth: SmoothFactor,
        nonsmooth: NonsmoothFactor,
        sign: SignConstraint,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyInput("layer code"));
        }
        match &smooth {
            SmoothFactor::Constant { channels } => {
                if *channels == 0 {
                    return Err(Error::EmptyInput("constant factor channels"));
                }
            }
            SmoothFactor::QuadraticReconstruction { dict, targets, mask } => {
                let rows = dict.input_dim();
                if targets.len() % rows != 0 {
                    return Err(Error::DimensionMismatch {
                        context: "reconstruction targets",
                        expected: rows,
                        found: targets.len(),
                    });
                }
                check_dim("reconstruction code", targets.len() / rows * dict.code_dim(), dim)?;
                if let Some(m) = mask {
                    check_dim("reconstruction mask", rows, m.len())?;
                    if m.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                        return Err(Error::InvalidParameter("mask weights must lie in [0, 1]".into()));
                    }
                }
            }
            SmoothFactor::ExpModulation { dict, alpha, weights } => {
                check_dim("modulation code", dict.code_dim(), dim)?;
                check_dim("modulation weights", dict.input_dim(), weights.len())?;
                if !(*alpha >= 0.0) || weights.iter().any(|&w| !(w >= 0.0)) {
                    return Err(Error::InvalidParameter(
                        "exponential modulation needs alpha ≥ 0 and nonnegative weights".into(),
                    ));
                }
            }
            SmoothFactor::LogisticModulation { dict, alpha } => {
                check_dim("modulation code", dict.code_dim(), dim)?;
                if !(*alpha >= 0.0) {
                    return Err(Error::InvalidParameter("logistic modulation needs alpha ≥ 0".into()));
                }
            }
        }
        let c = match nonsmooth {
            NonsmoothFactor::Constant(c) | NonsmoothFactor::WeightedL1(c) => c,
        };
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "nonsmooth factor weight must be finite and ≥ 0, got {c}"
            )));
        }
        Ok(Self {
            dim,
            smooth,
            nonsmooth,
            sign,
        })
    }

    /// Number of channels of the smooth factor.
    pub fn smooth_channels(&self) -> usize {
        match &self.smooth {
            SmoothFactor::Constant { channels } => *channels,
            SmoothFactor::QuadraticReconstruction { .. } | SmoothFactor::ExpModulation { .. } => 1,
            SmoothFactor::LogisticModulation { dict, .. } => dict.input_dim(),
        }
    }

    pub(crate) fn dictionary(&self) -> Option<&Dictionary> {
        match &self.smooth {
            SmoothFactor::Constant { .. } => None,
            SmoothFactor::QuadraticReconstruction { dict, .. }
            | SmoothFactor::ExpModulation { dict, .. }
            | SmoothFactor::LogisticModulation { dict, .. } => Some(dict),
        }
    }

    /// The linear image `D z` that every smooth factor depends on.
    pub(crate) fn image(&self, z: ArrayView1<'_, f64>) -> Array1<f64> {
        match self.dictionary() {
            Some(d) => d.apply(z),
            None => Array1::zeros(0),
        }
    }

    /// Channel values of `e_a` given the cached image.
    pub(crate) fn smooth_values(&self, image: &Array1<f64>) -> Array1<f64> {
        match &self.smooth {
            SmoothFactor::Constant { channels } => Array1::ones(*channels),
            SmoothFactor::QuadraticReconstruction { targets, mask, dict } => {
                let rows = dict.input_dim();
                let mut acc = 0.0;
                for (j, (&y, &x)) in image.iter().zip(targets.iter()).enumerate() {
                    let r = x - y;
                    let m = mask.as_ref().map_or(1.0, |m| m[j % rows]);
                    acc += m * r * r;
                }
                Array1::from_elem(1, 0.5 * acc)
            }
            SmoothFactor::ExpModulation { alpha, weights, .. } => {
                let s: f64 = weights.iter().zip(image.iter()).map(|(&w, &v)| w * (-v).exp()).sum();
                Array1::from_elem(1, alpha * s)
            }
            SmoothFactor::LogisticModulation { alpha, .. } => {
                image.mapv(|v| 0.5 * alpha * (1.0 + (-v).exp()))
            }
        }
    }

    /// `∇_z Σ_i w_i e_a^i(z)` from the cached image; one transposed product.
    pub(crate) fn smooth_gradient(&self, image: &Array1<f64>, weights: &Array1<f64>) -> Array1<f64> {
        match &self.smooth {
            SmoothFactor::Constant { .. } => Array1::zeros(self.dim),
            SmoothFactor::QuadraticReconstruction { dict, targets, mask } => {
                let rows = dict.input_dim();
                let mut r = image - targets;
                if let Some(m) = mask {
                    for (j, v) in r.iter_mut().enumerate() {
                        *v *= m[j % rows];
                    }
                }
                let mut g = dict.apply_t(r.view());
                g *= weights[0];
                g
            }
            SmoothFactor::ExpModulation { dict, alpha, weights: pooled } => {
                let s = Array1::from_iter(
                    pooled.iter().zip(image.iter()).map(|(&w, &v)| -alpha * weights[0] * w * (-v).exp()),
                );
                dict.apply_t(s.view())
            }
            SmoothFactor::LogisticModulation { dict, alpha } => {
                let s = Array1::from_iter(
                    weights.iter().zip(image.iter()).map(|(&w, &v)| -0.5 * alpha * w * (-v).exp()),
                );
                dict.apply_t(s.view())
            }
        }
    }
}

fn pool_abs(z: ArrayView1<'_, f64>, channels: usize, weight: f64) -> Array1<f64> {
    let mut out = Array1::zeros(channels);
    for (j, &v) in z.iter().enumerate() {
        out[j % channels] += v.abs();
    }
    out *= weight;
    out
}

/// The n-layer product-form energy.
#[derive(Debug, Clone)]
pub struct HierarchicalEnergy {
    layers: Vec<LayerSpec>,
}

impl HierarchicalEnergy {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::EmptyInput("hierarchical energy needs at least one layer"));
        }
        for a in 0..layers.len() {
            let next = layers.get(a + 1).map_or(1, LayerSpec::smooth_channels);
            if let NonsmoothFactor::WeightedL1(_) = layers[a].nonsmooth {
                if !layers[a].dim.is_multiple_of(next) {
                    return Err(Error::DimensionMismatch {
                        context: "pooled layer code (multiple of next layer's channels)",
                        expected: next,
                        found: layers[a].dim,
                    });
                }
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layer(&self, a: usize) -> Result<&LayerSpec> {
        self.layers.get(a).ok_or(Error::LayerOutOfRange {
            index: a,
            layers: self.layers.len(),
        })
    }

    /// A zero code of the right shape.
    pub fn zeros(&self) -> Vec<Array1<f64>> {
        self.layers.iter().map(|l| Array1::zeros(l.dim)).collect()
    }

    pub fn check_codes(&self, z: &[Array1<f64>]) -> Result<()> {
        check_dim("number of layer codes", self.layers.len(), z.len())?;
        for (l, za) in self.layers.iter().zip(z) {
            check_dim("layer code", l.dim, za.len())?;
        }
        Ok(())
    }

    /// Channels of `e_{a+1}`, with the terminal factor having one channel.
    pub(crate) fn next_channels(&self, a: usize) -> usize {
        self.layers.get(a + 1).map_or(1, LayerSpec::smooth_channels)
    }

    /// `g_a(z_a)` with as many channels as `e_{a+1}`.
    pub(crate) fn nonsmooth_values(&self, a: usize, z: ArrayView1<'_, f64>) -> Array1<f64> {
        let channels = self.next_channels(a);
        match self.layers[a].nonsmooth {
            NonsmoothFactor::Constant(c) => Array1::from_elem(channels, c),
            NonsmoothFactor::WeightedL1(w) => pool_abs(z, channels, w),
        }
    }

    /// `g_{a−1}(z_{a−1})`, or ones for the first layer.
    pub(crate) fn coupling_weights(&self, a: usize, z: &[Array1<f64>]) -> Array1<f64> {
        if a == 0 {
            Array1::ones(self.layers[0].smooth_channels())
        } else {
            self.nonsmooth_values(a - 1, z[a - 1].view())
        }
    }

    /// Per-coordinate shrinkage thresholds `weight · e_{a+1}` (before dividing by L).
    pub(crate) fn thresholds(&self, a: usize, next_values: &Array1<f64>) -> Array1<f64> {
        let dim = self.layers[a].dim;
        match self.layers[a].nonsmooth {
            NonsmoothFactor::Constant(_) => Array1::zeros(dim),
            NonsmoothFactor::WeightedL1(w) => {
                let k = next_values.len();
                Array1::from_shape_fn(dim, |j| w * next_values[j % k])
            }
        }
    }

    /// Values of `e_{a+1}` given the images of all layers.
    pub(crate) fn next_values(&self, a: usize, images: &[Array1<f64>]) -> Array1<f64> {
        match self.layers.get(a + 1) {
            Some(l) => l.smooth_values(&images[a + 1]),
            None => Array1::ones(1),
        }
    }

    /// Energy from precomputed images; performs no dictionary products.
    pub(crate) fn energy_from_images(&self, z: &[Array1<f64>], images: &[Array1<f64>]) -> f64 {
        let mut total: f64 = self.layers[0].smooth_values(&images[0]).sum();
        for a in 0..self.layers.len() {
            let g = self.nonsmooth_values(a, z[a].view());
            let e = self.next_values(a, images);
            total += g.dot(&e);
        }
        total
    }

    pub(crate) fn images(&self, z: &[Array1<f64>]) -> Vec<Array1<f64>> {
        self.layers.iter().zip(z).map(|(l, za)| l.image(za.view())).collect()
    }
}

/// Evaluates the n-layer energy.
pub fn eval_hierarchical_energy(h: &HierarchicalEnergy, z: &[Array1<f64>]) -> Result<f64> {
    h.check_codes(z)?;
    let images = h.images(z);
    Ok(h.energy_from_images(z, &images))
}

/// Gradient of the smooth part `g_{a−1}(z_{a−1}) · e_a(z_a)` with respect to `z_a`.
pub fn grad_smooth_layer(h: &HierarchicalEnergy, z: &[Array1<f64>], a: usize) -> Result<Array1<f64>> {
    let layer = h.layer(a)?;
    h.check_codes(z)?;
    let w = h.coupling_weights(a, z);
    let image = layer.image(z[a].view());
    Ok(layer.smooth_gradient(&image, &w))
}

/// Value of the smooth part `⟨g_{a−1}(z_{a−1}), e_a(z_a)⟩` for layer `a`.
pub fn smooth_layer_value(h: &HierarchicalEnergy, z: &[Array1<f64>], a: usize) -> Result<f64> {
    let layer = h.layer(a)?;
    h.check_codes(z)?;
    let w = h.coupling_weights(a, z);
    let image = layer.image(z[a].view());
    Ok(layer.smooth_values(&image).dot(&w))
}

/// Single-layer sparse coding: `½‖x − Wz‖² + α‖z‖₁`.
#[derive(Debug, Clone)]
pub struct SparseCodingProblem {
    pub dict: Dictionary,
    pub input: Array1<f64>,
    pub alpha: f64,
}

impl SparseCodingProblem {
    pub fn new(dict: Dictionary, input: Array1<f64>, alpha: f64) -> Result<Self> {
        check_dim("sparse coding input", dict.input_dim(), input.len())?;
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { dict, input, alpha })
    }

    pub fn to_hierarchical(&self) -> HierarchicalEnergy {
        self.to_hierarchical_masked(None).expect("validated at construction")
    }

    /// The same problem with the reconstruction restricted to `mask`.
    pub fn to_hierarchical_masked(&self, mask: Option<Array1<f64>>) -> Result<HierarchicalEnergy> {
        let layer = LayerSpec::new(
            SmoothFactor::QuadraticReconstruction {
                dict: self.dict.clone(),
                targets: self.input.clone(),
                mask,
            },
            NonsmoothFactor::WeightedL1(self.alpha),
            SignConstraint::Free,
        )?;
        HierarchicalEnergy::new(vec![layer])
    }
}

pub fn eval_sparse_energy(p: &SparseCodingProblem, z: &Array1<f64>) -> Result<f64> {
    check_dim("sparse code", p.dict.code_dim(), z.len())?;
    let r = &p.input - &p.dict.apply(z.view());
    Ok(0.5 * r.dot(&r) + p.alpha * z.iter().map(|v| v.abs()).sum::<f64>())
}

/// `z*_i = Σ_t |z_{t,i}|`.
pub fn accumulate_codes(codes: &[Array1<f64>]) -> Result<Array1<f64>> {
    let first = codes.first().ok_or(Error::EmptyInput("code list"))?;
    let mut acc = Array1::zeros(first.len());
    for c in codes {
        check_dim("accumulated code", first.len(), c.len())?;
        acc.zip_mut_with(c, |s, &v| *s += v.abs());
    }
    Ok(acc)
}

/// The invariant layer of the split model: `α Σ_i z*_i e^{−(Au)_i} + β‖u‖₁`.
#[derive(Debug, Clone)]
pub struct InvariantProblem {
    pub pooling: Dictionary,
    pub pooled: Array1<f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl InvariantProblem {
    pub fn new(pooling: Dictionary, pooled: Array1<f64>, alpha: f64, beta: f64) -> Result<Self> {
        check_dim("accumulated code", pooling.input_dim(), pooled.len())?;
        if pooled.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidParameter("accumulated code must be nonnegative".into()));
        }
        if !pooling.is_nonneg() {
            return Err(Error::InvalidParameter("pooling dictionary must be nonnegative".into()));
        }
        if !(alpha > 0.0) || !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha and beta must be positive, got {alpha}, {beta}"
            )));
        }
        Ok(Self {
            pooling,
            pooled,
            alpha,
            beta,
        })
    }

    pub fn to_hierarchical(&self) -> HierarchicalEnergy {
        let layer = LayerSpec::new(
            SmoothFactor::ExpModulation {
                dict: self.pooling.clone(),
                alpha: self.alpha,
                weights: self.pooled.clone(),
            },
            NonsmoothFactor::WeightedL1(self.beta),
            SignConstraint::NonNegative,
        )
        .expect("validated at construction");
        HierarchicalEnergy::new(vec![layer]).expect("single layer")
    }
}

pub fn eval_invariant_energy(p: &InvariantProblem, u: &Array1<f64>) -> Result<f64> {
    check_dim("invariant code", p.pooling.code_dim(), u.len())?;
    let au = p.pooling.apply(u.view());
    let s: f64 = p.pooled.iter().zip(au.iter()).map(|(&w, &v)| w * (-v).exp()).sum();
    Ok(p.alpha * s + p.beta * u.iter().map(|v| v.abs()).sum::<f64>())
}

/// The unified two-layer model over a sequence of frames.
#[derive(Debug, Clone)]
pub struct UnifiedProblem {
    pub dict: Dictionary,
    pub pooling: Dictionary,
    pub frames: Vec<Array1<f64>>,
    pub alpha: f64,
    pub beta: f64,
}

impl UnifiedProblem {
    pub fn new(
        dict: Dictionary,
        pooling: Dictionary,
        frames: Vec<Array1<f64>>,
        alpha: f64,
        beta: f64,
    ) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptyInput("frame list"));
        }
        for f in &frames {
            check_dim("frame", dict.input_dim(), f.len())?;
        }
        check_dim("pooling rows", dict.code_dim(), pooling.input_dim())?;
        if !pooling.is_nonneg() {
            return Err(Error::InvalidParameter("pooling dictionary must be nonnegative".into()));
        }
        if !(alpha > 0.0) || !(beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha and beta must be positive, got {alpha}, {beta}"
            )));
        }
        Ok(Self {
            dict,
            pooling,
            frames,
            alpha,
            beta,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn to_hierarchical(&self) -> HierarchicalEnergy {
        self.to_hierarchical_masked(None).expect("validated at construction")
    }

    /// The two-layer embedding, optionally restricting reconstruction to `mask`.
    pub fn to_hierarchical_masked(&self, mask: Option<Array1<f64>>) -> Result<HierarchicalEnergy> {
        let targets = Array1::from_iter(self.frames.iter().flat_map(|f| f.iter().copied()));
        let simple = LayerSpec::new(
            SmoothFactor::QuadraticReconstruction {
                dict: self.dict.clone(),
                targets,
                mask,
            },
            NonsmoothFactor::WeightedL1(1.0),
            SignConstraint::Free,
        )?;
        let invariant = LayerSpec::new(
            SmoothFactor::LogisticModulation {
                dict: self.pooling.clone(),
                alpha: self.alpha,
            },
            NonsmoothFactor::WeightedL1(self.beta),
            SignConstraint::NonNegative,
        )?;
        HierarchicalEnergy::new(vec![simple, invariant])
    }

    /// Packs per-frame codes and the invariant code into layer codes.
    pub fn pack(&self, z: &[Array1<f64>], u: &Array1<f64>) -> Result<Vec<Array1<f64>>> {
        check_dim("number of frame codes", self.frames.len(), z.len())?;
        for zt in z {
            check_dim("frame code", self.dict.code_dim(), zt.len())?;
        }
        check_dim("invariant code", self.pooling.code_dim(), u.len())?;
        let flat = Array1::from_iter(z.iter().flat_map(|c| c.iter().copied()));
        Ok(vec![flat, u.clone()])
    }

    /// Splits the first layer code back into per-frame codes.
    pub fn unpack(&self, layer_codes: &[Array1<f64>]) -> (Vec<Array1<f64>>, Array1<f64>) {
        let m = self.dict.code_dim();
        let z = layer_codes[0]
            .as_slice()
            .expect("contiguous")
            .chunks(m)
            .map(|c| Array1::from(c.to_vec()))
            .collect();
        (z, layer_codes[1].clone())
    }
}

pub fn eval_unified_energy(p: &UnifiedProblem, z: &[Array1<f64>], u: &Array1<f64>) -> Result<f64> {
    check_dim("number of frame codes", p.frames.len(), z.len())?;
    check_dim("invariant code", p.pooling.code_dim(), u.len())?;
    let au = p.pooling.apply(u.view());
    let g = au.mapv(|v| 0.5 * (1.0 + (-v).exp()));
    let mut total = 0.0;
    for (x, zt) in p.frames.iter().zip(z) {
        check_dim("frame code", p.dict.code_dim(), zt.len())?;
        let r = x - &p.dict.apply(zt.view());
        total += 0.5 * r.dot(&r);
        total += p.alpha * zt.iter().zip(g.iter()).map(|(v, gi)| v.abs() * gi).sum::<f64>();
    }
    Ok(total + p.beta * u.iter().map(|v| v.abs()).sum::<f64>())
}
