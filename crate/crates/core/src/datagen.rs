//! Synthetic data and preprocessing: the line-world toy distribution, local
//! mean and contrast normalization, translating-window sequences, the
//! parametric edge stimulus, and PGM input/output.

use std::f64::consts::PI;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::ImageEncoder;
use ndarray::{s, Array1, Array2, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};

/// A grayscale image patch, indexed `[row, column]`.
pub type Patch = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyConfig {
    pub size: usize,
    pub n_orientations: usize,
    pub n_positions: usize,
    pub line_prob: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            size: 20,
            n_orientations: 4,
            n_positions: 10,
            line_prob: 0.2,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 2 || self.n_orientations == 0 || self.n_positions == 0 {
            return Err(Error::InvalidParameter(
                "toy patches need size ≥ 2 and at least one orientation and position".into(),
            ));
        }
        if self.n_positions > self.size {
            return Err(Error::InvalidParameter(format!(
                "{} line positions do not fit in a {}-pixel patch",
                self.n_positions, self.size
            )));
        }
        if !(self.line_prob > 0.0 && self.line_prob < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "line probability must lie in (0, 1), got {}",
                self.line_prob
            )));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.size * self.size
    }

    /// Orientation `o` in radians: `o·π / n_orientations`.
    pub fn angle(&self, orientation: usize) -> f64 {
        orientation as f64 * PI / self.n_orientations as f64
    }
}

/// A toy sample together with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPatch {
    pub patch: Patch,
    pub orientation: usize,
    /// `lines[k]` is true when line `k` of the orientation is drawn.
    pub lines: Vec<bool>,
}

/// One-pixel-wide digital line `position` of `orientation`, value 1 on the line.
///
/// A pixel `(i, j)` lies on the line when its normal coordinate
/// `(i cos θ − j sin θ) / max(|cos θ|, |sin θ|)`, measured from the patch
/// center, falls in `[c − ½, c + ½)` for the line's offset `c`. Offsets are
/// spaced `size / n_positions` apart, symmetric about the center, so the
/// four default orientations give rows, diagonals, columns and anti-diagonals
/// (with rows growing downwards).
pub fn line_template(cfg: &ToyConfig, orientation: usize, position: usize) -> Patch {
    let theta = cfg.angle(orientation);
    let (sin, cos) = theta.sin_cos();
    let scale = cos.abs().max(sin.abs());
    let normal = |i: f64, j: f64| (i * cos - j * sin) / scale;
    let center = (cfg.size as f64 - 1.0) / 2.0;
    let spacing = cfg.size as f64 / cfg.n_positions as f64;
    let offset = (position as f64 - (cfg.n_positions as f64 - 1.0) / 2.0) * spacing;
    let origin = normal(center, center);
    Array2::from_shape_fn((cfg.size, cfg.size), |(i, j)| {
        let d = normal(i as f64, j as f64) - origin - offset;
        if (d + 0.5 + 1e-9).floor() == 0.0 {
            1.0
        } else {
            0.0
        }
    })
}

/// All templates, indexed `[orientation][position]`.
pub fn line_templates(cfg: &ToyConfig) -> Vec<Vec<Patch>> {
    (0..cfg.n_orientations)
        .map(|o| (0..cfg.n_positions).map(|k| line_template(cfg, o, k)).collect())
        .collect()
}

/// Draws an orientation uniformly and each of its lines independently.
pub fn gen_toy_patch<R: Rng + ?Sized>(cfg: &ToyConfig, rng: &mut R) -> ToyPatch {
    let orientation = rng.random_range(0..cfg.n_orientations);
    let lines: Vec<bool> = (0..cfg.n_positions).map(|_| rng.random_bool(cfg.line_prob)).collect();
    let mut patch = Array2::zeros((cfg.size, cfg.size));
    for (k, _) in lines.iter().enumerate().filter(|(_, &on)| on) {
        let t = line_template(cfg, orientation, k);
        // Lines of one orientation never share a pixel, so this stays binary.
        patch.zip_mut_with(&t, |p, &v| *p = f64::max(*p, v));
    }
    ToyPatch {
        patch,
        orientation,
        lines,
    }
}

/// Gaussian standard deviation used by both preprocessing stages.
pub const PREPROCESS_SIGMA: f64 = 9.0 / 4.0;
/// The kernel is truncated to a `(2·4 + 1)²` = 9×9 window.
pub const PREPROCESS_RADIUS: usize = 4;
/// Contrast cutoff relative to the image's global standard deviation.
pub const CONTRAST_CUTOFF: f64 = 0.01;

fn gaussian_kernel() -> Array2<f64> {
    let r = PREPROCESS_RADIUS as isize;
    let n = 2 * PREPROCESS_RADIUS + 1;
    Array2::from_shape_fn((n, n), |(i, j)| {
        let di = (i as isize - r) as f64;
        let dj = (j as isize - r) as f64;
        (-(di * di + dj * dj) / (2.0 * PREPROCESS_SIGMA * PREPROCESS_SIGMA)).exp()
    })
}

/// `Σ_q w_q f(p, q) / Σ_q w_q` over the in-bounds part of the window around each pixel.
fn local_average(image: ArrayView2<'_, f64>, f: impl Fn(f64, f64) -> f64) -> Array2<f64> {
    let kernel = gaussian_kernel();
    let (rows, cols) = image.dim();
    let r = PREPROCESS_RADIUS as isize;
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        let centre = image[[i, j]];
        let mut acc = 0.0;
        let mut norm = 0.0;
        for di in -r..=r {
            let y = i as isize + di;
            if y < 0 || y >= rows as isize {
                continue;
            }
            for dj in -r..=r {
                let x = j as isize + dj;
                if x < 0 || x >= cols as isize {
                    continue;
                }
                let w = kernel[[(di + r) as usize, (dj + r) as usize]];
                acc += w * f(centre, image[[y as usize, x as usize]]);
                norm += w;
            }
        }
        acc / norm
    })
}

/// Gaussian-weighted local mean (renormalized at the borders).
pub fn local_mean(image: ArrayView2<'_, f64>) -> Array2<f64> {
    local_average(image, |_, v| v)
}

/// Stage 1: `x − local_mean(x)`, computed as the negated weighted mean of
/// differences so a constant image maps to exactly zero.
pub fn subtract_local_mean(image: ArrayView2<'_, f64>) -> Array2<f64> {
    local_average(image, |c, v| c - v)
}

/// Gaussian-weighted local standard deviation.
pub fn local_std(image: ArrayView2<'_, f64>) -> Array2<f64> {
    let mean = local_mean(image);
    let second = local_average(image, |_, v| v * v);
    Array2::from_shape_fn(image.dim(), |(i, j)| {
        (second[[i, j]] - mean[[i, j]] * mean[[i, j]]).max(0.0).sqrt()
    })
}

fn global_std(image: ArrayView2<'_, f64>) -> f64 {
    let n = image.len() as f64;
    let mean = image.sum() / n;
    (image.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Local mean subtraction followed by division by
/// `max(local std, 0.01 · global std of the input)`.
pub fn preprocess(image: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if image.is_empty() {
        return Err(Error::EmptyInput("image"));
    }
    if image.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("image has non-finite pixels".into()));
    }
    let centred = subtract_local_mean(image);
    let spread = local_std(centred.view());
    let cutoff = (CONTRAST_CUTOFF * global_std(image)).max(f64::MIN_POSITIVE);
    Ok(Array2::from_shape_fn(image.dim(), |p| centred[p] / spread[p].max(cutoff)))
}

/// How the displacement magnitude is applied across frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Motion {
    /// The window moves by the sampled displacement between consecutive frames.
    #[default]
    PerFrame,
    /// The sampled displacement is the travel from the first to the last frame.
    Total,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSequence {
    pub frames: Vec<Patch>,
    /// Sampled continuous displacement `m (cos φ, sin φ)` as `(dx, dy)`.
    pub displacement: (f64, f64),
}

impl PatchSequence {
    /// Frames flattened row-major.
    pub fn vectors(&self) -> Vec<Array1<f64>> {
        self.frames.iter().map(flatten).collect()
    }
}

pub fn flatten(p: &Patch) -> Array1<f64> {
    Array1::from_iter(p.iter().copied())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceConfig {
    pub window: usize,
    pub n_frames: usize,
    pub magnitude: (f64, f64),
    pub motion: Motion,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            window: 20,
            n_frames: 3,
            magnitude: (1.0, 2.0),
            motion: Motion::PerFrame,
        }
    }
}

impl SequenceConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.magnitude;
        if self.window == 0 || self.n_frames == 0 {
            return Err(Error::InvalidParameter("window and frame count must be positive".into()));
        }
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidParameter(format!("invalid magnitude range ({lo}, {hi})")));
        }
        Ok(())
    }

    /// Largest pixel travel of the window along one axis.
    fn max_travel(&self) -> usize {
        let steps = self.n_frames.saturating_sub(1) as f64;
        let travel = match self.motion {
            Motion::PerFrame => steps * self.magnitude.1.ceil(),
            Motion::Total => self.magnitude.1.ceil(),
        };
        travel as usize
    }
}

/// Pixel offsets of each frame's window origin relative to the first.
fn frame_offsets(cfg: &SequenceConfig, dx: f64, dy: f64) -> Vec<(isize, isize)> {
    let n = cfg.n_frames;
    match cfg.motion {
        Motion::PerFrame => {
            // Rounding the velocity once keeps the motion uniform in whole pixels.
            let (vx, vy) = (dx.round() as isize, dy.round() as isize);
            (0..n).map(|t| (t as isize * vx, t as isize * vy)).collect()
        }
        Motion::Total => (0..n)
            .map(|t| {
                let f = if n > 1 { t as f64 / (n - 1) as f64 } else { 0.0 };
                ((f * dx).round() as isize, (f * dy).round() as isize)
            })
            .collect(),
    }
}

/// Cuts `n_frames` windows from `image` along a uniformly random direction
/// with a magnitude drawn uniformly from the configured range. The base
/// position is drawn uniformly among those keeping every window in bounds.
pub fn extract_sequence<R: Rng + ?Sized>(
    image: ArrayView2<'_, f64>,
    cfg: &SequenceConfig,
    rng: &mut R,
) -> Result<PatchSequence> {
    cfg.validate()?;
    let (lo, hi) = cfg.magnitude;
    let (rows, cols) = image.dim();
    let needed = cfg.window + cfg.max_travel();
    if rows < needed || cols < needed {
        return Err(Error::InvalidParameter(format!(
            "image of {rows}×{cols} is too small for a {}-pixel window travelling {} pixels",
            cfg.window,
            cfg.max_travel()
        )));
    }
    let phi = rng.random_range(0.0..2.0 * PI);
    let m = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let (dx, dy) = (m * phi.cos(), m * phi.sin());
    let offsets = frame_offsets(cfg, dx, dy);
    let span = |pick: fn(&(isize, isize)) -> isize| {
        let min = offsets.iter().map(pick).min().unwrap_or(0);
        let max = offsets.iter().map(pick).max().unwrap_or(0);
        (min, max)
    };
    let (min_x, max_x) = span(|o| o.0);
    let (min_y, max_y) = span(|o| o.1);
    let base_x = rng.random_range(-min_x as i64..=(cols - cfg.window) as i64 - max_x as i64) as isize;
    let base_y = rng.random_range(-min_y as i64..=(rows - cfg.window) as i64 - max_y as i64) as isize;
    let frames = offsets
        .iter()
        .map(|&(ox, oy)| {
            let x = (base_x + ox) as usize;
            let y = (base_y + oy) as usize;
            image.slice(s![y..y + cfg.window, x..x + cfg.window]).to_owned()
        })
        .collect();
    Ok(PatchSequence {
        frames,
        displacement: (dx, dy),
    })
}

/// `e^{−v²/4} sin v` with `v = k (x cos θ + y sin θ) + k b`, where `(x, y)`
/// is measured from the patch center (`x` to the right, `y` downwards).
pub fn edge_value(x: f64, y: f64, b: f64, theta: f64, k: f64) -> f64 {
    let v = k * (x * theta.cos() + y * theta.sin()) + k * b;
    (-0.25 * v * v).exp() * v.sin()
}

/// Samples [`edge_value`] on a `size × size` grid.
pub fn edge_stimulus(b: f64, theta: f64, k: f64, size: usize) -> Result<Patch> {
    if !(k > 0.0) {
        return Err(Error::InvalidParameter(format!("edge frequency must be positive, got {k}")));
    }
    let c = (size as f64 - 1.0) / 2.0;
    Ok(Array2::from_shape_fn((size, size), |(i, j)| {
        edge_value(j as f64 - c, i as f64 - c, b, theta, k)
    }))
}

/// Dead-leaves image: opaque disks with power-law radii and uniform gray
/// levels painted front to back, giving sharp edges at every orientation
/// and scale. Rendered at 4×4 subpixels per pixel and box-filtered so edges
/// are antialiased. Used as the synthetic stand-in for natural images.
pub fn dead_leaves<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Array2<f64> {
    const SUB: usize = 4;
    let fine = size * SUB;
    let mut canvas = Array2::<f64>::from_elem((fine, fine), f64::NAN);
    let mut remaining = fine * fine;
    let (r_min, r_max) = (3.0f64, (size as f64 / 3.0).max(3.0));
    let mut disks = 0;
    while remaining > 0 && disks < 100_000 {
        disks += 1;
        // Density ∝ r^{−3} on [r_min, r_max] by inverse transform.
        let u: f64 = rng.random();
        let inv = r_min.powi(-2) - u * (r_min.powi(-2) - r_max.powi(-2));
        let radius = inv.powf(-0.5) * SUB as f64;
        let cx = rng.random_range(-radius..fine as f64 + radius);
        let cy = rng.random_range(-radius..fine as f64 + radius);
        let gray: f64 = rng.random();
        let (y0, y1) = ((cy - radius).floor().max(0.0) as usize, ((cy + radius).ceil().max(0.0) as usize).min(fine));
        let (x0, x1) = ((cx - radius).floor().max(0.0) as usize, ((cx + radius).ceil().max(0.0) as usize).min(fine));
        for i in y0..y1 {
            for j in x0..x1 {
                let (di, dj) = (i as f64 + 0.5 - cy, j as f64 + 0.5 - cx);
                if di * di + dj * dj <= radius * radius && canvas[[i, j]].is_nan() {
                    canvas[[i, j]] = gray;
                    remaining -= 1;
                }
            }
        }
    }
    let area = (SUB * SUB) as f64;
    Array2::from_shape_fn((size, size), |(i, j)| {
        let block = canvas.slice(s![i * SUB..(i + 1) * SUB, j * SUB..(j + 1) * SUB]);
        block.iter().map(|&v| if v.is_nan() { 0.5 } else { v }).sum::<f64>() / area
    })
}

/// Reads an 8- or 16-bit grayscale PGM, scaling intensities into `[0, 1]`.
pub fn read_pgm(path: &Path) -> Result<Array2<f64>> {
    let img = image::ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    let to_array = |w: u32, h: u32, px: Vec<f64>| {
        Array2::from_shape_vec((h as usize, w as usize), px).expect("decoder returns w·h pixels")
    };
    match img {
        image::DynamicImage::ImageLuma8(b) => {
            let (w, h) = b.dimensions();
            Ok(to_array(w, h, b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()))
        }
        image::DynamicImage::ImageLuma16(b) => {
            let (w, h) = b.dimensions();
            Ok(to_array(w, h, b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()))
        }
        other => Err(Error::Image(format!(
            "{}: expected a grayscale image, found {:?}",
            path.display(),
            other.color()
        ))),
    }
}

/// Writes an 8-bit binary PGM, mapping `[lo, hi]` linearly onto `[0, 255]`.
/// A constant image is written mid-gray.
pub fn write_pgm(path: &Path, image: ArrayView2<'_, f64>, range: Option<(f64, f64)>) -> Result<()> {
    let (lo, hi) = range.unwrap_or_else(|| {
        image
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    });
    let (rows, cols) = image.dim();
    let span = hi - lo;
    let bytes: Vec<u8> = image
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                128
            }
        })
        .collect();
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    PnmEncoder::new(file)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&bytes, cols as u32, rows as u32, image::ExtendedColorType::L8)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

/// Tiles square filters (given as flattened columns) into one image with a
/// one-pixel border, `per_row` tiles across. Each tile is scaled into
/// `[−1, 1]` by its own largest magnitude.
pub fn mosaic(filters: &[Array1<f64>], side: usize, per_row: usize) -> Array2<f64> {
    let per_row = per_row.max(1);
    let n_rows = filters.len().div_ceil(per_row).max(1);
    let mut out = Array2::zeros((n_rows * (side + 1) + 1, per_row * (side + 1) + 1));
    for (n, f) in filters.iter().enumerate() {
        let scale = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let (r0, c0) = ((n / per_row) * (side + 1) + 1, (n % per_row) * (side + 1) + 1);
        for i in 0..side {
            for j in 0..side {
                let v = f.get(i * side + j).copied().unwrap_or(0.0);
                out[[r0 + i, c0 + j]] = if scale > 0.0 { v / scale } else { 0.0 };
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_templates_are_rows_columns_and_diagonals() {
        let cfg = ToyConfig::default();
        let t = line_templates(&cfg);
        for o in 0..4 {
            for k in 0..10 {
                assert!(t[o][k].sum() >= 10.0, "orientation {o} line {k} too short");
                for k2 in 0..k {
                    let overlap: f64 = (&t[o][k] * &t[o][k2]).sum();
                    assert_eq!(overlap, 0.0);
                }
            }
        }
        // Orientation 0 lines are full rows, orientation 2 full columns.
        for k in 0..10 {
            assert_eq!(t[0][k].sum(), 20.0);
            assert!(t[0][k].rows().into_iter().filter(|r| r.sum() == 20.0).count() == 1);
            assert!(t[2][k].columns().into_iter().filter(|c| c.sum() == 20.0).count() == 1);
        }
        // Orientation 1 and 3 lines are diagonals of slope ±1.
        for k in 0..10 {
            let on: Vec<(usize, usize)> = t[1][k].indexed_iter().filter(|(_, &v)| v > 0.0).map(|(p, _)| p).collect();
            let d0 = on[0].0 as isize - on[0].1 as isize;
            assert!(on.iter().all(|&(i, j)| i as isize - j as isize == d0));
            let on: Vec<(usize, usize)> = t[3][k].indexed_iter().filter(|(_, &v)| v > 0.0).map(|(p, _)| p).collect();
            let s0 = on[0].0 + on[0].1;
            assert!(on.iter().all(|&(i, j)| i + j == s0));
        }
    }

    #[test]
    fn toy_patch_is_superposition_of_its_lines() {
        let cfg = ToyConfig::default();
        let t = line_templates(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let s = gen_toy_patch(&cfg, &mut rng);
            let mut expected = Array2::<f64>::zeros((20, 20));
            for (k, &on) in s.lines.iter().enumerate() {
                if on {
                    expected += &t[s.orientation][k];
                }
            }
            assert_eq!(s.patch, expected);
        }
    }

    #[test]
    fn toy_generation_is_deterministic() {
        let cfg = ToyConfig::default();
        let a = gen_toy_patch(&cfg, &mut ChaCha8Rng::seed_from_u64(77));
        let b = gen_toy_patch(&cfg, &mut ChaCha8Rng::seed_from_u64(77));
        assert_eq!(a, b);
    }

    #[test]
    fn rare_lines_give_mostly_empty_patches() {
        let cfg = ToyConfig {
            line_prob: 1e-9,
            ..ToyConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            assert_eq!(gen_toy_patch(&cfg, &mut rng).patch.sum(), 0.0);
        }
    }

    #[test]
    fn mean_line_count_matches_bernoulli_model() {
        let cfg = ToyConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let total: usize = (0..n)
            .map(|_| gen_toy_patch(&cfg, &mut rng).lines.iter().filter(|&&b| b).count())
            .sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 2.0).abs() <= 0.05, "mean {mean}");
    }

    #[test]
    fn toy_config_validation() {
        assert!(ToyConfig::default().validate().is_ok());
        assert!(ToyConfig { line_prob: 0.0, ..ToyConfig::default() }.validate().is_err());
        assert!(ToyConfig { line_prob: 1.0, ..ToyConfig::default() }.validate().is_err());
        assert!(ToyConfig { n_positions: 30, ..ToyConfig::default() }.validate().is_err());
    }

    #[test]
    fn constant_image_preprocesses_to_zero() {
        let img = Array2::from_elem((30, 25), 3.7);
        assert!(preprocess(img.view()).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mean_subtraction_annihilates_ramps_in_the_interior() {
        let img = Array2::from_shape_fn((30, 30), |(i, j)| 0.3 * i as f64 - 0.7 * j as f64 + 5.0);
        let out = subtract_local_mean(img.view());
        let r = PREPROCESS_RADIUS;
        for i in r..30 - r {
            for j in r..30 - r {
                assert!(out[[i, j]].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn local_mean_of_stage_one_output_vanishes_for_locally_linear_images() {
        // One pass leaves a quadratic image constant away from the border,
        // so a second pass is zero there.
        let img = Array2::from_shape_fn((40, 40), |(i, j)| 0.01 * (i * i) as f64 + 0.2 * j as f64);
        let once = subtract_local_mean(img.view());
        let twice = subtract_local_mean(once.view());
        let r = 2 * PREPROCESS_RADIUS;
        let range = img.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)) - img.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        for i in r..40 - r {
            for j in r..40 - r {
                assert!(twice[[i, j]].abs() < 1e-6 * range);
            }
        }
    }

    #[test]
    fn low_contrast_regions_divide_by_the_cutoff() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut img = Array2::from_shape_fn((40, 40), |_| 1.0 + 1e-7 * rng.random::<f64>());
        img[[10, 10]] = 2.0;
        let cutoff = CONTRAST_CUTOFF * global_std(img.view());
        let centred = subtract_local_mean(img.view());
        let spread = local_std(centred.view());
        let out = preprocess(img.view()).unwrap();
        let (i, j) = (30, 30);
        assert!(spread[[i, j]] < cutoff);
        assert!((out[[i, j]] - centred[[i, j]] / cutoff).abs() <= 1e-12 * out[[i, j]].abs().max(1.0));
        // Next to the impulse the local spread dominates.
        assert!(spread[[10, 11]] > cutoff);
        assert!((out[[10, 11]] - centred[[10, 11]] / spread[[10, 11]]).abs() < 1e-12);
    }

    #[test]
    fn static_sequences_repeat_the_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = Array2::from_shape_fn((40, 40), |_| rng.random::<f64>());
        let cfg = SequenceConfig {
            magnitude: (0.0, 0.0),
            ..SequenceConfig::default()
        };
        let s = extract_sequence(img.view(), &cfg, &mut rng).unwrap();
        assert_eq!(s.frames.len(), 3);
        assert!(s.frames.iter().all(|f| f == s.frames[0]));
        let single = SequenceConfig {
            n_frames: 1,
            ..SequenceConfig::default()
        };
        assert_eq!(extract_sequence(img.view(), &single, &mut rng).unwrap().frames.len(), 1);
    }

    /// Finds where `window` sits in `img` by exact match.
    fn locate(img: &Array2<f64>, window: &Patch) -> (isize, isize) {
        let w = window.nrows();
        for y in 0..=img.nrows() - w {
            for x in 0..=img.ncols() - w {
                if img.slice(s![y..y + w, x..x + w]) == window.view() {
                    return (x as isize, y as isize);
                }
            }
        }
        panic!("window not found");
    }

    #[test]
    fn per_frame_displacements_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let img = Array2::from_shape_fn((32, 32), |_| rng.random::<f64>());
        let cfg = SequenceConfig::default();
        let upper = 2.0 + 2f64.sqrt() / 2.0;
        for _ in 0..10_000 {
            let s = extract_sequence(img.view(), &cfg, &mut rng).unwrap();
            let m = (s.displacement.0.powi(2) + s.displacement.1.powi(2)).sqrt();
            assert!((1.0 - 1e-12..=2.0 + 1e-12).contains(&m));
            let origins: Vec<(isize, isize)> = s.frames.iter().map(|f| locate(&img, f)).collect();
            for w in origins.windows(2) {
                let d = (((w[1].0 - w[0].0).pow(2) + (w[1].1 - w[0].1).pow(2)) as f64).sqrt();
                assert!(d >= 1.0 && d <= upper, "step {d}");
            }
        }
    }

    #[test]
    fn small_images_are_rejected() {
        let img = Array2::zeros((22, 40));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(extract_sequence(img.view(), &SequenceConfig::default(), &mut rng).is_err());
    }

    #[test]
    fn edge_examples() {
        assert_eq!(edge_value(0.0, 0.0, 0.0, 0.3, 1.0), 0.0);
        let v = edge_value(PI / 2.0, 0.0, 0.0, 0.0, 1.0);
        assert!((v - (-PI * PI / 16.0).exp()).abs() < 1e-15);
        assert!((v - 0.539_641).abs() < 1e-6);
        // Moving along the edge leaves the value unchanged.
        let theta: f64 = 0.7;
        for s in [-3.0, 0.5, 4.0] {
            let (x, y) = (1.3 - s * theta.sin(), -0.4 + s * theta.cos());
            assert!((edge_value(x, y, 0.8, theta, 1.0) - edge_value(1.3, -0.4, 0.8, theta, 1.0)).abs() < 1e-14);
        }
        let p = edge_stimulus(1.5, 1.1, 1.0, 20).unwrap();
        assert!(p.iter().all(|v| v.abs() <= 1.0));
        assert!(edge_stimulus(0.0, 0.0, 0.0, 20).is_err());
    }

    #[test]
    fn dead_leaves_fills_every_pixel() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let img = dead_leaves(64, &mut rng);
        assert!(img.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(global_std(img.view()) > 0.05);
    }

    #[test]
    fn pgm_round_trip() {
        let dir = std::env::temp_dir().join(format!("spinv-pgm-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("x.pgm");
        let img = Array2::from_shape_fn((5, 7), |(i, j)| (i * 7 + j) as f64 / 34.0);
        write_pgm(&path, img.view(), Some((0.0, 1.0))).unwrap();
        assert!(std::fs::read(&path).unwrap().starts_with(b"P5"));
        let back = read_pgm(&path).unwrap();
        assert_eq!(back.dim(), (5, 7));
        assert!((&back - &img).iter().all(|d| d.abs() <= 0.5 / 255.0 + 1e-12));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn sixteen_bit_pgm_is_read() {
        let dir = std::env::temp_dir().join(format!("spinv-pgm16-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("y.pgm");
        let mut bytes = b"P5\n2 1\n65535\n".to_vec();
        bytes.extend_from_slice(&[0xff, 0xff, 0x00, 0x00]);
        std::fs::write(&path, bytes).unwrap();
        let img = read_pgm(&path).unwrap();
        assert_eq!(img, ndarray::array![[1.0, 0.0]]);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
