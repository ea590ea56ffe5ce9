//! Unit responses to the parametric edge stimulus over a grid of edge
//! offsets `b` and orientations `θ`.

use std::f64::consts::PI;

use ndarray::Array2;

use super::ACTIVATION_EPS;
use crate::datagen::{edge_stimulus, flatten};
use crate::error::{Error, Result};
use crate::learning::{infer, Model};
use crate::solver::SolverOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitKind {
    Simple,
    Invariant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseGrid {
    pub b_samples: Vec<f64>,
    pub theta_samples: Vec<f64>,
    /// Stimulus spatial frequency.
    pub k: f64,
}

impl Default for ResponseGrid {
    /// `b ∈ [−10, 10]` in 41 steps, `θ ∈ [0, π)` in 36 steps, `k = 1`.
    fn default() -> Self {
        Self::uniform((-10.0, 10.0), 41, 36, 1.0)
    }
}

impl ResponseGrid {
    /// `b_steps` evenly spaced offsets spanning `b_range` inclusive and
    /// `theta_steps` orientations `i·π/theta_steps`.
    pub fn uniform(b_range: (f64, f64), b_steps: usize, theta_steps: usize, k: f64) -> Self {
        let b_samples = match b_steps {
            0 => Vec::new(),
            1 => vec![b_range.0],
            n => (0..n)
                .map(|i| b_range.0 + (b_range.1 - b_range.0) * i as f64 / (n - 1) as f64)
                .collect(),
        };
        let theta_samples = (0..theta_steps).map(|i| i as f64 * PI / theta_steps as f64).collect();
        Self {
            b_samples,
            theta_samples,
            k,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.b_samples.is_empty() || self.theta_samples.is_empty() {
            return Err(Error::EmptyInput("response grid"));
        }
        if !(self.k > 0.0) {
            return Err(Error::InvalidParameter(format!("stimulus frequency must be positive, got {}", self.k)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap {
    pub unit_id: usize,
    pub kind: UnitKind,
    pub b_samples: Vec<f64>,
    pub theta_samples: Vec<f64>,
    /// `grid[[ib, it]]` is the response at `(b_samples[ib], theta_samples[it])`;
    /// NaN where inference failed.
    pub grid: Array2<f64>,
}

impl ResponseMap {
    /// Largest finite response with its `(b, θ)` indices.
    pub fn peak(&self) -> Option<(f64, usize, usize)> {
        let mut best: Option<(f64, usize, usize)> = None;
        for ((ib, it), &v) in self.grid.indexed_iter() {
            if v.is_finite() && best.is_none_or(|b| v > b.0) {
                best = Some((v, ib, it));
            }
        }
        best
    }

    /// Extent of `b` over which the response exceeds half its peak, at the
    /// orientation of the peak: the number of such samples times the `b`
    /// spacing. `None` for a unit that never responds.
    pub fn tuning_width(&self) -> Option<f64> {
        let (peak, _, it) = self.peak()?;
        if !(peak > ACTIVATION_EPS) {
            return None;
        }
        let n = self.b_samples.len();
        let spacing = if n > 1 {
            (self.b_samples[n - 1] - self.b_samples[0]).abs() / (n - 1) as f64
        } else {
            1.0
        };
        let count = self.grid.column(it).iter().filter(|&&v| v > 0.5 * peak).count();
        Some(count as f64 * spacing)
    }

    /// Grid points at which the unit responds.
    pub fn region(&self) -> Vec<bool> {
        self.grid.iter().map(|&v| v > ACTIVATION_EPS).collect()
    }
}

/// Response maps of the given units. One inference per grid point serves all
/// units; the stimulus is shown for all of the model's frames.
pub fn response_maps(
    model: &Model,
    kind: UnitKind,
    units: &[usize],
    grid: &ResponseGrid,
    opts: &SolverOptions,
) -> Result<Vec<ResponseMap>> {
    grid.validate()?;
    let side = (model.input_dim() as f64).sqrt().round() as usize;
    if side * side != model.input_dim() {
        return Err(Error::InvalidParameter(format!(
            "edge stimuli need square patches, model has {} pixels",
            model.input_dim()
        )));
    }
    let n_units = match kind {
        UnitKind::Simple => model.code_dim(),
        UnitKind::Invariant => model.pooling()?.code_dim(),
    };
    if let Some(&bad) = units.iter().find(|&&u| u >= n_units) {
        return Err(Error::InvalidParameter(format!("unit {bad} out of range (have {n_units})")));
    }
    let shape = (grid.b_samples.len(), grid.theta_samples.len());
    let mut grids = vec![Array2::from_elem(shape, f64::NAN); units.len()];
    for (ib, &b) in grid.b_samples.iter().enumerate() {
        for (it, &theta) in grid.theta_samples.iter().enumerate() {
            let x = flatten(&edge_stimulus(b, theta, grid.k, side)?);
            let Ok(codes) = infer(model, &vec![x; model.n_frames], opts) else {
                continue;
            };
            for (g, &unit) in grids.iter_mut().zip(units) {
                g[[ib, it]] = match kind {
                    UnitKind::Simple => codes.z[0][unit].abs(),
                    UnitKind::Invariant => codes.u.as_ref().expect("pooling present")[unit],
                };
            }
        }
    }
    Ok(grids
        .into_iter()
        .zip(units)
        .map(|(grid_values, &unit_id)| ResponseMap {
            unit_id,
            kind,
            b_samples: grid.b_samples.clone(),
            theta_samples: grid.theta_samples.clone(),
            grid: grid_values,
        })
        .collect())
}

pub fn response_map(
    model: &Model,
    kind: UnitKind,
    unit_id: usize,
    grid: &ResponseGrid,
    opts: &SolverOptions,
) -> Result<ResponseMap> {
    Ok(response_maps(model, kind, &[unit_id], grid, opts)?.remove(0))
}

/// Median of the finite values, `None` if there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Mean Jaccard index of the response regions over all pairs of maps with a
/// nonempty region; 0 when fewer than two such maps exist.
pub fn mean_pairwise_overlap(maps: &[ResponseMap]) -> f64 {
    let regions: Vec<Vec<bool>> = maps.iter().map(ResponseMap::region).filter(|r| r.iter().any(|&x| x)).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..regions.len() {
        for j in i + 1..regions.len() {
            let (mut inter, mut union) = (0usize, 0usize);
            for (&a, &b) in regions[i].iter().zip(&regions[j]) {
                inter += (a && b) as usize;
                union += (a || b) as usize;
            }
            total += inter as f64 / union as f64;
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}
