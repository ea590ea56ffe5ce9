//! Inspection of trained models and solver runs: invariant-unit groupings,
//! Gabor fits, edge-response maps, toy orientation purity and convergence
//! rate checks.

mod gabor;
mod response;

use ndarray::{Array1, ArrayView1};
use rand::Rng;

use crate::datagen::{flatten, gen_toy_patch, line_templates, ToyConfig};
use crate::error::{Error, Result};
use crate::learning::{infer, Model};
use crate::solver::{SolverOptions, SolverTrace};

pub use gabor::{fit_gabor, orientation_distance, render_gabor, GaborFit};
pub use response::{
    mean_pairwise_overlap, median, response_map, response_maps, ResponseGrid, ResponseMap, UnitKind,
};

/// Simple units feeding each invariant unit, strongest first.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupingReport {
    /// `groups[j]` lists `(simple unit, weight)` for invariant unit `j`.
    pub groups: Vec<Vec<(usize, f64)>>,
    /// Set when the requested `top_k` exceeded the number of simple units.
    pub clamped: bool,
}

/// For each invariant unit `j`, the `top_k` simple units by pooling weight,
/// ties broken by ascending index.
pub fn grouping_report(model: &Model, top_k: usize) -> Result<GroupingReport> {
    let a = model.pooling()?.matrix();
    let clamped = top_k > a.nrows();
    let k = top_k.min(a.nrows());
    let groups = a
        .columns()
        .into_iter()
        .map(|col| {
            let mut ranked: Vec<(usize, f64)> = col.iter().copied().enumerate().collect();
            ranked.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
            ranked.truncate(k);
            ranked
        })
        .collect();
    Ok(GroupingReport { groups, clamped })
}

/// Line orientation each simple unit is most aligned with, and the absolute
/// cosine similarity to the best matching line template.
pub fn simple_unit_orientations(model: &Model, cfg: &ToyConfig) -> Result<Vec<(usize, f64)>> {
    cfg.validate()?;
    if model.input_dim() != cfg.pixels() {
        return Err(Error::DimensionMismatch {
            context: "toy patch pixels",
            expected: cfg.pixels(),
            found: model.input_dim(),
        });
    }
    let templates: Vec<Vec<Array1<f64>>> = line_templates(cfg)
        .iter()
        .map(|row| {
            row.iter()
                .map(|t| {
                    let v = flatten(t);
                    let n = v.dot(&v).sqrt();
                    v / n
                })
                .collect()
        })
        .collect();
    Ok((0..model.code_dim())
        .map(|i| {
            let col = model.w.column(i);
            let mut best = (0, f64::NEG_INFINITY);
            for (o, row) in templates.iter().enumerate() {
                for t in row {
                    let c = col.dot(t).abs();
                    if c > best.1 {
                        best = (o, c);
                    }
                }
            }
            best
        })
        .collect())
}

/// Activation threshold for counting an invariant unit as responding.
pub const ACTIVATION_EPS: f64 = 1e-6;
/// An invariant unit is active when it responds to more than this share of patches.
pub const ACTIVE_FREQUENCY: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct UnitPurity {
    pub unit: usize,
    /// Share of evaluation patches on which the unit responded.
    pub frequency: f64,
    /// Orientation carrying most of the unit's activation mass.
    pub orientation: usize,
    /// That orientation's share of the activation mass, in `[0, 1]`.
    pub purity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PurityReport {
    /// Active units only, in unit order.
    pub active: Vec<UnitPurity>,
    /// Activation frequency of every invariant unit.
    pub frequencies: Vec<f64>,
}

impl PurityReport {
    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    /// Exactly `n_groups` active units, each at least `min_purity` pure.
    pub fn passes(&self, n_groups: usize, min_purity: f64) -> bool {
        self.n_active() == n_groups && self.active.iter().all(|u| u.purity >= min_purity)
    }
}

/// Scores invariant units against the orientation labels of `n_eval` fresh
/// toy patches.
pub fn orientation_purity<R: Rng + ?Sized>(
    model: &Model,
    cfg: &ToyConfig,
    n_eval: usize,
    opts: &SolverOptions,
    rng: &mut R,
) -> Result<PurityReport> {
    let inv_dim = model.pooling()?.code_dim();
    cfg.validate()?;
    if n_eval == 0 {
        return Err(Error::EmptyInput("evaluation patches"));
    }
    let mut hits = vec![0usize; inv_dim];
    let mut mass = vec![vec![0.0; cfg.n_orientations]; inv_dim];
    for index in 0..n_eval {
        let sample = gen_toy_patch(cfg, rng);
        let frames = vec![flatten(&sample.patch); model.n_frames];
        let codes = infer(model, &frames, opts).map_err(|e| Error::Sample {
            index,
            source: Box::new(e),
        })?;
        let u = codes.u.expect("pooling present");
        for (j, &v) in u.iter().enumerate() {
            if v > ACTIVATION_EPS {
                hits[j] += 1;
                mass[j][sample.orientation] += v;
            }
        }
    }
    let frequencies: Vec<f64> = hits.iter().map(|&h| h as f64 / n_eval as f64).collect();
    let active = (0..inv_dim)
        .filter(|&j| frequencies[j] > ACTIVE_FREQUENCY)
        .map(|j| {
            let total: f64 = mass[j].iter().sum();
            let (orientation, best) = mass[j]
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (o, m)| if m > acc.1 { (o, m) } else { acc });
            UnitPurity {
                unit: j,
                frequency: frequencies[j],
                orientation,
                purity: best / total,
            }
        })
        .collect();
    Ok(PurityReport { active, frequencies })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    /// `E_k − E* ≤ L d / (2k)`.
    Ista,
    /// `E_k − E* ≤ 2 L d / (k + 1)²`.
    Fista,
}

impl RateKind {
    /// Bound after `k ≥ 1` iterations, with `d = ‖z₀ − z*‖²`.
    pub fn bound(self, k: usize, lipschitz: f64, dist_sq: f64) -> f64 {
        let k = k as f64;
        match self {
            RateKind::Ista => lipschitz * dist_sq / (2.0 * k),
            RateKind::Fista => 2.0 * lipschitz * dist_sq / ((k + 1.0) * (k + 1.0)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateCheck {
    pub holds: bool,
    /// Largest `(E_k − E*) / bound(k)` over the trace.
    pub worst_ratio: f64,
    /// Iteration attaining `worst_ratio` (0 when every gap is zero).
    pub worst_k: usize,
}

/// Absolute slack on the gap, covering rounding in the reference energy.
fn rate_slack(e_star: f64) -> f64 {
    1e-12 * e_star.abs().max(1.0)
}

/// Checks every iterate of `trace` against the rate bound for `kind`.
///
/// Gaps within `1e-12 · max(|E*|, 1)` of zero count as zero, so a converged
/// trace has ratio 0 even when the bound itself is 0.
pub fn verify_rate(trace: &SolverTrace, e_star: f64, lipschitz: f64, dist_sq: f64, kind: RateKind) -> Result<RateCheck> {
    if !(lipschitz > 0.0) || !(dist_sq >= 0.0) || !e_star.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "rate check needs L > 0, d ≥ 0 and finite E*, got L = {lipschitz}, d = {dist_sq}, E* = {e_star}"
        )));
    }
    let slack = rate_slack(e_star);
    let min = trace.energies.iter().copied().fold(f64::INFINITY, f64::min);
    if e_star > min + slack {
        return Err(Error::InvalidParameter(format!(
            "reference energy {e_star} exceeds the trace minimum {min}"
        )));
    }
    let mut check = RateCheck {
        holds: true,
        worst_ratio: 0.0,
        worst_k: 0,
    };
    for (i, &e) in trace.energies.iter().enumerate() {
        let k = i + 1;
        let gap = e - e_star;
        let gap = if gap <= slack { 0.0 } else { gap };
        let bound = kind.bound(k, lipschitz, dist_sq);
        let ratio = if gap == 0.0 { 0.0 } else if bound > 0.0 { gap / bound } else { f64::INFINITY };
        if ratio > 1.0 {
            check.holds = false;
        }
        if ratio > check.worst_ratio {
            check.worst_ratio = ratio;
            check.worst_k = k;
        }
    }
    Ok(check)
}

/// `‖a − b‖²`.
pub fn dist_sq(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests;
