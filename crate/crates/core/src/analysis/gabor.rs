//! Least-squares Gabor fits of square filters.
//!
//! The model is
//!
//! ```text
//! G(x, y) = A · exp(−x'²/2σ_x² − y'²/2σ_y²) · cos(2πf x' + φ)
//! x' =  (x − x₀) cos θ + (y − y₀) sin θ
//! y' = −(x − x₀) sin θ + (y − y₀) cos θ
//! ```
//!
//! with `x` the column and `y` the row index. Amplitude and phase enter
//! linearly (through `cos` and `sin` coefficients) and are solved in closed
//! form for every candidate of the remaining parameters.

use std::f64::consts::PI;

use argmin::core::{CostFunction, Error as ArgminError, Executor};
use argmin::solver::neldermead::NelderMead;
use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaborFit {
    /// `(x₀, y₀)` in pixels (column, row).
    pub center: (f64, f64),
    /// Direction of the carrier's wave vector, in `[0, π)`.
    pub orientation: f64,
    /// Cycles per pixel.
    pub frequency: f64,
    /// In `(−π, π]`.
    pub phase: f64,
    /// `(σ_x, σ_y)`: across and along the stripes.
    pub envelope_sigma: (f64, f64),
    pub amplitude: f64,
    /// `‖F − G‖² / ‖F‖²`.
    pub residual: f64,
}

impl GaborFit {
    /// Renders the fitted function on a `rows × cols` grid.
    pub fn render(&self, rows: usize, cols: usize) -> Array2<f64> {
        render_gabor(rows, cols, self)
    }
}

pub fn render_gabor(rows: usize, cols: usize, g: &GaborFit) -> Array2<f64> {
    let (sin, cos) = g.orientation.sin_cos();
    let omega = 2.0 * PI * g.frequency;
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        let (dx, dy) = (j as f64 - g.center.0, i as f64 - g.center.1);
        let xr = dx * cos + dy * sin;
        let yr = -dx * sin + dy * cos;
        let env = (-xr * xr / (2.0 * g.envelope_sigma.0.powi(2)) - yr * yr / (2.0 * g.envelope_sigma.1.powi(2))).exp();
        g.amplitude * env * (omega * xr + g.phase).cos()
    })
}

/// Shape parameters searched numerically; amplitude and phase are solved for.
#[derive(Debug, Clone, Copy)]
struct Shape {
    x0: f64,
    y0: f64,
    theta: f64,
    frequency: f64,
    sigma_x: f64,
    sigma_y: f64,
}

struct Target<'a> {
    filter: ArrayView2<'a, f64>,
    energy: f64,
}

impl Target<'_> {
    /// Relative residual plus the linear coefficients `(a, b)` of
    /// `a·E cos(ωx') + b·E sin(ωx')`.
    fn solve(&self, s: &Shape) -> (f64, f64, f64) {
        let (sin, cos) = s.theta.sin_cos();
        let omega = 2.0 * PI * s.frequency;
        let (ix, iy) = (0.5 / (s.sigma_x * s.sigma_x), 0.5 / (s.sigma_y * s.sigma_y));
        let (mut cc, mut cs, mut ss, mut fc, mut fs) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for ((i, j), &f) in self.filter.indexed_iter() {
            let (dx, dy) = (j as f64 - s.x0, i as f64 - s.y0);
            let xr = dx * cos + dy * sin;
            let yr = -dx * sin + dy * cos;
            let env = (-xr * xr * ix - yr * yr * iy).exp();
            let (sn, cn) = (omega * xr).sin_cos();
            let (c, sb) = (env * cn, env * sn);
            cc += c * c;
            cs += c * sb;
            ss += sb * sb;
            fc += f * c;
            fs += f * sb;
        }
        let det = cc * ss - cs * cs;
        if !(det > 1e-12 * (cc + ss).powi(2)) {
            // Degenerate basis (e.g. zero frequency makes the sine vanish).
            if cc > 0.0 {
                let a = fc / cc;
                return (1.0 - a * fc / self.energy, a, 0.0);
            }
            return (1.0, 0.0, 0.0);
        }
        let a = (ss * fc - cs * fs) / det;
        let b = (cc * fs - cs * fc) / det;
        (1.0 - (a * fc + b * fs) / self.energy, a, b)
    }
}

impl CostFunction for Target<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, ArgminError> {
        let s = unpack(p);
        if !(s.frequency > 1e-3 && s.frequency <= 0.5) || s.sigma_x > 1e3 || s.sigma_y > 1e3 {
            return Ok(2.0);
        }
        Ok(self.solve(&s).0)
    }
}

fn pack(s: &Shape) -> Vec<f64> {
    vec![s.x0, s.y0, s.theta, s.frequency.ln(), s.sigma_x.ln(), s.sigma_y.ln()]
}

fn unpack(p: &[f64]) -> Shape {
    Shape {
        x0: p[0],
        y0: p[1],
        theta: p[2],
        frequency: p[3].exp(),
        sigma_x: p[4].exp(),
        sigma_y: p[5].exp(),
    }
}

const ORIENTATIONS: usize = 18;
const FREQUENCIES: [f64; 8] = [0.04, 0.06, 0.085, 0.11, 0.15, 0.2, 0.27, 0.36];
const SIGMAS: [f64; 3] = [1.5, 2.5, 4.0];

/// Grid search over orientation, frequency, envelope width and center,
/// refined by Nelder–Mead on all shape parameters.
pub fn fit_gabor(filter: ArrayView2<'_, f64>) -> Result<GaborFit> {
    if filter.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("filter has non-finite entries".into()));
    }
    let energy: f64 = filter.iter().map(|v| v * v).sum();
    if !(energy > 0.0) {
        return Err(Error::InvalidParameter("cannot fit a Gabor function to an all-zero filter".into()));
    }
    let target = Target { filter, energy };

    // Energy centroid as the anchor of the center grid.
    let (mut cx, mut cy) = (0.0, 0.0);
    for ((i, j), &f) in filter.indexed_iter() {
        cx += j as f64 * f * f;
        cy += i as f64 * f * f;
    }
    let (cx, cy) = (cx / energy, cy / energy);

    let mut best = (f64::INFINITY, None);
    for &(ox, oy) in &[(0.0, 0.0), (-2.0, 0.0), (2.0, 0.0), (0.0, -2.0), (0.0, 2.0)] {
        for &sigma in &SIGMAS {
            for t in 0..ORIENTATIONS {
                for &frequency in &FREQUENCIES {
                    let s = Shape {
                        x0: cx + ox,
                        y0: cy + oy,
                        theta: t as f64 * PI / ORIENTATIONS as f64,
                        frequency,
                        sigma_x: sigma,
                        sigma_y: sigma,
                    };
                    let r = target.solve(&s).0;
                    if r < best.0 {
                        best = (r, Some(s));
                    }
                }
            }
        }
    }
    let mut shape = best.1.expect("grid is nonempty");

    for round in 0..3 {
        let start = pack(&shape);
        let steps = [1.0, 1.0, 0.15, 0.2, 0.25, 0.25].map(|s| s / (1 + round) as f64);
        let mut simplex = vec![start.clone()];
        for (d, step) in steps.iter().enumerate() {
            let mut v = start.clone();
            v[d] += step;
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(1e-12)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let result = Executor::new(Target { filter, energy }, solver)
            .configure(|state| state.max_iters(800))
            .run()
            .map_err(|e| Error::InvalidParameter(format!("Gabor refinement failed: {e}")))?;
        if let Some(p) = result.state.best_param.as_ref() {
            let candidate = unpack(p);
            if target.solve(&candidate).0 <= target.solve(&shape).0 {
                shape = candidate;
            }
        }
    }

    let (residual, a, b) = target.solve(&shape);
    let amplitude = (a * a + b * b).sqrt();
    // a cos + b sin = A cos(· + φ) with A cos φ = a, A sin φ = −b.
    let mut phase = (-b).atan2(a);
    let mut theta = shape.theta.rem_euclid(2.0 * PI);
    if theta >= PI {
        // Reversing the wave vector mirrors the phase.
        theta -= PI;
        phase = -phase;
    }
    if phase <= -PI {
        phase += 2.0 * PI;
    }
    Ok(GaborFit {
        center: (shape.x0, shape.y0),
        orientation: theta.min(PI.next_down()),
        frequency: shape.frequency,
        phase,
        envelope_sigma: (shape.sigma_x, shape.sigma_y),
        amplitude,
        residual: residual.max(0.0),
    })
}

/// Smallest angular distance between two orientations modulo π.
pub fn orientation_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}
