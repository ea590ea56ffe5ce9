//! Numerical certificates: the sufficient-decrease inequality behind the
//! accelerated rate, and the subgradient optimality condition of a layer.

use ndarray::Array1;

use super::hierarchical::PreparedStep;
use crate::energy::{eval_hierarchical_energy, HierarchicalEnergy, SignConstraint};
use crate::error::{Error, Result};

/// Relative rounding allowance when deciding whether the inequality holds.
const CHECK_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentCheck {
    pub holds: bool,
    /// `E(ẑ) − E(P_L(z)) − [(L/2)|P_L(z) − z|² + L⟨z − ẑ, P_L(z) − z⟩]`.
    pub slack: f64,
}

/// Evaluates
///
/// ```text
/// E(ẑ) − E(P_L(z)) ≥ (L/2)|P_L(z) − z|² + L⟨z − ẑ, P_L(z) − z⟩
/// ```
///
/// where `P_L` applies the layer steps `a = 0..n` in order with one shared `L`.
/// The caller is responsible for `L` being admissible on every layer and for
/// every `g_a e_{a+1}` being convex; otherwise a violation is informative only.
pub fn check_descent_lemma(
    h: &HierarchicalEnergy,
    z: &[Array1<f64>],
    z_hat: &[Array1<f64>],
    lipschitz: f64,
) -> Result<DescentCheck> {
    h.check_codes(z)?;
    h.check_codes(z_hat)?;
    if !(lipschitz > 0.0) {
        return Err(Error::InvalidParameter(format!("L must be positive, got {lipschitz}")));
    }
    let mut stepped = z.to_vec();
    let mut images = h.images(&stepped);
    for a in 0..h.len() {
        let prepared = PreparedStep::new(h, &stepped, &images, a);
        stepped[a] = prepared.prox(stepped[a].view(), lipschitz);
        images[a] = h.layers()[a].image(stepped[a].view());
    }
    let e_hat = eval_hierarchical_energy(h, z_hat)?;
    let e_step = h.energy_from_images(&stepped, &images);

    let mut sq = 0.0;
    let mut inner = 0.0;
    for ((p, z0), zh) in stepped.iter().zip(z).zip(z_hat) {
        let d = p - z0;
        sq += d.dot(&d);
        inner += (z0 - zh).dot(&d);
    }
    let rhs = 0.5 * lipschitz * sq + lipschitz * inner;
    let slack = e_hat - e_step - rhs;
    let scale = e_hat.abs() + e_step.abs() + rhs.abs() + 1.0;
    Ok(DescentCheck {
        holds: slack >= -CHECK_SLACK * scale,
        slack,
    })
}

/// Whether layer `a` of `z` admits a subgradient `γ ∈ ∂|z_a|` with
/// `g_{a−1}∇e_a(z_a) + e_{a+1}(z_{a+1})γ = 0` up to `tol` (the fixed point of
/// the layer step). Nonnegative layers use the subdifferential of
/// `|u| + ι_{u ≥ 0}`.
pub fn check_stationarity(h: &HierarchicalEnergy, z: &[Array1<f64>], a: usize, tol: f64) -> Result<bool> {
    let layer = h.layer(a)?;
    h.check_codes(z)?;
    let images = h.images(z);
    let prepared = PreparedStep::new(h, z, &images, a);
    let grad = prepared.gradient();
    let tau = prepared.thresholds();
    let mut worst: f64 = 0.0;
    for j in 0..layer.dim {
        let (v, g, t) = (z[a][j], grad[j], tau[j]);
        let residual = match layer.sign {
            SignConstraint::NonNegative if v < 0.0 => return Ok(false),
            _ if v != 0.0 => (g + t * v.signum()).abs(),
            SignConstraint::Free => (g.abs() - t).max(0.0),
            SignConstraint::NonNegative => (-g - t).max(0.0),
        };
        worst = worst.max(residual);
    }
    Ok(worst <= tol)
}
