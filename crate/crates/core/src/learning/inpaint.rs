use ndarray::Array1;

use super::{Model, ModelKind};
use crate::energy::{SparseCodingProblem, UnifiedProblem};
use crate::error::{check_dim, Error, Result};
use crate::solver::{solve_hierarchical, CodeState, SolverOptions};

/// Reconstructs `x` from the pixels where `observed` is true by minimizing
/// the model energy with the reconstruction term restricted to those pixels.
/// Returns `Wz` over all pixels. Split models use the sparse coding energy;
/// unified models solve jointly for `z` and `u` on a single frame.
pub fn inpaint(model: &Model, x: &Array1<f64>, observed: &[bool], opts: &SolverOptions) -> Result<Array1<f64>> {
    check_dim("in-painting input", model.input_dim(), x.len())?;
    check_dim("in-painting mask", x.len(), observed.len())?;
    if !observed.iter().any(|&o| o) {
        return Err(Error::EmptyInput("observed pixels"));
    }
    let mask = Array1::from_iter(observed.iter().map(|&o| if o { 1.0 } else { 0.0 }));
    // Hidden pixels carry no information; zero them so nothing leaks.
    let visible = x * &mask;
    let h = match model.kind {
        ModelKind::SplitLayer1 | ModelKind::SplitLayer2 => {
            SparseCodingProblem::new(model.w.clone(), visible, model.alpha)?.to_hierarchical_masked(Some(mask))?
        }
        ModelKind::Unified => UnifiedProblem::new(
            model.w.clone(),
            model.pooling()?.clone(),
            vec![visible],
            model.alpha,
            model.beta,
        )?
        .to_hierarchical_masked(Some(mask))?,
    };
    let (state, _) = solve_hierarchical(&h, CodeState::zeros(&h, opts.l0), opts)?;
    Ok(model.w.matrix().dot(&state.z[0]))
}

/// Root-mean-square error of the in-painted patch on the hidden pixels, or
/// on all pixels when nothing is hidden.
pub fn inpaint_rms(model: &Model, x: &Array1<f64>, observed: &[bool], opts: &SolverOptions) -> Result<f64> {
    let recon = inpaint(model, x, observed, opts)?;
    let hidden: Vec<usize> = (0..x.len()).filter(|&i| !observed[i]).collect();
    let (sum, n) = if hidden.is_empty() {
        (x.iter().zip(&recon).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), x.len())
    } else {
        (hidden.iter().map(|&i| (x[i] - recon[i]).powi(2)).sum::<f64>(), hidden.len())
    };
    Ok((sum / n as f64).sqrt())
}
