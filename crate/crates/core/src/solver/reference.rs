//! Reference minimizers used to measure the convergence of the proximal
//! solvers. They share no code with the proximal-gradient path.

use ndarray::Array1;

use crate::energy::SparseCodingProblem;

/// Cyclic coordinate descent for `½‖x − Wz‖² + α‖z‖₁`, iterated until the
/// largest coordinate change drops below `tol` or `max_sweeps` is reached.
pub fn lasso_coordinate_descent(p: &SparseCodingProblem, tol: f64, max_sweeps: usize) -> Array1<f64> {
    let w = p.dict.matrix();
    let (rows, cols) = w.dim();
    let norms: Vec<f64> = (0..cols).map(|j| w.column(j).dot(&w.column(j))).collect();
    let mut z = Array1::<f64>::zeros(cols);
    let mut residual = p.input.clone();
    for _ in 0..max_sweeps {
        let mut largest: f64 = 0.0;
        for j in 0..cols {
            if norms[j] == 0.0 {
                continue;
            }
            let col = w.column(j);
            let rho = col.dot(&residual) + norms[j] * z[j];
            let updated = if rho > p.alpha {
                (rho - p.alpha) / norms[j]
            } else if rho < -p.alpha {
                (rho + p.alpha) / norms[j]
            } else {
                0.0
            };
            let delta = updated - z[j];
            if delta != 0.0 {
                for i in 0..rows {
                    residual[i] -= delta * col[i];
                }
                z[j] = updated;
                largest = largest.max(delta.abs());
            }
        }
        if largest < tol {
            break;
        }
    }
    z
}
