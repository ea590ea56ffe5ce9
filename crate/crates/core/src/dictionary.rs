//! Dense dictionaries with unit-norm columns.
//!
//! Every product with a dictionary goes through [`Dictionary::apply`] or
//! [`Dictionary::apply_t`], which bump a per-thread counter so the cost of a
//! solver sweep can be measured in matrix products.

use std::cell::Cell;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

thread_local! {
    static PRODUCTS: Cell<u64> = const { Cell::new(0) };
}

/// Number of dictionary products performed on the current thread.
pub fn product_count() -> u64 {
    PRODUCTS.with(Cell::get)
}

fn bump() {
    PRODUCTS.with(|c| c.set(c.get() + 1));
}

/// Columns whose norm falls below this are treated as dead by [`Dictionary::project`].
const DEAD_COLUMN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    data: Array2<f64>,
    nonneg: bool,
}

impl Dictionary {
    /// Wraps a matrix as-is. Column norms are not touched; call
    /// [`Dictionary::project`] to enforce the learning invariants.
    pub fn new(data: Array2<f64>, nonneg: bool) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::EmptyInput("dictionary"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("dictionary has non-finite entries".into()));
        }
        if nonneg && data.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidParameter(
                "nonnegative dictionary has a negative entry".into(),
            ));
        }
        Ok(Self { data, nonneg })
    }

    /// Wraps a matrix and projects it onto the constraint set.
    pub fn normalized(data: Array2<f64>, nonneg: bool) -> Result<Self> {
        let mut d = Self::new(data.mapv(|v| if nonneg { v.max(0.0) } else { v }), nonneg)?;
        d.project();
        Ok(d)
    }

    /// Standard-normal columns scaled to unit norm; absolute values when `nonneg`.
    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, nonneg: bool, rng: &mut R) -> Result<Self> {
        let mut data = Array2::<f64>::zeros((rows, cols));
        for v in data.iter_mut() {
            let s: f64 = rng.sample(StandardNormal);
            *v = if nonneg { s.abs() } else { s };
        }
        Self::normalized(data, nonneg)
    }

    pub fn identity(n: usize, nonneg: bool) -> Self {
        Self {
            data: Array2::eye(n),
            nonneg,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn code_dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_nonneg(&self) -> bool {
        self.nonneg
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.data.column(j)
    }

    /// `D z`, where `z` may hold several codes back to back (one per frame).
    pub fn apply(&self, codes: ArrayView1<'_, f64>) -> Array1<f64> {
        let cols = self.code_dim();
        debug_assert_eq!(codes.len() % cols, 0);
        bump();
        let frames = codes.len() / cols;
        if frames == 1 {
            return self.data.dot(&codes);
        }
        let z = codes
            .to_shape((frames, cols))
            .expect("contiguous frame-major layout");
        let out = z.dot(&self.data.t());
        Array1::from_iter(out.iter().copied())
    }

    /// `Dᵀ r`, where `r` may hold several residuals back to back.
    pub fn apply_t(&self, residual: ArrayView1<'_, f64>) -> Array1<f64> {
        let rows = self.input_dim();
        debug_assert_eq!(residual.len() % rows, 0);
        bump();
        let frames = residual.len() / rows;
        if frames == 1 {
            return self.data.t().dot(&residual);
        }
        let r = residual
            .to_shape((frames, rows))
            .expect("contiguous frame-major layout");
        let out = r.dot(&self.data);
        Array1::from_iter(out.iter().copied())
    }

    /// In-place `D ← D − rate · G`, followed by [`Dictionary::project`].
    pub fn gradient_step(&mut self, gradient: &Array2<f64>, rate: f64) {
        self.data.scaled_add(-rate, gradient);
        self.project();
    }

    /// Clamps negatives (for nonnegative dictionaries) and rescales every
    /// column to unit norm. A column that collapsed to zero is reset to the
    /// uniform direction so the invariant still holds.
    pub fn project(&mut self) {
        let nonneg = self.nonneg;
        for mut col in self.data.axis_iter_mut(Axis(1)) {
            if nonneg {
                col.mapv_inplace(|v| v.max(0.0));
            }
            let norm = col.dot(&col).sqrt();
            if norm > DEAD_COLUMN {
                col.mapv_inplace(|v| v / norm);
            } else {
                let u = 1.0 / (col.len() as f64).sqrt();
                col.fill(u);
            }
        }
    }

    /// Largest deviation of a column norm from one.
    pub fn max_norm_deviation(&self) -> f64 {
        self.data
            .axis_iter(Axis(1))
            .map(|c| (c.dot(&c).sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `‖D‖₂²` by power iteration on `DᵀD`; the Lipschitz constant of
    /// `z ↦ ½‖x − Dz‖²`. Does not touch the product counter.
    pub fn spectral_norm_sq(&self) -> f64 {
        let gram = self.data.t().dot(&self.data);
        let n = gram.nrows();
        let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
        // Perturb so the start is not orthogonal to the top eigenvector of a
        // structured matrix.
        for (i, x) in v.iter_mut().enumerate() {
            *x += 1e-3 * ((i * 7919 % 97) as f64 / 97.0);
        }
        let mut lambda = 0.0;
        for _ in 0..1000 {
            let w = gram.dot(&v);
            let norm = w.dot(&w).sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let next = v.dot(&w);
            v = w / norm;
            if (next - lambda).abs() <= 1e-13 * next.abs() {
                lambda = next;
                break;
            }
            lambda = next;
        }
        let w = gram.dot(&v);
        lambda.max(v.dot(&w))
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }
}
