//! Small dense helpers on top of nalgebra.

use crate::error::{Error, Result};
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn is_symmetric(m: &Mat, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let scale = 1.0f64.max(m[(i, j)].abs()).max(m[(j, i)].abs());
            if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Eigenpairs of a symmetric matrix, eigenvalues sorted in descending order.
pub struct SymEigen {
    pub values: Vector,
    pub vectors: Mat,
}

impl SymEigen {
    pub fn new(m: &Mat, what: &'static str) -> Result<Self> {
        if !is_symmetric(m, 1e-10) {
            return Err(Error::NotSymmetric { what });
        }
        if m.nrows() == 0 {
            return Ok(Self { values: Vector::zeros(0), vectors: Mat::zeros(0, 0) });
        }
        let sym = (m + m.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::Eigen(what));
        }
        let n = m.nrows();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = Mat::zeros(n, n);
        for (col, &i) in order.iter().enumerate() {
            vectors.set_column(col, &eig.eigenvectors.column(i));
        }
        Ok(Self { values, vectors })
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `V f(Λ) Vᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        let scaled =
            Mat::from_fn(self.vectors.nrows(), self.vectors.ncols(), |i, j| self.vectors[(i, j)] * f(self.values[j]));
        scaled * self.vectors.transpose()
    }
}

/// `tr(A B)` without forming the product.
pub fn trace_of_product(a: &Mat, b: &Mat) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn identity(d: usize) -> Mat {
    Mat::identity(d, d)
}

pub fn is_identity(m: &Mat) -> bool {
    m.is_square() && (0..m.nrows()).all(|i| (0..m.ncols()).all(|j| m[(i, j)] == if i == j { 1.0 } else { 0.0 }))
}

pub fn check_square(m: &Mat, n: usize, what: &'static str) -> Result<()> {
    if m.nrows() != n {
        return Err(Error::Dimension { what, expected: n, found: m.nrows() });
    }
    if m.ncols() != n {
        return Err(Error::Dimension { what, expected: n, found: m.ncols() });
    }
    Ok(())
}

pub fn check_len(len: usize, expected: usize, what: &'static str) -> Result<()> {
    if len != expected {
        return Err(Error::Dimension { what, expected, found: len });
    }
    Ok(())
}
