//! Attention-free weighted preconditioned gradient descent estimators.
//!
//! One step from zero on the weighted least-squares objective gives
//! `β̂ = P₂ (X P₁ ⊙ Ω)ᵀ y`, or `P Xᵀ(ω ⊙ y)` when every row of `Ω` is constant.

use crate::error::{Error, Result};
use crate::linalg::{check_len, check_square, Mat, Vector};
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    /// `n × d`, one weight per example and coordinate.
    Matrix(Mat),
    /// One weight per example.
    Samplewise(Vector),
}

impl Weights {
    pub fn to_matrix(&self, d: usize) -> Mat {
        match self {
            Weights::Matrix(m) => m.clone(),
            Weights::Samplewise(w) => Mat::from_fn(w.len(), d, |i, _| w[i]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WpgdParams {
    pub p1: Mat,
    pub p2: Mat,
    pub weights: Weights,
}

fn check_problem(xs: &Mat, y: &Vector, x: &Vector) -> Result<(usize, usize)> {
    let (n, d) = xs.shape();
    check_len(y.len(), n, "labels")?;
    check_len(x.len(), d, "query features")?;
    Ok((n, d))
}

/// `xᵀ P₂ (X P₁ ⊙ Ω)ᵀ y`.
pub fn wpgd_predict(x: &Vector, xs: &Mat, y: &Vector, params: &WpgdParams) -> Result<f64> {
    let (n, d) = check_problem(xs, y, x)?;
    check_square(&params.p1, d, "first preconditioner")?;
    check_square(&params.p2, d, "second preconditioner")?;
    let omega = params.weights.to_matrix(d);
    check_len(omega.nrows(), n, "weighting rows")?;
    check_len(omega.ncols(), d, "weighting columns")?;
    let weighted = (xs * &params.p1).component_mul(&omega);
    let beta = &params.p2 * weighted.tr_mul(y);
    Ok(x.dot(&beta))
}

/// `xᵀ P Xᵀ(ω ⊙ y)`.
pub fn wpgd_predict_samplewise(x: &Vector, xs: &Mat, y: &Vector, p: &Mat, omega: &Vector) -> Result<f64> {
    let (n, d) = check_problem(xs, y, x)?;
    check_square(p, d, "preconditioner")?;
    check_len(omega.len(), n, "weights")?;
    let weighted_labels = omega.component_mul(y);
    Ok(x.dot(&(p * xs.tr_mul(&weighted_labels))))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub p_k: Mat,
    pub p_q: Mat,
}

/// Which sign a layer's query preconditioner enters with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignConvention {
    /// Layers run as GLA with `(P_k, −P_q)`; the update subtracts the preconditioned gradient.
    Descent,
    /// Layers run as GLA with `(P_k, P_q)` exactly as given.
    Ascent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WpgdLayer {
    /// Row `i` is the estimate `β_i` carried by context token `i`.
    pub b: Mat,
    pub beta_query: Vector,
    /// `y_i − x_iᵀβ_i` for context tokens, then `−xᵀβ̂` for the query.
    pub readouts: Vector,
}

fn readouts(xs: &Mat, y: &Vector, x: &Vector, b: &Mat, beta_query: &Vector) -> Vector {
    let n = xs.nrows();
    let mut out = Vector::zeros(n + 1);
    for i in 0..n {
        out[i] = y[i] - xs.row(i).dot(&b.row(i));
    }
    out[n] = -x.dot(beta_query);
    out
}

/// Multi-step weighted preconditioned descent computed by a stack of gated layers
/// whose gates depend only on features. `omega` row `i` holds the gate product over all
/// tokens after example `i`; every entry must be nonzero.
pub fn wpgd_multilayer(
    xs: &Mat,
    y: &Vector,
    x: &Vector,
    layers: &[LayerWeights],
    omega: &Mat,
    sign: SignConvention,
) -> Result<Vec<WpgdLayer>> {
    let (n, d) = check_problem(xs, y, x)?;
    check_len(omega.nrows(), n, "weighting rows")?;
    check_len(omega.ncols(), d, "weighting columns")?;
    if let Some(pos) = omega.iter().position(|v| *v == 0.0) {
        return Err(Error::ZeroGate { row: pos % n, col: pos / n });
    }
    let s = match sign {
        SignConvention::Descent => -1.0,
        SignConvention::Ascent => 1.0,
    };
    let mut b = Mat::zeros(n, d);
    let mut beta_query = Vector::zeros(d);
    let mut out = Vec::with_capacity(layers.len());
    for layer in layers {
        check_square(&layer.p_k, d, "key preconditioner")?;
        check_square(&layer.p_q, d, "query preconditioner")?;
        let weighted = (xs * &layer.p_k).component_mul(omega);
        let residual = Vector::from_fn(n, |i, _| xs.row(i).dot(&b.row(i)) - y[i]);
        let mut grad = Vector::zeros(d);
        let mut next = b.clone();
        for i in 0..n {
            grad += weighted.row(i).transpose() * residual[i];
            let scaled = grad.component_div(&omega.row(i).transpose());
            let step = &layer.p_q * scaled * s;
            for a in 0..d {
                next[(i, a)] += step[a];
            }
        }
        let alpha = x.dot(&(&layer.p_q * layer.p_k.tr_mul(x)));
        beta_query = &beta_query * (1.0 + s * alpha) + &layer.p_q * grad * s;
        b = next;
        out.push(WpgdLayer {
            readouts: readouts(xs, y, x, &b, &beta_query),
            b: b.clone(),
            beta_query: beta_query.clone(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgdMode {
    /// Token `i` only sees examples `1..=i`.
    Causal,
    /// Plain preconditioned gradient steps on all examples.
    Full,
}

/// Multi-step preconditioned descent with `P_ℓ` given directly (descent sign convention).
pub fn causal_pgd_multilayer(
    xs: &Mat,
    y: &Vector,
    x: &Vector,
    preconditioners: &[Mat],
    mode: PgdMode,
) -> Result<Vec<WpgdLayer>> {
    let (n, d) = check_problem(xs, y, x)?;
    let mut b = Mat::zeros(n, d);
    let mut beta_query = Vector::zeros(d);
    let mut out = Vec::with_capacity(preconditioners.len());
    for p in preconditioners {
        check_square(p, d, "preconditioner")?;
        match mode {
            PgdMode::Causal => {
                let residual = Vector::from_fn(n, |i, _| xs.row(i).dot(&b.row(i)) - y[i]);
                let mut grad = Vector::zeros(d);
                for i in 0..n {
                    grad += xs.row(i).transpose() * residual[i];
                    let step = p * &grad;
                    for a in 0..d {
                        b[(i, a)] -= step[a];
                    }
                }
                let alpha = x.dot(&(p * x));
                beta_query = &beta_query * (1.0 - alpha) - p * grad;
            }
            PgdMode::Full => {
                let residual = xs * &beta_query - y;
                beta_query -= p * xs.tr_mul(&residual);
                for i in 0..n {
                    b.set_row(i, &beta_query.transpose());
                }
            }
        }
        out.push(WpgdLayer {
            readouts: readouts(xs, y, x, &b, &beta_query),
            b: b.clone(),
            beta_query: beta_query.clone(),
        });
    }
    Ok(out)
}
