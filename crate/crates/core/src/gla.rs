//! Gated linear attention recurrence.
//!
//! For tokens `z_1 … z_N` (rows of `Z`) with `q_i = W_qᵀz_i`, `k_i = W_kᵀz_i`, `v_i = W_vᵀz_i`:
//!
//! ```text
//! S_0 = 0,   S_i = G_i ⊙ S_{i-1} + v_i k_iᵀ,   o_i = S_i q_i
//! ```
//!
//! With every gate equal to one this is causal linear attention.

use crate::error::{Error, Result};
use crate::linalg::{check_len, check_square, Mat, Vector};
use alloc::vec::Vec;

/// Gate nonlinearity, a monotone map into `[0, 1]`.
#[derive(Debug, Clone, Copy)]
pub enum Activation {
    Logistic,
    /// `clamp(z, 0, 1)`; saturates at finite inputs, which lets gates hit exactly 0 and 1.
    HardClip,
    Custom(fn(f64) -> f64),
}

impl Activation {
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Logistic => logistic(z),
            Activation::HardClip => z.clamp(0.0, 1.0),
            Activation::Custom(f) => f(z),
        }
    }
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GateKind {
    AllOnes,
    /// `G_i = φ(w_gᵀ z_i) · 1 1ᵀ`.
    Scalar(Vector),
    /// `G_i = φ(W_g z_i) 1ᵀ`: row `a` of the gate is the constant `φ((W_g z_i)_a)`.
    Vector(Mat),
    /// One gate matrix per token, used as given.
    Explicit(Vec<Mat>),
}

#[derive(Debug, Clone)]
pub struct GatingSpec {
    pub kind: GateKind,
    pub activation: Activation,
}

impl Default for GatingSpec {
    fn default() -> Self {
        Self::all_ones()
    }
}

impl GatingSpec {
    pub fn all_ones() -> Self {
        Self { kind: GateKind::AllOnes, activation: Activation::Logistic }
    }

    pub fn scalar(w: Vector) -> Self {
        Self { kind: GateKind::Scalar(w), activation: Activation::Logistic }
    }

    pub fn vector(w: Mat) -> Self {
        Self { kind: GateKind::Vector(w), activation: Activation::Logistic }
    }

    pub fn explicit(gates: Vec<Mat>) -> Self {
        Self { kind: GateKind::Explicit(gates), activation: Activation::Logistic }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    /// Gate matrices for every token of `z`.
    pub fn gates(&self, z: &Mat) -> Result<Vec<Mat>> {
        let (tokens, m) = z.shape();
        match &self.kind {
            GateKind::AllOnes => Ok((0..tokens).map(|_| Mat::from_element(m, m, 1.0)).collect()),
            GateKind::Scalar(w) => {
                check_len(w.len(), m, "scalar gate weights")?;
                Ok((0..tokens)
                    .map(|i| {
                        let a: f64 = z.row(i).iter().zip(w.iter()).map(|(a, b)| a * b).sum();
                        Mat::from_element(m, m, self.activation.apply(a))
                    })
                    .collect())
            }
            GateKind::Vector(w) => {
                check_square(w, m, "vector gate weights")?;
                Ok((0..tokens)
                    .map(|i| {
                        let pre = w * z.row(i).transpose();
                        Mat::from_fn(m, m, |a, _| self.activation.apply(pre[a]))
                    })
                    .collect())
            }
            GateKind::Explicit(gs) => {
                check_len(gs.len(), tokens, "explicit gate count")?;
                for g in gs {
                    check_square(g, m, "explicit gate")?;
                }
                Ok(gs.clone())
            }
        }
    }
}

/// Weight constructions under which GLA computes a weighted preconditioned gradient step.
#[derive(Debug, Clone, PartialEq)]
pub enum Construction {
    /// Width `d + 1`; keys and queries read features only, the value copies the label.
    Restricted { p_k: Mat, p_q: Mat },
    /// As `Restricted`, zero-padded by `p` contextual coordinates.
    Delimiter { p_k: Mat, p_q: Mat, p: usize },
    /// Width `d + 1`; the value is `y_i u` and the prediction is read through a head.
    ValueVector { p_k: Mat, p_q: Mat, u: Vector },
    /// `ValueVector` zero-padded by `p` contextual coordinates.
    DelimiterValueVector { p_k: Mat, p_q: Mat, p: usize, u: Vector },
}

impl Construction {
    pub fn p_k(&self) -> &Mat {
        match self {
            Construction::Restricted { p_k, .. }
            | Construction::Delimiter { p_k, .. }
            | Construction::ValueVector { p_k, .. }
            | Construction::DelimiterValueVector { p_k, .. } => p_k,
        }
    }

    pub fn p_q(&self) -> &Mat {
        match self {
            Construction::Restricted { p_q, .. }
            | Construction::Delimiter { p_q, .. }
            | Construction::ValueVector { p_q, .. }
            | Construction::DelimiterValueVector { p_q, .. } => p_q,
        }
    }

    pub fn d(&self) -> usize {
        self.p_k().nrows()
    }

    pub fn p(&self) -> usize {
        match self {
            Construction::Restricted { .. } | Construction::ValueVector { .. } => 0,
            Construction::Delimiter { p, .. } | Construction::DelimiterValueVector { p, .. } => *p,
        }
    }

    pub fn width(&self) -> usize {
        self.d() + 1 + self.p()
    }

    /// Value direction `u`, or `None` when the value is the label slot itself.
    pub fn value_vector(&self) -> Option<&Vector> {
        match self {
            Construction::ValueVector { u, .. } | Construction::DelimiterValueVector { u, .. } => Some(u),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AttentionModel {
    pub w_k: Mat,
    pub w_q: Mat,
    pub w_v: Mat,
    pub gating: GatingSpec,
    pub head: Option<Vector>,
    pub construction: Option<Construction>,
}

impl AttentionModel {
    pub fn width(&self) -> usize {
        self.w_k.nrows()
    }

    pub fn with_gating(mut self, gating: GatingSpec) -> Self {
        self.gating = gating;
        self
    }

    pub fn with_head(mut self, head: Vector) -> Self {
        self.head = Some(head);
        self
    }

    fn validate(&self) -> Result<usize> {
        let m = self.w_k.nrows();
        check_square(&self.w_k, m, "key weights")?;
        check_square(&self.w_q, m, "query weights")?;
        check_square(&self.w_v, m, "value weights")?;
        if let Some(h) = &self.head {
            check_len(h.len(), m, "prediction head")?;
        }
        Ok(m)
    }
}

pub fn build_construction(c: Construction) -> Result<AttentionModel> {
    let d = c.d();
    check_square(c.p_k(), d, "key preconditioner")?;
    check_square(c.p_q(), d, "query preconditioner")?;
    let m = c.width();
    let mut w_k = Mat::zeros(m, m);
    let mut w_q = Mat::zeros(m, m);
    w_k.view_mut((0, 0), (d, d)).copy_from(c.p_k());
    w_q.view_mut((0, 0), (d, d)).copy_from(c.p_q());
    let mut w_v = Mat::zeros(m, m);
    match c.value_vector() {
        None => w_v[(d, d)] = 1.0,
        Some(u) => {
            check_len(u.len(), m, "value vector")?;
            // v_i = W_vᵀ z_i = y_i u
            for a in 0..m {
                w_v[(d, a)] = u[a];
            }
        }
    }
    Ok(AttentionModel { w_k, w_q, w_v, gating: GatingSpec::all_ones(), head: None, construction: Some(c) })
}

#[derive(Debug, Clone)]
pub struct GlaTrace {
    pub states: Vec<Mat>,
    pub outputs: Vec<Vector>,
    pub gates: Vec<Mat>,
}

pub fn gla_forward(z: &Mat, model: &AttentionModel) -> Result<GlaTrace> {
    let m = model.validate()?;
    check_len(z.ncols(), m, "token width")?;
    let gates = model.gating.gates(z)?;
    let mut state = Mat::zeros(m, m);
    let mut states = Vec::with_capacity(z.nrows());
    let mut outputs = Vec::with_capacity(z.nrows());
    for (i, g) in gates.iter().enumerate() {
        let zi = z.row(i).transpose();
        let q = model.w_q.tr_mul(&zi);
        let k = model.w_k.tr_mul(&zi);
        let v = model.w_v.tr_mul(&zi);
        state.component_mul_assign(g);
        state += &v * k.transpose();
        outputs.push(&state * q);
        states.push(state.clone());
    }
    Ok(GlaTrace { states, outputs, gates })
}

fn readout(model: &AttentionModel, output: &Vector) -> Result<f64> {
    let c = model.construction.as_ref().ok_or(Error::NoConstruction)?;
    match c.value_vector() {
        None => Ok(output[c.d()]),
        Some(_) => {
            let h = model.head.as_ref().ok_or(Error::MissingHead)?;
            Ok(output.dot(h))
        }
    }
}

/// Scalar prediction at the last token of `z`.
pub fn gla_predict(z: &Mat, model: &AttentionModel) -> Result<f64> {
    if model.construction.as_ref().is_some_and(|c| c.value_vector().is_some()) && model.head.is_none() {
        return Err(Error::MissingHead);
    }
    let trace = gla_forward(z, model)?;
    let last = trace.outputs.last().ok_or(Error::Empty("prompt"))?;
    readout(model, last)
}

/// Per-example weighting induced by the gates.
#[derive(Debug, Clone, PartialEq)]
pub struct Weighting {
    /// `n × d`; row `j` weights the features of the `j`-th data token.
    pub matrix: Mat,
    /// Present when every row of `matrix` is constant.
    pub samplewise: Option<Vector>,
}

/// Weighting of the data tokens at `data_rows` implied by `gates` (one per token, last is the query).
///
/// Row `j` is the product of the relevant gate rows over all later tokens, query included.
/// For the value-vector constructions rows of the gate are combined through `u` and `head`.
pub fn induced_weighting(
    gates: &[Mat],
    construction: &Construction,
    head: Option<&Vector>,
    data_rows: &[usize],
) -> Result<Weighting> {
    let d = construction.d();
    let m = construction.width();
    for g in gates {
        check_square(g, m, "gate")?;
    }
    if gates.is_empty() {
        return Err(Error::Empty("gates"));
    }
    let tokens = gates.len();
    // coefficient of gate row a in the readout
    let coeffs: Vec<(usize, f64)> = match construction.value_vector() {
        None => alloc::vec![(d, 1.0)],
        Some(u) => {
            let h = head.ok_or(Error::MissingHead)?;
            check_len(h.len(), m, "prediction head")?;
            (0..m).map(|a| (a, h[a] * u[a])).filter(|(_, c)| *c != 0.0).collect()
        }
    };
    // suffix[j] = product of gate rows over tokens j+1..tokens-1
    let mut suffix = alloc::vec![Mat::from_element(coeffs.len(), d, 1.0); tokens];
    for j in (0..tokens - 1).rev() {
        let next = &gates[j + 1];
        let mut s = suffix[j + 1].clone();
        for (r, (a, _)) in coeffs.iter().enumerate() {
            for b in 0..d {
                s[(r, b)] *= next[(*a, b)];
            }
        }
        suffix[j] = s;
    }
    let mut matrix = Mat::zeros(data_rows.len(), d);
    for (row, &j) in data_rows.iter().enumerate() {
        if j >= tokens {
            return Err(Error::Dimension { what: "data row index", expected: tokens, found: j });
        }
        for b in 0..d {
            matrix[(row, b)] = coeffs.iter().enumerate().map(|(r, (_, c))| c * suffix[j][(r, b)]).sum();
        }
    }
    let samplewise = (0..matrix.nrows())
        .all(|i| (1..d).all(|b| matrix[(i, b)] == matrix[(i, 0)]))
        .then(|| matrix.column(0).into_owned());
    Ok(Weighting { matrix, samplewise })
}

#[derive(Debug, Clone)]
pub struct MultiLayerTrace {
    /// `readouts[ℓ][i]`: label slot of token `i` after layer `ℓ`.
    pub readouts: Vec<Vector>,
    pub tokens: Vec<Mat>,
}

/// Stack of GLA layers with residual connections, `Z_{ℓ+1} = Z_ℓ + GLA_ℓ(Z_ℓ)`.
pub fn gla_multilayer_forward(z: &Mat, layers: &[AttentionModel], label_col: usize) -> Result<MultiLayerTrace> {
    let mut current = z.clone();
    check_len(label_col.min(z.ncols()), label_col, "label column")?;
    let mut readouts = Vec::with_capacity(layers.len());
    let mut tokens = Vec::with_capacity(layers.len() + 1);
    tokens.push(current.clone());
    for layer in layers {
        let trace = gla_forward(&current, layer)?;
        for (i, o) in trace.outputs.iter().enumerate() {
            for a in 0..current.ncols() {
                current[(i, a)] += o[a];
            }
        }
        readouts.push(current.column(label_col).into_owned());
        tokens.push(current.clone());
    }
    Ok(MultiLayerTrace { readouts, tokens })
}
