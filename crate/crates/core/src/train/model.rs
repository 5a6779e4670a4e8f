//! Trainable attention models in construction coordinates, with hand-written adjoints.
//!
//! Every variant predicts from the key/query preconditioners `P_k`, `P_q` acting on the
//! features. Gated variants add gate weights over the full token `(x, y, c)`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;
use core::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use super::sampler::Episode;
use crate::data::ContextVectors;
use crate::error::{Error, Result};
use crate::gla::logistic;
use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Plain linear attention, all gates one.
    LinAtt,
    /// One scalar gate per token, prompts with delimiters.
    GlaScalar,
    /// Scalar gating on prompts without delimiter tokens.
    GlaScalarNoDelim,
    /// One gate per state row, with value vector `u` and readout `h`.
    GlaVector,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::LinAtt, Variant::GlaScalar, Variant::GlaScalarNoDelim, Variant::GlaVector];

    pub fn gated(self) -> bool {
        self != Variant::LinAtt
    }

    pub fn delimiters(self) -> bool {
        matches!(self, Variant::GlaScalar | Variant::GlaVector)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::LinAtt => "linatt",
            Variant::GlaScalar => "gla-scalar",
            Variant::GlaScalarNoDelim => "gla-wo",
            Variant::GlaVector => "gla-vector",
        }
    }

    pub fn tag(self) -> u32 {
        match self {
            Variant::LinAtt => 0,
            Variant::GlaScalar => 1,
            Variant::GlaScalarNoDelim => 2,
            Variant::GlaVector => 3,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.tag() == tag)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "linatt" | "lin-att" => Ok(Variant::LinAtt),
            "gla-scalar" | "glascalar" | "scalar" => Ok(Variant::GlaScalar),
            "gla-wo" | "gla-scalar-nodelim" | "glascalarnodelim" | "nodelim" => Ok(Variant::GlaScalarNoDelim),
            "gla-vector" | "glavector" | "vector" => Ok(Variant::GlaVector),
            _ => Err(Error::Config(alloc::format!("unknown variant {s:?}"))),
        }
    }
}

/// Parameter layout of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub variant: Variant,
    pub d: usize,
    /// Contextual dimension; ignored by [`Variant::LinAtt`].
    pub p: usize,
    pub layers: usize,
}

impl Shape {
    pub fn new(variant: Variant, d: usize, p: usize, layers: usize) -> Result<Self> {
        if d == 0 || layers == 0 {
            return Err(Error::Config("feature dimension and layer count must be positive".into()));
        }
        if variant == Variant::GlaVector && layers != 1 {
            return Err(Error::Unsupported("vector gating is trained with a single layer"));
        }
        if variant.gated() && p == 0 {
            return Err(Error::Config("gated variants need a contextual dimension p ≥ 1".into()));
        }
        Ok(Self { variant, d, p, layers })
    }

    pub fn context_dim(&self) -> usize {
        if self.variant.gated() {
            self.p
        } else {
            0
        }
    }

    /// Token width `d + 1 + p`.
    pub fn width(&self) -> usize {
        self.d + 1 + self.context_dim()
    }

    fn layer_len(&self) -> usize {
        let (dd, m) = (self.d * self.d, self.width());
        match self.variant {
            Variant::LinAtt => 2 * dd,
            Variant::GlaScalar | Variant::GlaScalarNoDelim => 2 * dd + m,
            Variant::GlaVector => 2 * dd + m * m + 2 * m,
        }
    }

    pub fn len(&self) -> usize {
        self.layers * self.layer_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn p_k_range(&self, layer: usize) -> Range<usize> {
        let start = layer * self.layer_len();
        start..start + self.d * self.d
    }

    pub fn p_q_range(&self, layer: usize) -> Range<usize> {
        let start = self.p_k_range(layer).end;
        start..start + self.d * self.d
    }

    /// Scalar gate vector, or the row-major `m × m` vector gate matrix.
    pub fn gate_range(&self, layer: usize) -> Option<Range<usize>> {
        let start = self.p_q_range(layer).end;
        let m = self.width();
        match self.variant {
            Variant::LinAtt => None,
            Variant::GlaScalar | Variant::GlaScalarNoDelim => Some(start..start + m),
            Variant::GlaVector => Some(start..start + m * m),
        }
    }

    pub fn u_range(&self) -> Option<Range<usize>> {
        (self.variant == Variant::GlaVector).then(|| {
            let start = self.gate_range(0).unwrap().end;
            start..start + self.width()
        })
    }

    pub fn head_range(&self) -> Option<Range<usize>> {
        self.u_range().map(|r| r.end..r.end + self.width())
    }
}

/// Flat parameter vector with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub shape: Shape,
    pub values: Vec<f64>,
}

fn write_mat(dst: &mut [f64], m: &Mat) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            dst[i * m.ncols() + j] = m[(i, j)];
        }
    }
}

impl Params {
    pub fn zeros(shape: Shape) -> Self {
        Self { shape, values: vec![0.0; shape.len()] }
    }

    /// Preconditioners `N(0, p_std²)`, gate weights `N(0, 1/m)`, `u ≈ e_label`, `h ≈ 0`.
    pub fn random<R: Rng + ?Sized>(shape: Shape, p_std: f64, rng: &mut R) -> Self {
        let mut params = Self::zeros(shape);
        let g_std = 1.0 / libm::sqrt(shape.width() as f64);
        for layer in 0..shape.layers {
            for i in shape.p_k_range(layer).chain(shape.p_q_range(layer)) {
                params.values[i] = p_std * rng.sample::<f64, _>(StandardNormal);
            }
            if let Some(r) = shape.gate_range(layer) {
                for i in r {
                    params.values[i] = g_std * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        if let (Some(u), Some(h)) = (shape.u_range(), shape.head_range()) {
            for i in u.clone().chain(h) {
                params.values[i] = 0.01 * rng.sample::<f64, _>(StandardNormal);
            }
            params.values[u.start + shape.d] += 1.0;
        }
        params
    }

    /// Linear attention with given preconditioners in every layer.
    pub fn linear(p_k: &Mat, p_q: &Mat, layers: usize) -> Result<Self> {
        let shape = Shape::new(Variant::LinAtt, p_k.nrows(), 0, layers)?;
        let mut params = Self::zeros(shape);
        for layer in 0..layers {
            params.set_p_k(layer, p_k)?;
            params.set_p_q(layer, p_q)?;
        }
        Ok(params)
    }

    fn check(&self, m: &Mat) -> Result<()> {
        crate::linalg::check_square(m, self.shape.d, "preconditioner")
    }

    pub fn set_p_k(&mut self, layer: usize, m: &Mat) -> Result<()> {
        self.check(m)?;
        let r = self.shape.p_k_range(layer);
        write_mat(&mut self.values[r], m);
        Ok(())
    }

    pub fn set_p_q(&mut self, layer: usize, m: &Mat) -> Result<()> {
        self.check(m)?;
        let r = self.shape.p_q_range(layer);
        write_mat(&mut self.values[r], m);
        Ok(())
    }

    pub fn p_k(&self, layer: usize) -> Mat {
        let d = self.shape.d;
        Mat::from_row_slice(d, d, &self.values[self.shape.p_k_range(layer)])
    }

    pub fn p_q(&self, layer: usize) -> Mat {
        let d = self.shape.d;
        Mat::from_row_slice(d, d, &self.values[self.shape.p_q_range(layer)])
    }

    pub fn gate(&self, layer: usize) -> Option<&[f64]> {
        self.shape.gate_range(layer).map(|r| &self.values[r])
    }

    pub fn u(&self) -> Option<&[f64]> {
        self.shape.u_range().map(|r| &self.values[r])
    }

    pub fn head(&self) -> Option<&[f64]> {
        self.shape.head_range().map(|r| &self.values[r])
    }

    /// Index ranges of all gate parameters.
    pub fn gate_ranges(&self) -> Vec<Range<usize>> {
        (0..self.shape.layers).filter_map(|l| self.shape.gate_range(l)).collect()
    }
}

/// Gate preactivation contributed by each contextual vector, cached per parameter value.
#[derive(Debug, Clone)]
pub struct ContextBias {
    /// Scalar: `[layer][ctx]`. Vector: `[ctx][row]`.
    values: Vec<f64>,
    count: usize,
}

impl ContextBias {
    pub fn new(params: &Params, contexts: Option<&ContextVectors>) -> Self {
        let shape = params.shape;
        let (d, p, m) = (shape.d, shape.context_dim(), shape.width());
        let Some(contexts) = contexts.filter(|_| p > 0) else {
            return Self { values: Vec::new(), count: 0 };
        };
        let count = contexts.count();
        let mut values = Vec::new();
        match shape.variant {
            Variant::LinAtt => {}
            Variant::GlaScalar | Variant::GlaScalarNoDelim => {
                for layer in 0..shape.layers {
                    let w = &params.gate(layer).unwrap()[d + 1..];
                    for k in 0..count {
                        values.push(w.iter().zip(contexts.get(k).iter()).map(|(a, b)| a * b).sum());
                    }
                }
            }
            Variant::GlaVector => {
                let w = params.gate(0).unwrap();
                for k in 0..count {
                    let c = contexts.get(k);
                    for a in 0..m {
                        values.push((0..p).map(|j| w[a * m + d + 1 + j] * c[j]).sum());
                    }
                }
            }
        }
        Self { values, count }
    }

    fn scalar(&self, layer: usize, ctx: usize) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.values[layer * self.count + ctx]
        }
    }

    fn vector(&self, ctx: usize, m: usize) -> Option<&[f64]> {
        (self.count > 0).then(|| &self.values[ctx * m..(ctx + 1) * m])
    }

    /// Zeroed buffer for accumulating gradients with respect to the cached values.
    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.values.len()]
    }

    /// Adds the chain rule through the contextual vectors to `grad`.
    pub fn fold_gradient(&self, params: &Params, contexts: Option<&ContextVectors>, dbias: &[f64], grad: &mut [f64]) {
        let Some(contexts) = contexts else { return };
        if self.count == 0 {
            return;
        }
        let shape = params.shape;
        let (d, p, m) = (shape.d, shape.context_dim(), shape.width());
        match shape.variant {
            Variant::LinAtt => {}
            Variant::GlaScalar | Variant::GlaScalarNoDelim => {
                for layer in 0..shape.layers {
                    let r = shape.gate_range(layer).unwrap();
                    for k in 0..self.count {
                        let db = dbias[layer * self.count + k];
                        for (j, c) in contexts.get(k).iter().enumerate() {
                            grad[r.start + d + 1 + j] += db * c;
                        }
                    }
                }
            }
            Variant::GlaVector => {
                let start = shape.gate_range(0).unwrap().start;
                for k in 0..self.count {
                    let c = contexts.get(k);
                    for a in 0..m {
                        let db = dbias[k * m + a];
                        for j in 0..p {
                            grad[start + a * m + d + 1 + j] += db * c[j];
                        }
                    }
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out = Aᵀ x` for row-major square `A`.
fn mat_t_vec(a: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    out.fill(0.0);
    for (i, xi) in x.iter().enumerate() {
        if *xi == 0.0 {
            continue;
        }
        for (o, aij) in out.iter_mut().zip(&a[i * d..(i + 1) * d]) {
            *o += xi * aij;
        }
    }
}

/// `out = A x` for row-major square `A`.
fn mat_vec(a: &[f64], x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(&a[i * d..(i + 1) * d], x);
    }
}

/// `A += x yᵀ` for row-major `A`.
fn add_outer(a: &mut [f64], x: &[f64], y: &[f64]) {
    let cols = y.len();
    for (i, xi) in x.iter().enumerate() {
        if *xi == 0.0 {
            continue;
        }
        for (aij, yj) in a[i * cols..(i + 1) * cols].iter_mut().zip(y) {
            *aij += xi * yj;
        }
    }
}

#[derive(Debug, Clone, Default)]
struct LayerCache {
    /// Labels entering the layer.
    ytil: Vec<f64>,
    g: Vec<f64>,
    k: Vec<f64>,
    q: Vec<f64>,
    /// States `s_0 … s_N` (inner layers) or scalar readouts `r_0 … r_N` (last layer, vector rows).
    s: Vec<f64>,
    e: Vec<f64>,
    w: Vec<f64>,
    q_last: Vec<f64>,
}

/// Reusable buffers for forward and backward passes.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    layers: Vec<LayerCache>,
    dy: Vec<f64>,
    tmp: Vec<f64>,
    tmp2: Vec<f64>,
    dr: Vec<f64>,
}

impl Workspace {
    fn ensure(&mut self, layers: usize) {
        if self.layers.len() < layers {
            self.layers.resize_with(layers, LayerCache::default);
        }
    }
}

fn resize(v: &mut Vec<f64>, len: usize) {
    v.clear();
    v.resize(len, 0.0);
}

/// Prediction for one prompt; caches intermediates in `ws`.
pub fn forward(params: &Params, bias: &ContextBias, ep: &Episode, ws: &mut Workspace) -> f64 {
    match params.shape.variant {
        Variant::GlaVector => vector_forward(params, bias, ep, ws),
        _ => stack_forward(params, bias, ep, ws),
    }
}

/// Accumulates the gradient of the squared error into `grad` and `dbias`; returns the loss.
pub fn accumulate_gradient(
    params: &Params,
    bias: &ContextBias,
    ep: &Episode,
    ws: &mut Workspace,
    grad: &mut [f64],
    dbias: &mut [f64],
) -> f64 {
    let pred = forward(params, bias, ep, ws);
    let err = pred - ep.target;
    match params.shape.variant {
        Variant::GlaVector => vector_backward(params, ep, ws, 2.0 * err, grad, dbias),
        _ => stack_backward(params, bias, ep, ws, 2.0 * err, grad, dbias),
    }
    err * err
}

fn scalar_gate(w: Option<&[f64]>, d: usize, x: &[f64], y: f64, bias: f64) -> f64 {
    match w {
        None => 1.0,
        Some(w) => logistic(dot(&w[..d], x) + w[d] * y + bias),
    }
}

/// Residual stack of scalar-gated layers. Each layer adds its output to the label slot;
/// the prediction is minus the final query label.
fn stack_forward(params: &Params, bias: &ContextBias, ep: &Episode, ws: &mut Workspace) -> f64 {
    let shape = params.shape;
    let (d, n, layers) = (shape.d, ep.tokens(), shape.layers);
    ws.ensure(layers);
    ws.layers[0].ytil.clear();
    ws.layers[0].ytil.extend_from_slice(&ep.y);
    for l in 0..layers {
        let pk = &params.values[shape.p_k_range(l)];
        let pq = &params.values[shape.p_q_range(l)];
        let gate = params.gate(l);
        let (head, tail) = ws.layers.split_at_mut(l + 1);
        let lc = &mut head[l];
        resize(&mut lc.g, n);
        for i in 0..n {
            lc.g[i] = scalar_gate(gate, d, ep.row(i), lc.ytil[i], bias.scalar(l, ep.ctx[i]));
        }
        if l + 1 < layers {
            let next = &mut tail[0];
            resize(&mut next.ytil, n);
            resize(&mut lc.k, n * d);
            resize(&mut lc.q, n * d);
            resize(&mut lc.s, (n + 1) * d);
            for i in 0..n {
                let x = ep.row(i);
                mat_t_vec(pk, x, &mut lc.k[i * d..(i + 1) * d]);
                mat_t_vec(pq, x, &mut lc.q[i * d..(i + 1) * d]);
                let (prev, cur) = lc.s.split_at_mut((i + 1) * d);
                let prev = &prev[i * d..];
                let cur = &mut cur[..d];
                let (g, y) = (lc.g[i], lc.ytil[i]);
                for j in 0..d {
                    cur[j] = g * prev[j] + y * lc.k[i * d + j];
                }
                next.ytil[i] = y + dot(cur, &lc.q[i * d..(i + 1) * d]);
            }
        } else {
            resize(&mut lc.q_last, d);
            resize(&mut lc.w, d);
            resize(&mut lc.e, n);
            resize(&mut lc.s, n + 1);
            mat_t_vec(pq, ep.row(n - 1), &mut lc.q_last);
            mat_vec(pk, &lc.q_last, &mut lc.w);
            for i in 0..n {
                lc.e[i] = dot(ep.row(i), &lc.w);
                lc.s[i + 1] = lc.g[i] * lc.s[i] + lc.ytil[i] * lc.e[i];
            }
            return -(lc.ytil[n - 1] + lc.s[n]);
        }
    }
    unreachable!("stack has at least one layer")
}

#[allow(clippy::too_many_arguments)]
fn gate_backward(
    gate_grad: Option<&mut [f64]>,
    w: Option<&[f64]>,
    d: usize,
    x: &[f64],
    y: f64,
    g: f64,
    dg: f64,
    dbias: Option<&mut f64>,
) -> f64 {
    let (Some(gw), Some(w)) = (gate_grad, w) else { return 0.0 };
    let da = dg * g * (1.0 - g);
    for (o, xi) in gw[..d].iter_mut().zip(x) {
        *o += da * xi;
    }
    gw[d] += da * y;
    if let Some(b) = dbias {
        *b += da;
    }
    da * w[d]
}

fn stack_backward(
    params: &Params,
    bias: &ContextBias,
    ep: &Episode,
    ws: &mut Workspace,
    dpred: f64,
    grad: &mut [f64],
    dbias: &mut [f64],
) {
    let shape = params.shape;
    let (d, n, layers) = (shape.d, ep.tokens(), shape.layers);
    let count = bias.count;
    resize(&mut ws.dy, n);
    resize(&mut ws.tmp, d);
    resize(&mut ws.tmp2, d);
    let dy = &mut ws.dy;

    // last layer
    let l = layers - 1;
    let lc = &ws.layers[l];
    let pk = &params.values[shape.p_k_range(l)];
    let gate = params.gate(l);
    let gate_r = shape.gate_range(l);
    let dout = -dpred;
    dy[n - 1] += dout;
    let mut dr = dout;
    let dw = &mut ws.tmp;
    for i in (0..n).rev() {
        let x = ep.row(i);
        let de = dr * lc.ytil[i];
        dy[i] += dr * lc.e[i];
        for (o, xi) in dw.iter_mut().zip(x) {
            *o += de * xi;
        }
        let dg = dr * lc.s[i];
        let db = (count > 0).then(|| &mut dbias[l * count + ep.ctx[i]]);
        let gg = gate_r.clone().map(|r| &mut grad[r]);
        dy[i] += gate_backward(gg, gate, d, x, lc.ytil[i], lc.g[i], dg, db);
        dr *= lc.g[i];
    }
    add_outer(&mut grad[shape.p_k_range(l)], dw, &lc.q_last);
    let dq = &mut ws.tmp2;
    mat_t_vec(pk, dw, dq);
    add_outer(&mut grad[shape.p_q_range(l)], ep.row(n - 1), dq);

    for l in (0..layers - 1).rev() {
        let lc = &ws.layers[l];
        let gate = params.gate(l);
        let gate_r = shape.gate_range(l);
        let mut carry = vec![0.0; d];
        let mut shat = vec![0.0; d];
        let mut dk = vec![0.0; d];
        for i in (0..n).rev() {
            let x = ep.row(i);
            let dout = dy[i];
            let q = &lc.q[i * d..(i + 1) * d];
            let k = &lc.k[i * d..(i + 1) * d];
            let s_cur = &lc.s[(i + 1) * d..(i + 2) * d];
            let s_prev = &lc.s[i * d..(i + 1) * d];
            for j in 0..d {
                shat[j] = dout * q[j] + carry[j];
            }
            if dout != 0.0 {
                let dq: Vec<f64> = s_cur.iter().map(|s| dout * s).collect();
                add_outer(&mut grad[shape.p_q_range(l)], x, &dq);
            }
            let dg = dot(&shat, s_prev);
            dy[i] += dot(&shat, k);
            for j in 0..d {
                dk[j] = lc.ytil[i] * shat[j];
            }
            add_outer(&mut grad[shape.p_k_range(l)], x, &dk);
            let db = (count > 0).then(|| &mut dbias[l * count + ep.ctx[i]]);
            let gg = gate_r.clone().map(|r| &mut grad[r]);
            dy[i] += gate_backward(gg, gate, d, x, lc.ytil[i], lc.g[i], dg, db);
            for j in 0..d {
                carry[j] = lc.g[i] * shat[j];
            }
        }
    }
}

/// Single layer with one gate per state row: prediction `Σ_a h_a u_a r_{N,a}`.
fn vector_forward(params: &Params, bias: &ContextBias, ep: &Episode, ws: &mut Workspace) -> f64 {
    let shape = params.shape;
    let (d, n, m) = (shape.d, ep.tokens(), shape.width());
    ws.ensure(1);
    let lc = &mut ws.layers[0];
    let pk = &params.values[shape.p_k_range(0)];
    let pq = &params.values[shape.p_q_range(0)];
    let wg = params.gate(0).unwrap();
    resize(&mut lc.q_last, d);
    resize(&mut lc.w, d);
    resize(&mut lc.e, n);
    resize(&mut lc.g, n * m);
    resize(&mut lc.s, (n + 1) * m);
    mat_t_vec(pq, ep.row(n - 1), &mut lc.q_last);
    mat_vec(pk, &lc.q_last, &mut lc.w);
    for i in 0..n {
        let x = ep.row(i);
        let y = ep.y[i];
        let e = dot(x, &lc.w);
        lc.e[i] = e;
        let cb = bias.vector(ep.ctx[i], m);
        for a in 0..m {
            let row = &wg[a * m..a * m + d + 1];
            let pre = dot(&row[..d], x) + row[d] * y + cb.map_or(0.0, |c| c[a]);
            let g = logistic(pre);
            lc.g[i * m + a] = g;
            lc.s[(i + 1) * m + a] = g * lc.s[i * m + a] + y * e;
        }
    }
    let (u, h) = (params.u().unwrap(), params.head().unwrap());
    (0..m).map(|a| h[a] * u[a] * lc.s[n * m + a]).sum()
}

fn vector_backward(params: &Params, ep: &Episode, ws: &mut Workspace, dpred: f64, grad: &mut [f64], dbias: &mut [f64]) {
    let shape = params.shape;
    let (d, n, m) = (shape.d, ep.tokens(), shape.width());
    let lc = &ws.layers[0];
    let pk = &params.values[shape.p_k_range(0)];
    let (u, h) = (params.u().unwrap(), params.head().unwrap());
    let (ur, hr) = (shape.u_range().unwrap(), shape.head_range().unwrap());
    let gate_start = shape.gate_range(0).unwrap().start;
    let has_bias = !dbias.is_empty();
    resize(&mut ws.dr, m);
    resize(&mut ws.tmp, d);
    resize(&mut ws.tmp2, d);
    let dr = &mut ws.dr;
    for a in 0..m {
        let r = lc.s[n * m + a];
        dr[a] = dpred * h[a] * u[a];
        grad[hr.start + a] += dpred * u[a] * r;
        grad[ur.start + a] += dpred * h[a] * r;
    }
    let dw = &mut ws.tmp;
    for i in (0..n).rev() {
        let x = ep.row(i);
        let y = ep.y[i];
        let de = y * dr.iter().sum::<f64>();
        for (o, xi) in dw.iter_mut().zip(x) {
            *o += de * xi;
        }
        for a in 0..m {
            let g = lc.g[i * m + a];
            let dg = dr[a] * lc.s[i * m + a];
            let da = dg * g * (1.0 - g);
            let row = &mut grad[gate_start + a * m..gate_start + a * m + d + 1];
            for (o, xi) in row[..d].iter_mut().zip(x) {
                *o += da * xi;
            }
            row[d] += da * y;
            if has_bias {
                dbias[ep.ctx[i] * m + a] += da;
            }
            dr[a] *= g;
        }
    }
    add_outer(&mut grad[shape.p_k_range(0)], dw, &lc.q_last);
    let dq = &mut ws.tmp2;
    mat_t_vec(pk, dw, dq);
    add_outer(&mut grad[shape.p_q_range(0)], ep.row(n - 1), dq);
}
