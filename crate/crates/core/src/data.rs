//! Correlated multitask regression prompts.
//!
//! Context tasks come in `K` segments. Segment `k` holds `n_k` examples that share one
//! task vector `β_k ~ N(0, I_d)`; the query task `β` correlates with segment `k` through
//! `r_k`. Cross-segment correlation defaults to zero and can be set explicitly.

use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, Mat, SymEigen, Vector};
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::StandardNormal;

const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub len: usize,
    pub query_corr: f64,
}

impl Segment {
    pub fn new(len: usize, query_corr: f64) -> Self {
        Self { len, query_corr }
    }
}

/// Task-task correlation `R` and task-query correlation `r` of a segmented prompt.
#[derive(Debug, Clone)]
pub struct CorrelationStructure {
    segments: Vec<Segment>,
    cross: Mat,
    r_mat: Mat,
    r_vec: Vector,
    // Row k < K draws segment task k, row K draws the query task, as mixtures of K+1 white vectors.
    factor: Mat,
}

pub fn build_correlation_structure(segments: &[Segment], cross: Option<&Mat>) -> Result<CorrelationStructure> {
    let k = segments.len();
    for (index, s) in segments.iter().enumerate() {
        if !(s.query_corr.abs() <= 1.0) {
            return Err(Error::CorrelationRange { index, value: s.query_corr });
        }
    }
    let cross = match cross {
        Some(c) => {
            crate::linalg::check_square(c, k, "cross-task correlation")?;
            if !is_symmetric(c, 1e-12) {
                return Err(Error::NotSymmetric { what: "cross-task correlation" });
            }
            if (0..k).any(|i| c[(i, i)] != 1.0) {
                return Err(Error::CrossDiagonal);
            }
            for (index, v) in c.iter().enumerate() {
                if !(v.abs() <= 1.0) {
                    return Err(Error::CorrelationRange { index, value: *v });
                }
            }
            c.clone()
        }
        None => Mat::identity(k, k),
    };

    let mut joint = Mat::identity(k + 1, k + 1);
    joint.view_mut((0, 0), (k, k)).copy_from(&cross);
    for (i, s) in segments.iter().enumerate() {
        joint[(i, k)] = s.query_corr;
        joint[(k, i)] = s.query_corr;
    }
    let eig = SymEigen::new(&joint, "joint correlation")?;
    let min_eigenvalue = eig.min();
    if min_eigenvalue < -PSD_TOL {
        return Err(Error::NotPsd { what: "joint task correlation", min_eigenvalue });
    }

    let factor = if crate::linalg::is_identity(&cross) {
        let mut f = Mat::zeros(k + 1, k + 1);
        let mut residual = 1.0;
        for (i, s) in segments.iter().enumerate() {
            f[(i, i)] = 1.0;
            f[(k, i)] = s.query_corr;
            residual -= s.query_corr * s.query_corr;
        }
        f[(k, k)] = libm::sqrt(residual.max(0.0));
        f
    } else {
        eig.map(|v| libm::sqrt(v.max(0.0)))
    };

    let n: usize = segments.iter().map(|s| s.len).sum();
    let owner: Vec<usize> = segments.iter().enumerate().flat_map(|(k, s)| core::iter::repeat_n(k, s.len)).collect();
    let r_mat = Mat::from_fn(n, n, |i, j| cross[(owner[i], owner[j])]);
    let r_vec = Vector::from_fn(n, |i, _| segments[owner[i]].query_corr);

    Ok(CorrelationStructure { segments: segments.to_vec(), cross, r_mat, r_vec, factor })
}

impl CorrelationStructure {
    /// Single shared-correlation segment of length `n`.
    pub fn single(n: usize, query_corr: f64) -> Result<Self> {
        build_correlation_structure(&[Segment::new(n, query_corr)], None)
    }

    pub fn n(&self) -> usize {
        self.r_vec.len()
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment_lens(&self) -> Vec<usize> {
        self.segments.iter().map(|s| s.len).collect()
    }

    pub fn cross(&self) -> &Mat {
        &self.cross
    }

    pub fn r_matrix(&self) -> &Mat {
        &self.r_mat
    }

    pub fn r_vector(&self) -> &Vector {
        &self.r_vec
    }

    /// `n × K` indicator matrix mapping segment values to per-example values.
    pub fn expansion(&self) -> Mat {
        let mut e = Mat::zeros(self.n(), self.num_segments());
        let mut row = 0;
        for (k, s) in self.segments.iter().enumerate() {
            for _ in 0..s.len {
                e[(row, k)] = 1.0;
                row += 1;
            }
        }
        e
    }

    /// Per-segment values expanded to a length-`n` vector.
    pub fn expand(&self, per_segment: &[f64]) -> Vector {
        let mut out = Vector::zeros(self.n());
        let mut row = 0;
        for (s, v) in self.segments.iter().zip(per_segment) {
            for _ in 0..s.len {
                out[row] = *v;
                row += 1;
            }
        }
        out
    }

    /// Fills `segment_tasks` (K·d, row-major) and `query_task` (d) with one joint draw.
    pub fn draw_tasks<R: Rng + ?Sized>(
        &self,
        d: usize,
        rng: &mut R,
        white: &mut [f64],
        segment_tasks: &mut [f64],
        query_task: &mut [f64],
    ) {
        let k = self.segments.len();
        for w in white[..(k + 1) * d].iter_mut() {
            *w = rng.sample(StandardNormal);
        }
        for row in 0..=k {
            let out = if row < k { &mut segment_tasks[row * d..(row + 1) * d] } else { &mut query_task[..d] };
            out.fill(0.0);
            for j in 0..=k {
                let f = self.factor[(row, j)];
                if f == 0.0 {
                    continue;
                }
                for (o, w) in out.iter_mut().zip(&white[j * d..(j + 1) * d]) {
                    *o += f * w;
                }
            }
        }
    }
}

/// Context task matrix `B` (rows `β_i`) and query task `β`.
#[derive(Debug, Clone)]
pub struct TaskEnsemble {
    pub b: Mat,
    pub beta: Vector,
    pub segment_tasks: Mat,
    pub segment_lens: Vec<usize>,
}

impl TaskEnsemble {
    pub fn d(&self) -> usize {
        self.beta.len()
    }

    pub fn n(&self) -> usize {
        self.b.nrows()
    }
}

pub fn sample_task_ensemble<R: Rng + ?Sized>(structure: &CorrelationStructure, d: usize, rng: &mut R) -> TaskEnsemble {
    let k = structure.num_segments();
    let mut white = vec![0.0; (k + 1) * d];
    let mut seg = vec![0.0; k * d];
    let mut query = vec![0.0; d];
    structure.draw_tasks(d, rng, &mut white, &mut seg, &mut query);
    let segment_tasks = Mat::from_row_slice(k, d, &seg);
    let lens = structure.segment_lens();
    let n = structure.n();
    let mut b = Mat::zeros(n, d);
    let mut row = 0;
    for (s, len) in lens.iter().enumerate() {
        for _ in 0..*len {
            b.row_mut(row).copy_from(&segment_tasks.row(s));
            row += 1;
        }
    }
    TaskEnsemble { b, beta: Vector::from_vec(query), segment_tasks, segment_lens: lens }
}

/// Feature covariance `Σ` with a Cholesky factor for sampling.
#[derive(Debug, Clone)]
pub struct Covariance {
    matrix: Mat,
    chol: Option<Mat>,
}

impl Covariance {
    pub fn identity(d: usize) -> Self {
        Self { matrix: Mat::identity(d, d), chol: None }
    }

    pub fn diagonal(spectrum: &[f64]) -> Result<Self> {
        if spectrum.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::NotSpd);
        }
        Self::new(Mat::from_diagonal(&Vector::from_column_slice(spectrum)))
    }

    pub fn new(matrix: Mat) -> Result<Self> {
        if !is_symmetric(&matrix, 1e-12) {
            return Err(Error::NotSpd);
        }
        if crate::linalg::is_identity(&matrix) {
            return Ok(Self::identity(matrix.nrows()));
        }
        let chol = matrix.clone().cholesky().ok_or(Error::NotSpd)?.l();
        Ok(Self { matrix, chol: Some(chol) })
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn d(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_identity(&self) -> bool {
        self.chol.is_none()
    }

    /// Draws `x ~ N(0, Σ)` into `out`, using `scratch` of the same length.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, scratch: &mut [f64], out: &mut [f64]) {
        match &self.chol {
            None => {
                for o in out.iter_mut() {
                    *o = rng.sample(StandardNormal);
                }
            }
            Some(l) => {
                for s in scratch.iter_mut() {
                    *s = rng.sample(StandardNormal);
                }
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..=i).map(|j| l[(i, j)] * scratch[j]).sum();
                }
            }
        }
    }
}

/// Contextual vectors `c̄_0 … c̄_K`; `c̄_0` tags data and query tokens, `c̄_k` the k-th delimiter.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextVectors {
    vectors: Vec<Vector>,
}

impl ContextVectors {
    pub fn new(vectors: Vec<Vector>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::Empty("contextual vectors"));
        }
        let p = vectors[0].len();
        for v in &vectors {
            crate::linalg::check_len(v.len(), p, "contextual vector")?;
        }
        Ok(Self { vectors })
    }

    pub fn sample<R: Rng + ?Sized>(segments: usize, p: usize, rng: &mut R) -> Self {
        let vectors = (0..=segments).map(|_| Vector::from_fn(p, |_, _| rng.sample(StandardNormal))).collect();
        Self { vectors }
    }

    pub fn p(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn count(&self) -> usize {
        self.vectors.len()
    }

    pub fn get(&self, k: usize) -> &Vector {
        &self.vectors[k]
    }
}

/// Token layout of a prompt.
#[derive(Debug, Clone)]
pub enum PromptLayout {
    /// Rows `[x_i, y_i]`, width `d + 1`.
    Plain,
    /// Rows `[x_i, y_i, c̄_0]`, optionally with a delimiter `[0, 0, c̄_k]` after segment `k`.
    Contextual { contexts: ContextVectors, delimiters: bool },
}

impl PromptLayout {
    pub fn p(&self) -> usize {
        match self {
            PromptLayout::Plain => 0,
            PromptLayout::Contextual { contexts, .. } => contexts.p(),
        }
    }

    pub fn has_delimiters(&self) -> bool {
        matches!(self, PromptLayout::Contextual { delimiters: true, .. })
    }
}

/// Role of a token row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenRole {
    Data { segment: usize },
    Delimiter { segment: usize },
    Query,
}

#[derive(Debug, Clone)]
pub struct MultiTaskPrompt {
    pub x: Mat,
    pub y: Vector,
    pub x_query: Vector,
    pub y_query: f64,
    pub z: Mat,
    pub roles: Vec<TokenRole>,
    pub p: usize,
    pub contexts: Option<ContextVectors>,
}

impl MultiTaskPrompt {
    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn width(&self) -> usize {
        self.z.ncols()
    }

    pub fn data_rows(&self) -> Vec<usize> {
        self.rows_where(|r| matches!(r, TokenRole::Data { .. }))
    }

    pub fn delimiter_rows(&self) -> Vec<usize> {
        self.rows_where(|r| matches!(r, TokenRole::Delimiter { .. }))
    }

    fn rows_where(&self, f: impl Fn(&TokenRole) -> bool) -> Vec<usize> {
        self.roles.iter().enumerate().filter(|(_, r)| f(r)).map(|(i, _)| i).collect()
    }
}

/// Builds the token matrix for given features and labels.
pub fn assemble_prompt(
    x: Mat,
    y: Vector,
    x_query: Vector,
    y_query: f64,
    segment_lens: &[usize],
    layout: &PromptLayout,
) -> Result<MultiTaskPrompt> {
    let n: usize = segment_lens.iter().sum();
    let d = x_query.len();
    crate::linalg::check_len(x.nrows(), n, "context rows")?;
    crate::linalg::check_len(x.ncols(), d, "feature dimension")?;
    crate::linalg::check_len(y.len(), n, "labels")?;
    let k = segment_lens.len();

    let (contexts, delimiters) = match layout {
        PromptLayout::Plain => (None, false),
        PromptLayout::Contextual { contexts, delimiters } => {
            if contexts.count() != k + 1 {
                return Err(Error::ContextCount { expected: k + 1, found: contexts.count() });
            }
            (Some(contexts), *delimiters)
        }
    };
    let p = contexts.map_or(0, |c| c.p());
    let width = d + 1 + p;

    let mut roles = Vec::with_capacity(n + k + 1);
    for (s, len) in segment_lens.iter().enumerate() {
        roles.extend(core::iter::repeat_n(TokenRole::Data { segment: s }, *len));
        if delimiters {
            roles.push(TokenRole::Delimiter { segment: s });
        }
    }
    roles.push(TokenRole::Query);

    let mut z = Mat::zeros(roles.len(), width);
    let mut data = 0;
    for (row, role) in roles.iter().enumerate() {
        let ctx = match role {
            TokenRole::Data { .. } => {
                for j in 0..d {
                    z[(row, j)] = x[(data, j)];
                }
                z[(row, d)] = y[data];
                data += 1;
                0
            }
            TokenRole::Delimiter { segment } => segment + 1,
            TokenRole::Query => {
                for j in 0..d {
                    z[(row, j)] = x_query[j];
                }
                0
            }
        };
        if let Some(c) = contexts {
            for j in 0..p {
                z[(row, d + 1 + j)] = c.get(ctx)[j];
            }
        }
    }

    Ok(MultiTaskPrompt { x, y, x_query, y_query, z, roles, p, contexts: contexts.cloned() })
}

pub fn sample_multitask_prompt<R: Rng + ?Sized>(
    ensemble: &TaskEnsemble,
    cov: &Covariance,
    sigma: f64,
    layout: &PromptLayout,
    rng: &mut R,
) -> Result<MultiTaskPrompt> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Noise(sigma));
    }
    let d = ensemble.d();
    crate::linalg::check_len(cov.d(), d, "covariance dimension")?;
    let n = ensemble.n();
    let mut scratch = vec![0.0; d];
    let mut row = vec![0.0; d];
    let mut x = Mat::zeros(n, d);
    let mut y = Vector::zeros(n);
    for i in 0..n {
        cov.draw(rng, &mut scratch, &mut row);
        let task = ensemble.b.row(i);
        let mut label: f64 = row.iter().zip(task.iter()).map(|(a, b)| a * b).sum();
        if sigma > 0.0 {
            label += sigma * rng.sample::<f64, _>(StandardNormal);
        }
        for j in 0..d {
            x[(i, j)] = row[j];
        }
        y[i] = label;
    }
    cov.draw(rng, &mut scratch, &mut row);
    let x_query = Vector::from_column_slice(&row);
    let mut y_query = x_query.dot(&ensemble.beta);
    if sigma > 0.0 {
        y_query += sigma * rng.sample::<f64, _>(StandardNormal);
    }
    assemble_prompt(x, y, x_query, y_query, &ensemble.segment_lens, layout)
}

/// `(1/d)·mean(B Bᵀ)` and `(1/d)·mean(B β)` over a set of ensembles.
pub fn empirical_correlation(samples: &[TaskEnsemble]) -> Result<(Mat, Vector)> {
    let first = samples.first().ok_or(Error::Empty("task ensembles"))?;
    let (n, d) = (first.n(), first.d());
    let mut r_mat = Mat::zeros(n, n);
    let mut r_vec = Vector::zeros(n);
    for s in samples {
        crate::linalg::check_len(s.n(), n, "ensemble size")?;
        crate::linalg::check_len(s.d(), d, "ensemble dimension")?;
        r_mat += &s.b * s.b.transpose();
        r_vec += &s.b * &s.beta;
    }
    let scale = 1.0 / (d as f64 * samples.len() as f64);
    Ok((r_mat * scale, r_vec * scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn segs(v: &[(usize, f64)]) -> Vec<Segment> {
        v.iter().map(|&(n, r)| Segment::new(n, r)).collect()
    }

    #[test]
    fn shared_task_structure() {
        let c = build_correlation_structure(&segs(&[(2, 1.0)]), None).unwrap();
        assert_eq!(c.r_matrix(), &Mat::from_element(2, 2, 1.0));
        assert_eq!(c.r_vector(), &Vector::from_element(2, 1.0));
    }

    #[test]
    fn orthogonal_segments_structure() {
        let c = build_correlation_structure(&segs(&[(1, 0.0), (1, 0.8)]), None).unwrap();
        assert_eq!(c.r_matrix(), &Mat::identity(2, 2));
        assert_eq!(c.r_vector().as_slice(), &[0.0, 0.8]);
    }

    #[test]
    fn block_structure_with_lengths() {
        let c = build_correlation_structure(&segs(&[(2, 0.2), (3, 0.5)]), None).unwrap();
        let r = c.r_matrix();
        assert_eq!(r[(0, 1)], 1.0);
        assert_eq!(r[(1, 2)], 0.0);
        assert_eq!(r[(3, 4)], 1.0);
        assert_eq!(c.r_vector().as_slice(), &[0.2, 0.2, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn rejects_infeasible_joint() {
        let err = build_correlation_structure(&segs(&[(1, 0.9), (1, 0.9)]), None).unwrap_err();
        assert!(matches!(err, Error::NotPsd { .. }));
    }

    #[test]
    fn rejects_out_of_range() {
        let err = build_correlation_structure(&segs(&[(1, 1.2)]), None).unwrap_err();
        assert!(matches!(err, Error::CorrelationRange { .. }));
    }

    #[test]
    fn rejects_bad_cross() {
        let cross = Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(build_correlation_structure(&segs(&[(1, 0.0), (1, 0.0)]), Some(&cross)).is_err());
        let cross = Mat::from_row_slice(2, 2, &[0.9, 0.0, 0.0, 1.0]);
        assert_eq!(
            build_correlation_structure(&segs(&[(1, 0.0), (1, 0.0)]), Some(&cross)).unwrap_err(),
            Error::CrossDiagonal
        );
    }

    #[test]
    fn cross_expands_blockwise() {
        let cross = Mat::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let c = build_correlation_structure(&segs(&[(2, 0.1), (1, 0.2)]), Some(&cross)).unwrap();
        assert_eq!(c.r_matrix()[(0, 2)], 0.3);
        assert_eq!(c.r_matrix()[(0, 1)], 1.0);
    }

    #[test]
    fn perfect_correlation_copies_task() {
        let c = build_correlation_structure(&segs(&[(2, 1.0)]), None).unwrap();
        let e = sample_task_ensemble(&c, 4, &mut stream(3, 0));
        assert_eq!(e.beta, e.segment_tasks.row(0).transpose());
        let c = build_correlation_structure(&segs(&[(1, 0.0), (1, 1.0)]), None).unwrap();
        let e = sample_task_ensemble(&c, 4, &mut stream(3, 0));
        assert_eq!(e.beta, e.segment_tasks.row(1).transpose());
    }

    #[test]
    fn noiseless_scalar_label() {
        let e = TaskEnsemble {
            b: Mat::from_element(1, 1, 2.0),
            beta: Vector::from_element(1, 2.0),
            segment_tasks: Mat::from_element(1, 1, 2.0),
            segment_lens: vec![1],
        };
        let p = assemble_prompt(
            Mat::from_element(1, 1, 0.5),
            &e.b * Vector::from_element(1, 0.5),
            Vector::from_element(1, 1.0),
            0.0,
            &[1],
            &PromptLayout::Plain,
        )
        .unwrap();
        assert_eq!(p.y[0], 1.0);
        assert_eq!(p.z[(0, 1)], 1.0);
    }

    #[test]
    fn delimiter_prompt_shape() {
        let c = build_correlation_structure(&segs(&[(3, 0.2), (3, 0.8)]), None).unwrap();
        let mut rng = stream(1, 0);
        let e = sample_task_ensemble(&c, 5, &mut rng);
        let ctx = ContextVectors::sample(2, 5, &mut rng);
        let layout = PromptLayout::Contextual { contexts: ctx.clone(), delimiters: true };
        let p = sample_multitask_prompt(&e, &Covariance::identity(5), 0.1, &layout, &mut rng).unwrap();
        assert_eq!(p.z.nrows(), 9);
        assert_eq!(p.z.ncols(), 11);
        assert_eq!(p.delimiter_rows(), vec![3, 7]);
        for (k, row) in p.delimiter_rows().into_iter().enumerate() {
            assert!(p.z.row(row).columns(0, 6).iter().all(|v| *v == 0.0));
            assert_eq!(p.z.row(row).columns(6, 5).transpose(), *ctx.get(k + 1));
        }
        for row in p.data_rows() {
            assert_eq!(p.z.row(row).columns(6, 5).transpose(), *ctx.get(0));
        }
        assert_eq!(p.z[(8, 5)], 0.0);
        let plain = sample_multitask_prompt(&e, &Covariance::identity(5), 0.1, &PromptLayout::Plain, &mut rng).unwrap();
        assert_eq!(plain.z.nrows(), 7);
        assert_eq!(plain.z.ncols(), 6);
    }

    #[test]
    fn context_count_checked() {
        let mut rng = stream(1, 0);
        let layout = PromptLayout::Contextual { contexts: ContextVectors::sample(1, 3, &mut rng), delimiters: true };
        let err =
            assemble_prompt(Mat::zeros(2, 1), Vector::zeros(2), Vector::zeros(1), 0.0, &[1, 1], &layout).unwrap_err();
        assert!(matches!(err, Error::ContextCount { .. }));
    }

    #[test]
    fn covariance_validation() {
        assert!(Covariance::new(Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        assert!(Covariance::diagonal(&[1.0, 0.0]).is_err());
        assert!(Covariance::diagonal(&[1.0, 2.0]).is_ok());
    }

    #[test]
    fn covariance_sampling_moments() {
        let sigma = Mat::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let cov = Covariance::new(sigma.clone()).unwrap();
        let mut rng = stream(9, 0);
        let mut acc = Mat::zeros(2, 2);
        let (mut s, mut x) = ([0.0; 2], [0.0; 2]);
        let n = 200_000;
        for _ in 0..n {
            cov.draw(&mut rng, &mut s, &mut x);
            let v = Vector::from_column_slice(&x);
            acc += &v * v.transpose();
        }
        acc /= n as f64;
        assert!((acc - sigma).abs().max() < 0.03);
    }

    #[test]
    fn empirical_correlation_single_sample_is_exact() {
        let beta = Vector::from_column_slice(&[1.0, -2.0, 0.5]);
        let b = Mat::from_fn(2, 3, |_, j| beta[j]);
        let e = TaskEnsemble {
            b: b.clone(),
            beta: beta.clone(),
            segment_tasks: b.rows(0, 1).into_owned(),
            segment_lens: vec![2],
        };
        let (r, rv) = empirical_correlation(&[e]).unwrap();
        assert_eq!(r, &b * b.transpose() / 3.0);
        assert_eq!(rv, &b * &beta / 3.0);
        assert!(empirical_correlation(&[]).is_err());
    }

    #[test]
    fn general_cross_moments() {
        let cross = Mat::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]);
        let c = build_correlation_structure(&segs(&[(1, 0.3), (1, 0.6)]), Some(&cross)).unwrap();
        let mut rng = stream(2, 5);
        let samples: Vec<_> = (0..20_000).map(|_| sample_task_ensemble(&c, 4, &mut rng)).collect();
        let (r, rv) = empirical_correlation(&samples).unwrap();
        let bound = 5.0 / (80_000f64).sqrt();
        assert!((r - c.r_matrix()).abs().max() < bound);
        assert!((rv - c.r_vector()).abs().max() < bound);
    }
}
