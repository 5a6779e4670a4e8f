//! Population risk of one-step weighted preconditioned descent and its optimum.
//!
//! For `x ~ N(0, Σ)`, correlated Gaussian tasks and label noise `σ`, the predictor
//! `xᵀ P Xᵀ(ω ⊙ y)` has risk
//!
//! ```text
//! L(P, ω) = M − 2 tr(Σ²P) ωᵀr + M‖ω‖² tr(ΣPᵀΣP) + (‖ω‖² + ωᵀRω) tr(Σ²PᵀΣP),   M = tr(Σ) + σ²
//! ```

use crate::data::{ContextVectors, CorrelationStructure};
use crate::error::{Error, Result};
use crate::gla::{build_construction, Activation, AttentionModel, Construction, GatingSpec};
use crate::isotonic::project_monotone_box;
use crate::linalg::{check_len, check_square, is_identity, trace_of_product, Mat, SymEigen, Vector};
use alloc::vec;
use alloc::vec::Vec;

/// Eigenvalues below this fraction of the largest count as zero.
const ZERO_EIGEN_RATIO: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct RiskModel {
    sigma: Mat,
    sigma_sq: Mat,
    corr: CorrelationStructure,
    noise: f64,
    m: f64,
}

impl RiskModel {
    pub fn new(sigma: Mat, corr: CorrelationStructure, noise: f64) -> Result<Self> {
        if !(noise >= 0.0) || !noise.is_finite() {
            return Err(Error::Noise(noise));
        }
        if !crate::linalg::is_symmetric(&sigma, 1e-12) || sigma.clone().cholesky().is_none() {
            return Err(Error::NotSpd);
        }
        let m = sigma.trace() + noise * noise;
        Ok(Self { sigma_sq: &sigma * &sigma, sigma, corr, noise, m })
    }

    pub fn isotropic(d: usize, corr: CorrelationStructure, noise: f64) -> Result<Self> {
        Self::new(Mat::identity(d, d), corr, noise)
    }

    pub fn d(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn n(&self) -> usize {
        self.corr.n()
    }

    pub fn sigma(&self) -> &Mat {
        &self.sigma
    }

    pub fn correlation(&self) -> &CorrelationStructure {
        &self.corr
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    /// `tr(Σ) + σ²`, the risk of the zero predictor.
    pub fn m(&self) -> f64 {
        self.m
    }

    /// `(tr(Σ²P), tr(ΣPᵀΣP), tr(Σ²PᵀΣP))`.
    fn traces(&self, p: &Mat) -> (f64, f64, f64) {
        let sp = &self.sigma * p;
        let spt = &self.sigma * p.transpose();
        (trace_of_product(&self.sigma_sq, p), trace_of_product(&spt, &sp), trace_of_product(&(&self.sigma * &spt), &sp))
    }

    fn check(&self, p: &Mat, omega: &Vector) -> Result<()> {
        check_square(p, self.d(), "preconditioner")?;
        check_len(omega.len(), self.n(), "weights")
    }
}

struct WeightStats {
    norm_sq: f64,
    overlap: f64,
    /// `‖ω‖² + ωᵀRω`
    quad: f64,
}

fn weight_stats(omega: &Vector, model: &RiskModel) -> WeightStats {
    let norm_sq = omega.norm_squared();
    WeightStats {
        norm_sq,
        overlap: omega.dot(model.corr.r_vector()),
        quad: norm_sq + omega.dot(&(model.corr.r_matrix() * omega)),
    }
}

pub fn closed_form_risk(p: &Mat, omega: &Vector, model: &RiskModel) -> Result<f64> {
    model.check(p, omega)?;
    let (a, b, c) = model.traces(p);
    let w = weight_stats(omega, model);
    let m = model.m;
    Ok(m - 2.0 * a * w.overlap + m * w.norm_sq * b + w.quad * c)
}

/// Exact gradient of [`closed_form_risk`] in `P` and `ω`.
pub fn risk_gradient(p: &Mat, omega: &Vector, model: &RiskModel) -> Result<(Mat, Vector)> {
    model.check(p, omega)?;
    let (a, b, c) = model.traces(p);
    let w = weight_stats(omega, model);
    let m = model.m;
    let s = &model.sigma;
    let sps = s * p * s;
    let grad_p = &model.sigma_sq * (-2.0 * w.overlap) + &sps * (2.0 * m * w.norm_sq) + &sps * s * (2.0 * w.quad);
    let r_omega = model.corr.r_matrix() * omega;
    let grad_w = model.corr.r_vector() * (-2.0 * a) + omega * (2.0 * m * b) + (omega + r_omega) * (2.0 * c);
    Ok((grad_p, grad_w))
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Eigenvalues of `Σ`, descending, with eigenvectors as columns of `u`.
    pub s: Vector,
    pub u: Mat,
    /// Eigenvalues of `R`, descending, with eigenvectors as columns of `e`.
    pub lambda: Vector,
    pub e: Mat,
    /// `Eᵀ r`.
    pub a: Vector,
    pub m: f64,
    pub s_min: f64,
    pub s_max: f64,
    /// Extremes over the nonzero eigenvalues of `R` (zero when `R` vanishes).
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `Δ_Σ · Δ_R < M + s_min`.
    pub gap_condition: bool,
    /// `r` has no component on the nonzero eigenvectors of `R`.
    pub outside_range: bool,
}

impl Spectrum {
    pub fn delta_sigma(&self) -> f64 {
        self.s_max - self.s_min
    }

    pub fn delta_r(&self) -> f64 {
        self.lambda_max - self.lambda_min
    }
}

pub fn spectral_setup(model: &RiskModel) -> Result<Spectrum> {
    let se = SymEigen::new(&model.sigma, "feature covariance")?;
    let re = SymEigen::new(model.corr.r_matrix(), "task correlation")?;
    let a = re.vectors.tr_mul(model.corr.r_vector());
    let s_max = se.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s_min = se.values.iter().copied().fold(f64::INFINITY, f64::min);
    let top = re.values.iter().copied().fold(0.0, f64::max);
    let cutoff = ZERO_EIGEN_RATIO * top;
    let nonzero: Vec<usize> = (0..re.values.len()).filter(|&i| re.values[i] > cutoff).collect();
    let (lambda_min, lambda_max) = if nonzero.is_empty() {
        (0.0, 0.0)
    } else {
        nonzero
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| (lo.min(re.values[i]), hi.max(re.values[i])))
    };
    let range_mass: f64 = nonzero.iter().map(|&i| a[i] * a[i]).sum();
    let total_mass = a.norm_squared();
    let m = model.m;
    Ok(Spectrum {
        gap_condition: (s_max - s_min) * (lambda_max - lambda_min) < m + s_min,
        outside_range: range_mass <= 1e-24 * total_mass.max(f64::MIN_POSITIVE) || total_mass == 0.0,
        s: se.values,
        u: se.vectors,
        lambda: re.values,
        e: re.vectors,
        a,
        m,
        s_min,
        s_max,
        lambda_min,
        lambda_max,
    })
}

/// `h₁(γ̄)`: `a`-weighted average of the eigenvalues of `R` under the damping `(1 + λγ̄)⁻²`.
pub fn h1(gamma_bar: f64, spectrum: &Spectrum) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (l, a) in spectrum.lambda.iter().zip(spectrum.a.iter()) {
        let w = a * a / ((1.0 + l * gamma_bar) * (1.0 + l * gamma_bar));
        num += l * w;
        den += w;
    }
    if den == 0.0 {
        return Err(Error::DegenerateCorrelation);
    }
    Ok(num / den)
}

pub fn h2(gamma: f64, spectrum: &Spectrum) -> f64 {
    let m = spectrum.m;
    let (mut sq, mut cube) = (0.0, 0.0);
    for s in spectrum.s.iter() {
        let den = (m + s * gamma) * (m + s * gamma);
        sq += s * s / den;
        cube += s * s * s / den;
    }
    1.0 / (1.0 + m * sq / cube)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transfer {
    pub h1: f64,
    pub h2: f64,
    /// `h₁(h₂(γ)) + 1`.
    pub composite: f64,
}

/// `h₁` evaluated at `gamma_bar`, `h₂` at `gamma`, and the composite map at `gamma`.
pub fn transfer_functions(gamma: f64, gamma_bar: f64, spectrum: &Spectrum) -> Result<Transfer> {
    let inner = h2(gamma, spectrum);
    Ok(Transfer { h1: h1(gamma_bar, spectrum)?, h2: inner, composite: h1(inner, spectrum)? + 1.0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub start: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 10_000, start: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub gamma: f64,
    pub iterations: usize,
    /// `|γ − h₁(h₂(γ)) − 1|` at the returned point.
    pub residual: f64,
    /// The spectral gap condition that makes the map a contraction.
    pub contraction: bool,
    pub converged: bool,
}

/// Plain iteration of `γ ← h₁(h₂(γ)) + 1`.
pub fn solve_fixed_point(spectrum: &Spectrum, options: FixedPointOptions) -> Result<FixedPoint> {
    let map = |g: f64| -> Result<f64> { Ok(h1(h2(g, spectrum), spectrum)? + 1.0) };
    let mut gamma = options.start;
    let mut best = (f64::INFINITY, gamma);
    for it in 1..=options.max_iter {
        let next = map(gamma)?;
        let step = (next - gamma).abs();
        if step < best.0 {
            best = (step, gamma);
        }
        gamma = next;
        if step <= options.tol {
            return Ok(FixedPoint {
                gamma,
                iterations: it,
                residual: (gamma - map(gamma)?).abs(),
                contraction: spectrum.gap_condition,
                converged: true,
            });
        }
    }
    let gamma = best.1;
    Ok(FixedPoint {
        gamma,
        iterations: options.max_iter,
        residual: (gamma - map(gamma)?).abs(),
        contraction: spectrum.gap_condition,
        converged: false,
    })
}

#[derive(Debug, Clone)]
pub struct LandscapeSolution {
    pub gamma: f64,
    pub h2: f64,
    /// Optimal preconditioner, already multiplied by `scale`.
    pub p: Mat,
    pub p_direction: Mat,
    pub omega: Vector,
    pub scale: f64,
    pub risk: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub gap_condition: bool,
    pub outside_range: bool,
}

/// Risk-minimizing multiple `c` of `p` for fixed `ω`.
fn optimal_scale(p: &Mat, omega: &Vector, model: &RiskModel) -> f64 {
    let (a, b, c) = model.traces(p);
    let w = weight_stats(omega, model);
    let den = model.m * w.norm_sq * b + w.quad * c;
    if den > 0.0 {
        a * w.overlap / den
    } else {
        0.0
    }
}

/// Global minimizer of the risk over `(P, ω)`.
///
/// The preconditioner direction is `((γ*/M) Σ + I)⁻¹` and the weights are
/// `(h₂(γ*) R + I)⁻¹ r`; the joint scale is folded into `P`.
pub fn optimal_wpgd(model: &RiskModel) -> Result<LandscapeSolution> {
    optimal_wpgd_with(model, FixedPointOptions::default())
}

pub fn optimal_wpgd_with(model: &RiskModel, options: FixedPointOptions) -> Result<LandscapeSolution> {
    let spectrum = spectral_setup(model)?;
    let fp = solve_fixed_point(&spectrum, options)?;
    if !fp.converged {
        return Err(Error::FixedPoint { iterations: fp.iterations, residual: fp.residual });
    }
    let gamma = fp.gamma;
    let m = model.m;
    let eig = SymEigen::new(&model.sigma, "feature covariance")?;
    let p_direction = eig.map(|s| 1.0 / (gamma * s / m + 1.0));
    let inner = h2(gamma, &spectrum);
    let n = model.n();
    let system = model.corr.r_matrix() * inner + Mat::identity(n, n);
    let omega = system.cholesky().ok_or(Error::NotSpd)?.solve(model.corr.r_vector());
    let scale = optimal_scale(&p_direction, &omega, model);
    let p = &p_direction * scale;
    let risk = closed_form_risk(&p, &omega, model)?;
    Ok(LandscapeSolution {
        gamma,
        h2: inner,
        p,
        p_direction,
        omega,
        scale,
        risk,
        converged: fp.converged,
        iterations: fp.iterations,
        residual: fp.residual,
        gap_condition: spectrum.gap_condition,
        outside_range: spectrum.outside_range,
    })
}

/// Optimal weighted-descent risk for `Σ = I`: `d + σ² − d·rᵀ(R + (d + σ² + 1)I)⁻¹ r`.
pub fn wpgd_risk_isotropic(corr: &CorrelationStructure, d: usize, noise: f64) -> Result<f64> {
    let df = d as f64;
    let shift = df + noise * noise + 1.0;
    let n = corr.n();
    let r = corr.r_vector();
    let shifted = corr.r_matrix() + Mat::identity(n, n) * shift;
    let solved = shifted.cholesky().ok_or(Error::NotSpd)?.solve(r);
    Ok(df + noise * noise - df * r.dot(&solved))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionRisk {
    /// Best risk with uniform weights.
    pub att: f64,
    /// Best risk with free weights.
    pub wpgd: f64,
    /// Closed-form value of `att − wpgd`.
    pub gap: f64,
    /// `att − wpgd` by subtraction.
    pub direct_gap: f64,
}

/// Optimal linear-attention (uniform-weight) risk and its gap to the weighted optimum, `Σ = I` only.
pub fn optimal_att_risk(model: &RiskModel) -> Result<AttentionRisk> {
    if !is_identity(&model.sigma) {
        return Err(Error::Unsupported("uniform-weight closed form needs an identity feature covariance"));
    }
    let d = model.d() as f64;
    let sig2 = model.noise * model.noise;
    let corr = &model.corr;
    let n = corr.n();
    let r = corr.r_vector();
    let ones = Vector::from_element(n, 1.0);
    let one_r = ones.dot(r);
    let one_r_one = ones.dot(&(corr.r_matrix() * &ones));
    let shift = d + sig2 + 1.0;
    let att = if n == 0 { d + sig2 } else { d + sig2 - d * one_r * one_r / (n as f64 * shift + one_r_one) };
    let wpgd = wpgd_risk_isotropic(corr, model.d(), model.noise)?;
    let gap = if n == 0 {
        0.0
    } else {
        let shifted = corr.r_matrix() + Mat::identity(n, n) * shift;
        let solved = shifted.cholesky().ok_or(Error::NotSpd)?.solve(r);
        d * (r.dot(&solved) - one_r * one_r / (n as f64 * shift + one_r_one))
    };
    Ok(AttentionRisk { att, wpgd, gap, direct_gap: att - wpgd })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstrainedOptions {
    /// Stop when successive risks differ by at most this much.
    pub tol: f64,
    pub max_rounds: usize,
    pub qp_max_iter: usize,
}

impl Default for ConstrainedOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_rounds: 10_000, qp_max_iter: 200_000 }
    }
}

#[derive(Debug, Clone)]
pub struct ConstrainedSolution {
    /// One weight per segment, non-decreasing in `[0, 1]`.
    pub segment_weights: Vec<f64>,
    pub omega: Vector,
    pub p: Mat,
    pub risk: f64,
    pub rounds: usize,
    pub converged: bool,
}

/// Best preconditioner for fixed weights: `(ωᵀr) (M‖ω‖² I + (‖ω‖² + ωᵀRω) Σ)⁻¹`.
pub fn optimal_preconditioner(omega: &Vector, model: &RiskModel) -> Result<Mat> {
    check_len(omega.len(), model.n(), "weights")?;
    let w = weight_stats(omega, model);
    let d = model.d();
    if w.norm_sq == 0.0 {
        return Ok(Mat::zeros(d, d));
    }
    let eig = SymEigen::new(&model.sigma, "feature covariance")?;
    let base = model.m * w.norm_sq;
    Ok(eig.map(|s| w.overlap / (base + w.quad * s)))
}

fn segment_objective(h: &Mat, g: &Vector, v: &Vector) -> f64 {
    0.5 * v.dot(&(h * v)) + g.dot(v)
}

/// Minimizes `½ vᵀHv + gᵀv` over the monotone unit box by accelerated projected gradient.
fn solve_segment_qp(h: &Mat, g: &Vector, start: &Vector, max_iter: usize) -> Vector {
    let lip =
        SymEigen::new(h, "segment quadratic").map(|e| e.values.iter().copied().fold(0.0, f64::max)).unwrap_or(0.0);
    if !(lip > 0.0) {
        return start.clone();
    }
    let project = |v: &Vector| Vector::from_vec(project_monotone_box(v.as_slice()));
    let mut v = project(start);
    let mut y = v.clone();
    let mut t = 1.0f64;
    let mut value = segment_objective(h, g, &v);
    for _ in 0..max_iter {
        let grad = h * &y + g;
        let next = project(&(&y - grad / lip));
        let next_value = segment_objective(h, g, &next);
        let moved = (&next - &v).amax();
        if next_value > value {
            // restart momentum
            y = v.clone();
            t = 1.0;
            continue;
        }
        let t_next = (1.0 + libm::sqrt(1.0 + 4.0 * t * t)) / 2.0;
        y = &next + (&next - &v) * ((t - 1.0) / t_next);
        t = t_next;
        v = next;
        value = next_value;
        if moved <= 1e-15 * (1.0 + v.amax()) {
            break;
        }
    }
    v
}

/// Minimum of the risk over all `P` and over weights that are constant on each segment
/// and non-decreasing across segments in `[0, 1]`.
pub fn constrained_optimum(model: &RiskModel) -> Result<ConstrainedSolution> {
    constrained_optimum_with(model, ConstrainedOptions::default())
}

pub fn constrained_optimum_with(model: &RiskModel, options: ConstrainedOptions) -> Result<ConstrainedSolution> {
    let corr = &model.corr;
    let k = corr.num_segments();
    let e = corr.expansion();
    let ete = e.tr_mul(&e);
    let ere = e.tr_mul(&(corr.r_matrix() * &e));
    let etr = e.tr_mul(corr.r_vector());

    let mut v = Vector::from_element(k, 1.0);
    let mut omega = &e * &v;
    let mut p = optimal_preconditioner(&omega, model)?;
    let mut risk = closed_form_risk(&p, &omega, model)?;
    let mut converged = false;
    let mut rounds = 0;
    while rounds < options.max_rounds {
        rounds += 1;
        let (a, b, c) = model.traces(&p);
        let h = (&ete * (model.m * b + c) + &ere * c) * 2.0;
        let g = &etr * (-2.0 * a);
        v = solve_segment_qp(&h, &g, &v, options.qp_max_iter);
        omega = &e * &v;
        p = optimal_preconditioner(&omega, model)?;
        let next = closed_form_risk(&p, &omega, model)?;
        let change = (risk - next).abs();
        risk = next;
        if change <= options.tol {
            converged = true;
            break;
        }
    }
    Ok(ConstrainedSolution { segment_weights: v.iter().copied().collect(), omega, p, risk, rounds, converged })
}

fn check_targets(targets: &[f64]) -> Result<()> {
    if targets.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::TargetRange(""));
    }
    Ok(())
}

/// Gate weights on the contextual coordinates that give preactivation `targets[a][k]`
/// on the token carrying `c̄_k`.
fn context_gate_rows(contexts: &ContextVectors, targets: &[Vec<f64>]) -> Result<Mat> {
    let count = contexts.count();
    let p = contexts.p();
    let c = Mat::from_fn(p, count, |i, k| contexts.get(k)[i]);
    let gram = c.tr_mul(&c).cholesky().ok_or(Error::DependentContexts)?;
    let mut rows = Mat::zeros(targets.len(), p);
    for (a, t) in targets.iter().enumerate() {
        let w = &c * gram.solve(&Vector::from_column_slice(t));
        rows.set_row(a, &w.transpose());
    }
    Ok(rows)
}

/// Preactivation that the clipped-linear gate maps to exactly one.
const OPEN: f64 = 2.0;

fn check_contexts(targets: &[f64], contexts: &ContextVectors) -> Result<()> {
    let k = targets.len();
    if contexts.count() != k + 1 {
        return Err(Error::ContextCount { expected: k + 1, found: contexts.count() });
    }
    if contexts.p() < k + 1 {
        return Err(Error::ContextDimension { segments: k, needed: k + 1, p: contexts.p() });
    }
    Ok(())
}

/// Vector-gating parameters whose induced weighting is `targets[k]` on every example of segment `k`.
#[derive(Debug, Clone)]
pub struct VectorGatingRealization {
    pub gate_weights: Mat,
    pub u: Vector,
    pub head: Vector,
    pub activation: Activation,
    pub d: usize,
    pub p: usize,
}

impl VectorGatingRealization {
    pub fn attention_model(&self, p_k: Mat, p_q: Mat) -> Result<AttentionModel> {
        Ok(build_construction(Construction::DelimiterValueVector { p_k, p_q, p: self.p, u: self.u.clone() })?
            .with_head(self.head.clone())
            .with_gating(GatingSpec::vector(self.gate_weights.clone()).with_activation(self.activation)))
    }
}

/// Realizes arbitrary segment weights with per-row gates.
///
/// Row `a` of the gate closes only at delimiter `a` (row 0 never closes), so it weights
/// segments `a+1, …, K` by one and earlier segments by zero. Giving row `a` the increment
/// `targets[a] − targets[a−1]` through `u` telescopes to the targets.
pub fn realize_vector_gating(targets: &[f64], d: usize, contexts: &ContextVectors) -> Result<VectorGatingRealization> {
    check_targets(targets)?;
    check_contexts(targets, contexts)?;
    let k = targets.len();
    let p = contexts.p();
    let m = d + 1 + p;
    let pre: Vec<Vec<f64>> =
        (0..k).map(|a| (0..=k).map(|ctx| if a > 0 && ctx == a { -OPEN } else { OPEN }).collect()).collect();
    let rows = context_gate_rows(contexts, &pre)?;
    let mut gate_weights = Mat::zeros(m, m);
    gate_weights.view_mut((0, d + 1), (k, p)).copy_from(&rows);
    let mut u = Vector::zeros(m);
    let mut head = Vector::zeros(m);
    let mut prev = 0.0;
    for (a, t) in targets.iter().enumerate() {
        u[a] = t - prev;
        head[a] = 1.0;
        prev = *t;
    }
    Ok(VectorGatingRealization { gate_weights, u, head, activation: Activation::HardClip, d, p })
}

/// Scalar-gating parameters realizing non-decreasing segment weights.
#[derive(Debug, Clone)]
pub struct ScalarGatingRealization {
    pub gate_weights: Vector,
    pub activation: Activation,
    pub d: usize,
    pub p: usize,
}

impl ScalarGatingRealization {
    pub fn attention_model(&self, p_k: Mat, p_q: Mat) -> Result<AttentionModel> {
        Ok(build_construction(Construction::Delimiter { p_k, p_q, p: self.p })?
            .with_gating(GatingSpec::scalar(self.gate_weights.clone()).with_activation(self.activation)))
    }
}

/// Delimiter `k` gets gate `targets[k] / targets[k+1]` (the last one `targets[K]`); data and query gates are one.
pub fn realize_scalar_gating(targets: &[f64], d: usize, contexts: &ContextVectors) -> Result<ScalarGatingRealization> {
    check_targets(targets)?;
    if targets.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::TargetRange(" and be non-decreasing"));
    }
    check_contexts(targets, contexts)?;
    let k = targets.len();
    let mut pre = vec![OPEN; k + 1];
    for s in 0..k {
        pre[s + 1] = match targets.get(s + 1) {
            Some(&next) if next > 0.0 => targets[s] / next,
            Some(_) => 0.0,
            None => targets[s],
        };
    }
    let rows = context_gate_rows(contexts, &[pre])?;
    let p = contexts.p();
    let mut gate_weights = Vector::zeros(d + 1 + p);
    for j in 0..p {
        gate_weights[d + 1 + j] = rows[(0, j)];
    }
    Ok(ScalarGatingRealization { gate_weights, activation: Activation::HardClip, d, p })
}
