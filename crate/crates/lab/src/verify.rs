//! Randomized invariant suites. Each check reports the worst deviation it saw and the
//! tolerance it is held to.

use std::fmt;
use std::str::FromStr;

use anyhow::{bail, Result};
use gla_core::data::{build_correlation_structure, empirical_correlation, sample_task_ensemble, Segment};
use gla_core::gla::{
    build_construction, gla_multilayer_forward, gla_predict, induced_weighting, AttentionModel, Construction,
    GatingSpec,
};
use gla_core::landscape::{
    closed_form_risk, constrained_optimum, h2, optimal_att_risk, optimal_wpgd, risk_gradient, solve_fixed_point,
    spectral_setup, wpgd_risk_isotropic, FixedPointOptions, RiskModel,
};
use gla_core::linalg::{Mat, Vector};
use gla_core::rng::{derive_seed, stream};
use gla_core::train::{minibatch_gradient, EpisodeSampler, Params, TrainConfig, Variant};
use gla_core::wpgd::{
    causal_pgd_multilayer, wpgd_multilayer, wpgd_predict, LayerWeights, PgdMode, SignConvention, Weights, WpgdParams,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Equivalence,
    Landscape,
    Gradients,
    Moments,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Equivalence, Suite::Landscape, Suite::Gradients, Suite::Moments];
}

impl FromStr for Suite {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equivalence" => Ok(Suite::Equivalence),
            "landscape" => Ok(Suite::Landscape),
            "gradients" => Ok(Suite::Gradients),
            "moments" => Ok(Suite::Moments),
            _ => bail!("unknown suite {s:?} (equivalence, landscape, gradients, moments)"),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Suite::Equivalence => "equivalence",
            Suite::Landscape => "landscape",
            Suite::Gradients => "gradients",
            Suite::Moments => "moments",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value ≤ tolerance`.
    pub fn at_most(name: &'static str, value: f64, tolerance: f64) -> Self {
        Self { name, value, tolerance, passed: value <= tolerance }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {}: {} = {:.3e} (tolerance {:.1e})",
                if c.passed { "PASS" } else { "FAIL" },
                self.suite,
                c.name,
                c.value,
                c.tolerance
            )?;
        }
        Ok(())
    }
}

pub fn run_verify(suite: Suite, seed: u64, instances: usize) -> Result<Report> {
    let checks = match suite {
        Suite::Equivalence => vec![
            Check::at_most("max |gla - wpgd|", gla_wpgd_deviation(seed, instances)?, 1e-10),
            Check::at_most(
                "max multi-layer readout deviation",
                multilayer_deviation(seed, instances.div_ceil(5).max(1), 4)?,
                1e-8,
            ),
        ],
        Suite::Landscape => {
            let fp = fixed_point_checks(seed, instances)?;
            let f = optimal_risk_checks(seed, instances)?;
            vec![
                Check::at_most("multistart spread", fp.spread, 1e-9),
                Check::at_most("fixed-point residual", fp.residual, 1e-12),
                Check::at_most("|h2 - 1/(d+s^2+1)| at identity covariance", fp.isotropic_h2, 1e-12),
                Check::at_most("|gamma - 2| scalar instance", fp.scalar_gamma, 1e-10),
                Check::at_most("|risk - 0.88| scalar instance", fp.scalar_risk, 1e-10),
                Check::at_most("general vs identity-covariance optimum", f.fast_path, 1e-10),
                Check::at_most("gap formula vs subtraction", f.gap_formula, 1e-10),
                Check::at_most("ordering violation", f.ordering_violation, 1e-9),
            ]
        }
        Suite::Gradients => vec![
            Check::at_most("risk gradient relative error", risk_gradient_error(seed, instances)?, 1e-6),
            Check::at_most("trainer adjoint relative error", trainer_gradient_error(seed)?, 1e-6),
        ],
        Suite::Moments => {
            let m = moment_checks(seed, 1_000_000)?;
            vec![
                Check::at_most("quartic identity |z|", m.quartic_z, 3.0),
                Check::at_most("task correlation max error x sqrt(N)", m.correlation_scaled, 5.0),
            ]
        }
    };
    Ok(Report { suite, checks })
}

fn instance_rng(seed: u64, label: u64) -> ChaCha8Rng {
    stream(derive_seed(seed, label), 0)
}

fn gauss(r: usize, c: usize, rng: &mut impl Rng) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn gauss_vec(n: usize, rng: &mut impl Rng) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn split(z: &Mat, d: usize) -> (Mat, Vector, Vector) {
    let n = z.nrows() - 1;
    (z.view((0, 0), (n, d)).into_owned(), Vector::from_fn(n, |i, _| z[(i, d)]), Vector::from_fn(d, |j, _| z[(n, j)]))
}

/// Largest `|f_GLA − f_WPGD|` over random prompts with `n ≤ 64`, `d ≤ 16` and gates in `[0.05, 1]`.
///
/// Instances cycle through scalar gates, general per-entry gates and value-vector
/// readouts with row gates.
pub fn gla_wpgd_deviation(seed: u64, instances: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for s in 0..instances {
        let mut rng = instance_rng(seed, s as u64);
        let n = rng.random_range(1..=64);
        let d = rng.random_range(1..=16);
        let m = d + 1;
        let scale = 1.0 / (d as f64).sqrt();
        let (pk, pq) = (gauss(d, d, &mut rng) * scale, gauss(d, d, &mut rng) * scale);
        let mut z = gauss(n + 1, m, &mut rng);
        z[(n, d)] = 0.0;
        let rows: Vec<usize> = (0..n).collect();
        let (construction, head, gates) = match s % 3 {
            0 => (
                Construction::Restricted { p_k: pk.clone(), p_q: pq.clone() },
                None,
                (0..=n).map(|_| Mat::from_element(m, m, rng.random_range(0.05..=1.0))).collect::<Vec<_>>(),
            ),
            1 => (
                Construction::Restricted { p_k: pk.clone(), p_q: pq.clone() },
                None,
                (0..=n).map(|_| Mat::from_fn(m, m, |_, _| rng.random_range(0.05..=1.0))).collect(),
            ),
            _ => {
                let u = gauss_vec(m, &mut rng);
                let h = gauss_vec(m, &mut rng);
                let gates = (0..=n)
                    .map(|_| {
                        let row = Vector::from_fn(m, |_, _| rng.random_range(0.05..=1.0));
                        Mat::from_fn(m, m, |a, _| row[a])
                    })
                    .collect();
                (Construction::ValueVector { p_k: pk.clone(), p_q: pq.clone(), u }, Some(h), gates)
            }
        };
        let mut model = build_construction(construction.clone())?.with_gating(GatingSpec::explicit(gates.clone()));
        if let Some(h) = &head {
            model = model.with_head(h.clone());
        }
        let weighting = induced_weighting(&gates, &construction, head.as_ref(), &rows)?;
        let (xs, y, x) = split(&z, d);
        let reference =
            wpgd_predict(&x, &xs, &y, &WpgdParams { p1: pk, p2: pq, weights: Weights::Matrix(weighting.matrix) })?;
        worst = worst.max((gla_predict(&z, &model)? - reference).abs());
    }
    Ok(worst)
}

fn descent_layers(layers: &[LayerWeights], gating: &GatingSpec) -> Result<Vec<AttentionModel>> {
    layers
        .iter()
        .map(|l| {
            Ok(build_construction(Construction::Restricted { p_k: l.p_k.clone(), p_q: -&l.p_q })?
                .with_gating(gating.clone()))
        })
        .collect()
}

/// Largest per-token readout deviation between stacked GLA layers and multi-step weighted
/// descent, for every depth `1..=max_layers` and `seeds` prompts per depth. Each prompt is
/// checked with random gates and with all gates one (against causal preconditioned descent).
pub fn multilayer_deviation(seed: u64, seeds: usize, max_layers: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for l in 1..=max_layers {
        for s in 0..seeds {
            let mut rng = instance_rng(seed ^ 0x4d4c, (l * 1000 + s) as u64);
            let n = rng.random_range(1..=16);
            let d = rng.random_range(1..=6);
            let m = d + 1;
            let scale = 0.5 / (d as f64).sqrt();
            let layers: Vec<LayerWeights> = (0..l)
                .map(|_| LayerWeights { p_k: gauss(d, d, &mut rng) * scale, p_q: gauss(d, d, &mut rng) * scale })
                .collect();
            let mut z = gauss(n + 1, m, &mut rng);
            z[(n, d)] = 0.0;
            let (xs, y, x) = split(&z, d);

            let gates: Vec<Mat> = (0..=n).map(|_| Mat::from_fn(m, m, |_, _| rng.random_range(0.05..=1.0))).collect();
            let trace = gla_multilayer_forward(&z, &descent_layers(&layers, &GatingSpec::explicit(gates.clone()))?, d)?;
            let ident = Construction::Restricted { p_k: Mat::identity(d, d), p_q: Mat::identity(d, d) };
            let rows: Vec<usize> = (0..n).collect();
            let omega = induced_weighting(&gates, &ident, None, &rows)?.matrix;
            let oracle = wpgd_multilayer(&xs, &y, &x, &layers, &omega, SignConvention::Descent)?;
            for (got, want) in trace.readouts.iter().zip(&oracle) {
                worst = worst.max((got - &want.readouts).abs().max());
            }

            let trace = gla_multilayer_forward(&z, &descent_layers(&layers, &GatingSpec::all_ones())?, d)?;
            let ps: Vec<Mat> = layers.iter().map(|w| &w.p_q * w.p_k.transpose()).collect();
            let oracle = causal_pgd_multilayer(&xs, &y, &x, &ps, PgdMode::Causal)?;
            for (got, want) in trace.readouts.iter().zip(&oracle) {
                worst = worst.max((got - &want.readouts).abs().max());
            }
        }
    }
    Ok(worst)
}

fn random_spd(d: usize, rng: &mut impl Rng) -> Mat {
    let a = gauss(d, d, rng);
    &a * a.transpose() / d as f64 + Mat::identity(d, d) * 0.5
}

/// Random segments with task-query correlations whose squares sum below one.
pub fn random_segments(rng: &mut impl Rng, max_segments: usize, max_len: usize) -> Vec<Segment> {
    let k = rng.random_range(1..=max_segments);
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = raw.iter().map(|r| r * r).sum::<f64>().sqrt();
    let target = rng.random_range(0.1..0.95);
    raw.iter().map(|r| Segment::new(rng.random_range(1..=max_len), r / norm.max(1e-12) * target)).collect()
}

/// Random risk model: covariance SPD (or identity), a few segments, small noise.
pub fn random_risk_model(rng: &mut impl Rng, identity: bool) -> Result<RiskModel> {
    let d = rng.random_range(1..=4);
    let sigma = if identity { Mat::identity(d, d) } else { random_spd(d, rng) };
    let corr = build_correlation_structure(&random_segments(rng, 3, 5), None)?;
    Ok(RiskModel::new(sigma, corr, rng.random_range(0.0..0.7))?)
}

/// Worst relative error of the analytic risk gradient against central differences.
///
/// Per point the error is `max_i |fd_i − g_i| / max(1, max_i |g_i|)`.
pub fn risk_gradient_error(seed: u64, points: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for s in 0..points {
        let mut rng = instance_rng(seed ^ 0x6772, s as u64);
        let model = random_risk_model(&mut rng, false)?;
        let (d, n) = (model.d(), model.n());
        let p = gauss(d, d, &mut rng) * 0.3;
        let omega = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let (gp, gw) = risk_gradient(&p, &omega, &model)?;
        let h = 1e-5;
        let mut fd_p = Mat::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let (mut a, mut b) = (p.clone(), p.clone());
                a[(i, j)] += h;
                b[(i, j)] -= h;
                fd_p[(i, j)] =
                    (closed_form_risk(&a, &omega, &model)? - closed_form_risk(&b, &omega, &model)?) / (2.0 * h);
            }
        }
        let mut fd_w = Vector::zeros(n);
        for i in 0..n {
            let (mut a, mut b) = (omega.clone(), omega.clone());
            a[i] += h;
            b[i] -= h;
            fd_w[i] = (closed_form_risk(&p, &a, &model)? - closed_form_risk(&p, &b, &model)?) / (2.0 * h);
        }
        let scale = gp.amax().max(gw.amax()).max(1.0);
        let err = (fd_p - gp).amax().max((fd_w - gw).amax()) / scale;
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Worst relative error of the trainer's backward pass against central differences,
/// over every variant and stacks of up to three layers, on a tiny problem (`d = 2`, `n = 4`).
/// Normalized as in [`risk_gradient_error`].
pub fn trainer_gradient_error(seed: u64) -> Result<f64> {
    let cases = [
        (Variant::LinAtt, 1),
        (Variant::GlaScalar, 1),
        (Variant::GlaScalarNoDelim, 1),
        (Variant::GlaVector, 1),
        (Variant::GlaScalar, 2),
        (Variant::GlaScalar, 3),
    ];
    let mut worst: f64 = 0.0;
    for (c, (variant, layers)) in cases.into_iter().enumerate() {
        let config = TrainConfig {
            variant,
            layers,
            d: 2,
            p: 3,
            segment_lens: vec![2, 2],
            corr: vec![0.3, 0.7],
            sigma: 0.1,
            ..TrainConfig::default()
        };
        let spec = config.task_spec()?;
        let shape = config.shape()?;
        let params = Params::random(shape, 0.5, &mut instance_rng(seed, c as u64));
        let contexts = gla_core::data::ContextVectors::sample(2, 3, &mut instance_rng(seed, 100 + c as u64));
        let ctx = variant.gated().then_some(&contexts);
        let loss = |params: &Params, grad: &mut [f64]| {
            let mut sampler = EpisodeSampler::new(&spec, variant.delimiters());
            minibatch_gradient(params, ctx, &mut sampler, 4, &mut instance_rng(seed, 200 + c as u64), grad)
        };
        let mut grad = vec![0.0; params.values.len()];
        loss(&params, &mut grad);
        let mut scratch = grad.clone();
        let h = 1e-6;
        let mut err: f64 = 0.0;
        for (i, g) in grad.iter().enumerate() {
            let (mut a, mut b) = (params.clone(), params.clone());
            a.values[i] += h;
            b.values[i] -= h;
            let fd = (loss(&a, &mut scratch) - loss(&b, &mut scratch)) / (2.0 * h);
            err = err.max((fd - g).abs());
        }
        let scale = grad.iter().fold(1.0_f64, |m, g| m.max(g.abs()));
        worst = worst.max(err / scale);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointReport {
    /// Largest spread of the returned root across starting points.
    pub spread: f64,
    /// Largest residual of a returned root.
    pub residual: f64,
    pub isotropic_h2: f64,
    pub scalar_gamma: f64,
    pub scalar_risk: f64,
    /// Instances that satisfied the spectral gap condition.
    pub tested: usize,
}

const STARTS: [f64; 6] = [1.0, 1.5, 3.0, 10.0, 100.0, 1000.0];

/// Multistart fixed-point solves on random instances satisfying the gap condition, plus
/// the identity-covariance and one-dimensional hand-derived cases.
pub fn fixed_point_checks(seed: u64, instances: usize) -> Result<FixedPointReport> {
    let mut report = FixedPointReport {
        spread: 0.0,
        residual: 0.0,
        isotropic_h2: 0.0,
        scalar_gamma: 0.0,
        scalar_risk: 0.0,
        tested: 0,
    };
    let mut s = 0;
    while report.tested < instances {
        let mut rng = instance_rng(seed ^ 0x6670, s);
        s += 1;
        let identity = s % 4 == 0;
        let model = random_risk_model(&mut rng, identity)?;
        let spectrum = spectral_setup(&model)?;
        if !spectrum.gap_condition || spectrum.outside_range {
            continue;
        }
        report.tested += 1;
        let mut roots = Vec::new();
        for start in STARTS {
            let fp = solve_fixed_point(&spectrum, FixedPointOptions { start, ..Default::default() })?;
            report.residual = report.residual.max(fp.residual);
            roots.push(fp.gamma);
        }
        let hi = roots.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = roots.iter().copied().fold(f64::INFINITY, f64::min);
        report.spread = report.spread.max(hi - lo);
        if identity {
            let sol = optimal_wpgd(&model)?;
            let sig2 = model.noise() * model.noise();
            let expect = 1.0 / (model.d() as f64 + sig2 + 1.0);
            report.isotropic_h2 = report.isotropic_h2.max((h2(sol.gamma, &spectrum) - expect).abs());
        }
    }
    let scalar = RiskModel::isotropic(1, build_correlation_structure(&[Segment::new(1, 0.6)], None)?, 0.0)?;
    let sol = optimal_wpgd(&scalar)?;
    report.scalar_gamma = (sol.gamma - 2.0).abs();
    report.scalar_risk = (sol.risk - 0.88).abs();
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalRiskReport {
    pub fast_path: f64,
    pub gap_formula: f64,
    /// Largest amount by which `L*_WPGD ≤ L^{*,W} ≤ L*_ATT` is violated.
    pub ordering_violation: f64,
}

/// Identity-covariance optimum, gap formula and the ordering of the three optima.
pub fn optimal_risk_checks(seed: u64, instances: usize) -> Result<OptimalRiskReport> {
    let mut report = OptimalRiskReport { fast_path: 0.0, gap_formula: 0.0, ordering_violation: 0.0 };
    for s in 0..instances {
        let mut rng = instance_rng(seed ^ 0x6f72, s as u64);
        let model = random_risk_model(&mut rng, true)?;
        let fast = wpgd_risk_isotropic(model.correlation(), model.d(), model.noise())?;
        if let Ok(sol) = optimal_wpgd(&model) {
            report.fast_path = report.fast_path.max((sol.risk - fast).abs());
        }
        let att = optimal_att_risk(&model)?;
        report.gap_formula = report.gap_formula.max((att.gap - att.direct_gap).abs());
        let constrained = constrained_optimum(&model)?.risk;
        let violation = (fast - constrained).max(constrained - att.att).max(0.0);
        report.ordering_violation = report.ordering_violation.max(violation);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentReport {
    /// `(MC − exact) / stderr` for `E[(uᵀWu)(uᵀW̃u)] = tr W tr W̃ + 2 tr(W W̃)`.
    pub quartic_z: f64,
    /// `‖R̂ − R‖_max · √N` over sampled task ensembles.
    pub correlation_scaled: f64,
}

pub fn moment_checks(seed: u64, samples: usize) -> Result<MomentReport> {
    let mut rng = instance_rng(seed ^ 0x6d6f, 0);
    let d = 4;
    let sym = |rng: &mut ChaCha8Rng| {
        let a = gauss(d, d, rng);
        (&a + a.transpose()) * 0.5
    };
    let (w1, w2) = (sym(&mut rng), sym(&mut rng));
    let exact = w1.trace() * w2.trace() + 2.0 * (&w1 * &w2).trace();
    let (mut mean, mut m2) = (0.0, 0.0);
    for t in 0..samples {
        let u = gauss_vec(d, &mut rng);
        let v = u.dot(&(&w1 * &u)) * u.dot(&(&w2 * &u));
        let delta = v - mean;
        mean += delta / (t + 1) as f64;
        m2 += delta * (v - mean);
    }
    let stderr = (m2 / ((samples - 1) * samples) as f64).sqrt();

    let cross = Mat::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]);
    let structure = build_correlation_structure(&[Segment::new(2, 0.3), Segment::new(3, 0.5)], Some(&cross))?;
    let draws = 20_000;
    let ensembles: Vec<_> = (0..draws).map(|_| sample_task_ensemble(&structure, 3, &mut rng)).collect();
    let (r_hat, r_vec_hat) = empirical_correlation(&ensembles)?;
    let err = (r_hat - structure.r_matrix()).amax().max((r_vec_hat - structure.r_vector()).amax());
    Ok(MomentReport { quartic_z: (mean - exact).abs() / stderr, correlation_scaled: err * (draws as f64).sqrt() })
}
