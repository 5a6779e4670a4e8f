//! Monte Carlo risk estimates and minibatch Adam training of attention models.

mod model;
mod sampler;

pub use model::{accumulate_gradient, forward, ContextBias, Params, Shape, Variant, Workspace};
pub use sampler::{Episode, EpisodeSampler, TaskSpec};

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::{build_correlation_structure, ContextVectors, Segment};
use crate::error::{Error, Result, TrialFailure};
use crate::rng::{derive_seed, purpose, stream};

/// Sample mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Mean squared query error of `params` over `n_samples` fresh prompts.
///
/// With a single sample the standard error is reported as infinite.
pub fn estimate_risk_mc<R: Rng + ?Sized>(
    params: &Params,
    spec: &TaskSpec,
    contexts: Option<&ContextVectors>,
    n_samples: usize,
    rng: &mut R,
) -> Result<RiskEstimate> {
    if n_samples == 0 {
        return Err(Error::Empty("Monte Carlo samples"));
    }
    let variant = params.shape.variant;
    if params.shape.d != spec.d {
        return Err(Error::Dimension { what: "model feature dimension", expected: spec.d, found: params.shape.d });
    }
    if variant.gated() && contexts.is_none() {
        return Err(Error::MissingContexts);
    }
    let bias = ContextBias::new(params, contexts);
    let mut sampler = EpisodeSampler::new(spec, variant.delimiters());
    let mut ep = Episode::default();
    let mut ws = Workspace::default();
    let (mut mean, mut m2) = (0.0, 0.0);
    for t in 0..n_samples {
        sampler.sample(rng, &mut ep);
        let err = forward(params, &bias, &ep, &mut ws) - ep.target;
        let loss = err * err;
        let delta = loss - mean;
        mean += delta / (t + 1) as f64;
        m2 += delta * (loss - mean);
    }
    let stderr = if n_samples > 1 { libm::sqrt(m2 / ((n_samples - 1) * n_samples) as f64) } else { f64::INFINITY };
    Ok(RiskEstimate { mean, stderr })
}

/// Mean squared query error of the weighted estimator `x_qᵀ P Σ_i ω_i y_i x_i`.
pub fn wpgd_risk_mc<R: Rng + ?Sized>(
    p: &crate::linalg::Mat,
    omega: &crate::linalg::Vector,
    spec: &TaskSpec,
    n_samples: usize,
    rng: &mut R,
) -> Result<RiskEstimate> {
    if n_samples == 0 {
        return Err(Error::Empty("Monte Carlo samples"));
    }
    let d = spec.d;
    crate::linalg::check_square(p, d, "preconditioner")?;
    crate::linalg::check_len(omega.len(), spec.structure.n(), "weights")?;
    let p_rows: Vec<f64> = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| p[(i, j)]).collect();
    let mut sampler = EpisodeSampler::new(spec, false);
    let mut ep = Episode::default();
    let mut acc = vec![0.0; d];
    let (mut mean, mut m2) = (0.0, 0.0);
    for t in 0..n_samples {
        sampler.sample(rng, &mut ep);
        acc.fill(0.0);
        for (i, w) in omega.iter().enumerate() {
            let c = w * ep.y[i];
            for (a, x) in acc.iter_mut().zip(ep.row(i)) {
                *a += c * x;
            }
        }
        let xq = ep.row(ep.tokens() - 1);
        let pred: f64 =
            (0..d).map(|i| xq[i] * p_rows[i * d..(i + 1) * d].iter().zip(&acc).map(|(a, b)| a * b).sum::<f64>()).sum();
        let loss = (pred - ep.target) * (pred - ep.target);
        let delta = loss - mean;
        mean += delta / (t + 1) as f64;
        m2 += delta * (loss - mean);
    }
    let stderr = if n_samples > 1 { libm::sqrt(m2 / ((n_samples - 1) * n_samples) as f64) } else { f64::INFINITY };
    Ok(RiskEstimate { mean, stderr })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GateUpdate {
    #[default]
    Plain,
    /// Gate-parameter gradient rescaled to unit norm before each step.
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Cosine decay from `lr` to zero over the run.
    Cosine,
}

impl LrSchedule {
    pub fn factor(self, iteration: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => 1.0,
            LrSchedule::Cosine => {
                0.5 * (1.0 + libm::cos(core::f64::consts::PI * (iteration - 1) as f64 / total as f64))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub d: usize,
    pub p: usize,
    pub segment_lens: Vec<usize>,
    pub sigma: f64,
    /// Task-query correlation per segment.
    pub corr: Vec<f64>,
    pub layers: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch: usize,
    pub iterations: usize,
    pub trials: usize,
    pub gate_update: GateUpdate,
    pub schedule: LrSchedule,
    /// Standard deviation of the initial preconditioner entries; `None` picks `(n √d)^{-1/2}`.
    pub init_std: Option<f64>,
    pub seed: u64,
    pub eval_every: usize,
    pub eval_samples: usize,
    pub final_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::GlaScalar,
            d: 5,
            p: 5,
            segment_lens: vec![10, 10],
            sigma: 0.0,
            corr: vec![0.2, 0.8],
            layers: 1,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch: 256,
            iterations: 10_000,
            trials: 10,
            gate_update: GateUpdate::Plain,
            schedule: LrSchedule::Constant,
            init_std: None,
            seed: 0,
            eval_every: 500,
            eval_samples: 10_000,
            final_samples: 100_000,
        }
    }
}

fn config_error(msg: &str) -> Error {
    Error::Config(String::from(msg))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.iterations == 0 || self.trials == 0 {
            return Err(config_error("batch size, iterations and trials must be at least 1"));
        }
        if self.segment_lens.len() != self.corr.len() {
            return Err(config_error("one correlation per segment is required"));
        }
        if !(self.lr >= 0.0)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.eps > 0.0)
        {
            return Err(config_error("invalid optimizer hyperparameters"));
        }
        if self.init_std.is_some_and(|s| !(s >= 0.0) || !s.is_finite()) {
            return Err(config_error("initial scale must be finite and non-negative"));
        }
        if self.final_samples == 0 {
            return Err(config_error("final evaluation needs at least one sample"));
        }
        Shape::new(self.variant, self.d, self.p, self.layers)?;
        self.task_spec()?;
        Ok(())
    }

    pub fn shape(&self) -> Result<Shape> {
        Shape::new(self.variant, self.d, self.p, self.layers)
    }

    pub fn task_spec(&self) -> Result<TaskSpec> {
        let segments: Vec<Segment> =
            self.segment_lens.iter().zip(&self.corr).map(|(&n, &r)| Segment::new(n, r)).collect();
        TaskSpec::isotropic(self.d, build_correlation_structure(&segments, None)?, self.sigma)
    }

    /// Initial preconditioner scale; the default makes `P_k P_qᵀ` of order `1/n`.
    pub fn preconditioner_init_std(&self) -> f64 {
        self.init_std.unwrap_or_else(|| {
            let n: usize = self.segment_lens.iter().sum();
            1.0 / libm::sqrt(n.max(1) as f64 * libm::sqrt(self.d as f64))
        })
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(self.seed, trial as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub iteration: usize,
    pub risk: RiskEstimate,
}

/// Result of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub risk: RiskEstimate,
    pub params: Params,
    pub contexts: ContextVectors,
    pub history: Vec<Evaluation>,
    /// Exponentially smoothed training loss every 100 iterations.
    pub smoothed_loss: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub risk: RiskEstimate,
    pub best_trial: usize,
    pub params: Params,
    pub contexts: ContextVectors,
    pub history: Vec<Evaluation>,
    pub smoothed_loss: Vec<(usize, f64)>,
    /// Final risk of every trial that finished.
    pub trial_risks: Vec<(usize, RiskEstimate)>,
    pub failures: Vec<TrialFailure>,
}

pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { lr, beta1, beta2, eps, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *p -= self.lr * mhat / (libm::sqrt(vhat) + self.eps);
        }
    }
}

/// Mean minibatch loss and its gradient at `params`.
pub fn minibatch_gradient<R: Rng + ?Sized>(
    params: &Params,
    contexts: Option<&ContextVectors>,
    sampler: &mut EpisodeSampler<'_>,
    batch: usize,
    rng: &mut R,
    grad: &mut [f64],
) -> f64 {
    let bias = ContextBias::new(params, contexts);
    let mut dbias = bias.zeros_like();
    let mut ep = Episode::default();
    let mut ws = Workspace::default();
    grad.fill(0.0);
    let mut loss = 0.0;
    for _ in 0..batch {
        sampler.sample(rng, &mut ep);
        loss += accumulate_gradient(params, &bias, &ep, &mut ws, grad, &mut dbias);
    }
    bias.fold_gradient(params, contexts, &dbias, grad);
    let scale = 1.0 / batch as f64;
    for g in grad.iter_mut() {
        *g *= scale;
    }
    loss * scale
}

const DIVERGENCE_FACTOR: f64 = 1e3;
const DIVERGENCE_PATIENCE: usize = 100;
const SMOOTHING: f64 = 0.01;

/// Final evaluation prompts are shared by all trials of a configuration.
fn final_eval_rng(config: &TrainConfig) -> rand_chacha::ChaCha8Rng {
    stream(config.seed, purpose::FINAL_EVAL)
}

/// Runs trial `trial` of `config`.
pub fn run_trial(config: &TrainConfig, trial: usize) -> Result<core::result::Result<TrialOutcome, TrialFailure>> {
    config.validate()?;
    let shape = config.shape()?;
    let spec = config.task_spec()?;
    let seed = config.trial_seed(trial);
    let mut init_rng = stream(seed, purpose::INIT);
    let mut data_rng = stream(seed, purpose::TRAIN_DATA);
    let mut eval_rng = stream(seed, purpose::EVAL);
    let contexts =
        ContextVectors::sample(config.segment_lens.len(), config.p.max(1), &mut stream(seed, purpose::CONTEXTS));
    let ctx = shape.variant.gated().then_some(&contexts);

    let mut params = Params::random(shape, config.preconditioner_init_std(), &mut init_rng);
    let mut adam = Adam::new(shape.len(), config.lr, config.beta1, config.beta2, config.eps);
    let mut grad = vec![0.0; shape.len()];
    let mut sampler = EpisodeSampler::new(&spec, shape.variant.delimiters());
    let gate_ranges = params.gate_ranges();

    let mut history = Vec::new();
    let mut smoothed_loss = Vec::new();
    let mut initial = None;
    let mut over = 0;
    let mut ema = 0.0;
    for it in 1..=config.iterations {
        let loss = minibatch_gradient(&params, ctx, &mut sampler, config.batch, &mut data_rng, &mut grad);
        let first = *initial.get_or_insert(loss);
        if !(loss <= DIVERGENCE_FACTOR * first) {
            over += 1;
            if over >= DIVERGENCE_PATIENCE || !loss.is_finite() {
                return Ok(Err(TrialFailure { trial, iteration: it, loss }));
            }
        } else {
            over = 0;
        }
        ema = if it == 1 { loss } else { (1.0 - SMOOTHING) * ema + SMOOTHING * loss };
        if it % 100 == 0 {
            smoothed_loss.push((it, ema));
        }
        if config.gate_update == GateUpdate::Normalized {
            let norm: f64 = gate_ranges.iter().flat_map(|r| grad[r.clone()].iter()).map(|g| g * g).sum::<f64>();
            let scale = 1.0 / (libm::sqrt(norm) + 1e-20);
            for r in &gate_ranges {
                for g in &mut grad[r.clone()] {
                    *g *= scale;
                }
            }
        }
        adam.set_lr(config.lr * config.schedule.factor(it, config.iterations));
        adam.step(&mut params.values, &grad);
        if config.eval_every > 0 && it % config.eval_every == 0 && config.eval_samples > 0 {
            let risk = estimate_risk_mc(&params, &spec, ctx, config.eval_samples, &mut eval_rng)?;
            history.push(Evaluation { iteration: it, risk });
        }
    }
    let risk = estimate_risk_mc(&params, &spec, ctx, config.final_samples, &mut final_eval_rng(config))?;
    if !risk.mean.is_finite() {
        return Ok(Err(TrialFailure { trial, iteration: config.iterations, loss: risk.mean }));
    }
    Ok(Ok(TrialOutcome { trial, risk, params, contexts, history, smoothed_loss }))
}

/// A single trial, reported as a [`TrainResult`].
pub fn train(config: &TrainConfig) -> Result<TrainResult> {
    collect(vec![run_trial(config, 0)?])
}

fn collect(outcomes: Vec<core::result::Result<TrialOutcome, TrialFailure>>) -> Result<TrainResult> {
    let mut best: Option<TrialOutcome> = None;
    let mut trial_risks = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(o) => {
                trial_risks.push((o.trial, o.risk));
                if best.as_ref().is_none_or(|b| o.risk.mean < b.risk.mean) {
                    best = Some(o);
                }
            }
            Err(f) => failures.push(f),
        }
    }
    let best = best.ok_or_else(|| Error::AllDiverged(failures.clone()))?;
    Ok(TrainResult {
        risk: best.risk,
        best_trial: best.trial,
        params: best.params,
        contexts: best.contexts,
        history: best.history,
        smoothed_loss: best.smoothed_loss,
        trial_risks,
        failures,
    })
}

/// Runs `config.trials` independent trials and keeps the one with the lowest final risk.
pub fn best_of_trials(config: &TrainConfig) -> Result<TrainResult> {
    config.validate()?;
    collect(run_trials(config)?)
}

#[cfg(not(feature = "std"))]
fn run_trials(config: &TrainConfig) -> Result<Vec<core::result::Result<TrialOutcome, TrialFailure>>> {
    (0..config.trials).map(|t| run_trial(config, t)).collect()
}

#[cfg(feature = "std")]
fn run_trials(config: &TrainConfig) -> Result<Vec<core::result::Result<TrialOutcome, TrialFailure>>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(config.trials);
    if workers <= 1 {
        return (0..config.trials).map(|t| run_trial(config, t)).collect();
    }
    let next = core::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<_>>> = (0..config.trials).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let t = next.fetch_add(1, core::sync::atomic::Ordering::Relaxed);
                        if t >= config.trials {
                            break;
                        }
                        done.push((t, run_trial(config, t)));
                    }
                    done
                })
            })
            .collect();
        for h in handles {
            for (t, r) in h.join().expect("trial thread panicked") {
                slots[t] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every trial ran")).collect()
}

#[cfg(test)]
mod tests;
