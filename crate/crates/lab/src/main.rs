use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gla_core::data::{sample_multitask_prompt, ContextVectors, Covariance, PromptLayout};
use gla_core::landscape::{constrained_optimum, optimal_att_risk, optimal_wpgd};
use gla_core::rng::{purpose, stream};
use gla_core::train::best_of_trials;
use gla_lab::checkpoint::Checkpoint;
use gla_lab::config::ExperimentConfig;
use gla_lab::output::{csv_text, fmt_num, write_text};
use gla_lab::prompt_dump::prompt_csv;
use gla_lab::sweep::{run_sweep, sweep_csv};
use gla_lab::verify::{run_verify, Suite};

#[derive(Parser)]
#[command(name = "gla-lab", about = "Gated linear attention as weighted preconditioned descent")]
struct Cli {
    #[command(flatten)]
    opts: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a randomized invariant suite (equivalence, landscape, gradients, moments).
    Verify {
        suite: String,
        /// Random instances per check.
        #[arg(long, default_value_t = 100)]
        instances: usize,
    },
    /// Solve for the optimal weighted, constrained and uniform predictors.
    Landscape,
    /// Train one variant, best of `--trials`.
    Train {
        /// Write the best parameters here.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Risk curves over the examples-per-segment axis.
    Sweep {
        /// Also train the configured variants at every point.
        #[arg(long)]
        train: bool,
    },
    /// Sample one prompt and dump its token matrix.
    Prompt {
        /// Include delimiter tokens.
        #[arg(long)]
        delimiters: bool,
    },
}

#[derive(Args)]
struct Overrides {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Start from the full-scale experiment defaults.
    #[arg(long, global = true)]
    full_scale: bool,
    #[arg(long, global = true)]
    d: Option<usize>,
    #[arg(long, global = true)]
    p: Option<usize>,
    /// Number of segments; must agree with --corr and --seg-lens.
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    seg_lens: Option<Vec<usize>>,
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    corr: Option<Vec<f64>>,
    #[arg(long, global = true)]
    sigma: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',')]
    nbar_axis: Option<Vec<usize>>,
    #[arg(long, global = true)]
    variant: Option<String>,
    /// Variants trained by `sweep --train`.
    #[arg(long, global = true, value_delimiter = ',')]
    variants: Option<Vec<String>>,
    #[arg(long, global = true)]
    layers: Option<usize>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true)]
    iters: Option<usize>,
    #[arg(long, global = true)]
    batch: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true, env = "GLA_SEED")]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None if self.full_scale => ExperimentConfig::full_scale(),
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($field:ident => $($target:tt)+) => {
                if let Some(v) = &self.$field {
                    c.$($target)+ = v.clone();
                }
            };
        }
        set!(d => model.d);
        set!(p => model.p);
        set!(seg_lens => model.seg_lens);
        set!(corr => model.corr);
        set!(sigma => model.sigma);
        set!(nbar_axis => sweep.nbar_axis);
        set!(variant => train.variant);
        set!(variants => train.variants);
        set!(layers => train.layers);
        set!(trials => train.trials);
        set!(iters => train.iters);
        set!(batch => train.batch);
        set!(lr => train.lr);
        set!(seed => seed);
        if let Some(out) = &self.out {
            c.out = Some(out.clone());
        }
        if let Some(k) = self.k {
            if self.seg_lens.is_none() && c.model.seg_lens.len() != k {
                let n_bar = c.model.seg_lens.first().copied().unwrap_or(10);
                c.model.seg_lens = vec![n_bar; k];
            }
            if c.model.corr.len() != k || c.model.seg_lens.len() != k {
                bail!(
                    "--k {k} disagrees with {} correlations and {} segment lengths",
                    c.model.corr.len(),
                    c.model.seg_lens.len()
                );
            }
        }
        c.validate()?;
        Ok(c)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn landscape(c: &ExperimentConfig) -> Result<String> {
    let model = c.risk_model(&c.model.seg_lens)?;
    let sol = optimal_wpgd(&model)?;
    let cons = constrained_optimum(&model)?;
    let mut rows = vec![
        vec!["gamma".into(), fmt_num(sol.gamma)],
        vec!["fixed_point_residual".into(), fmt_num(sol.residual)],
        vec!["gap_condition".into(), sol.gap_condition.to_string()],
        vec!["scale".into(), fmt_num(sol.scale)],
        vec!["risk_wpgd".into(), fmt_num(sol.risk)],
        vec!["risk_constrained".into(), fmt_num(cons.risk)],
    ];
    if c.model.cov_spectrum.is_none() {
        rows.push(vec!["risk_att".into(), fmt_num(optimal_att_risk(&model)?.att)]);
    }
    for (k, w) in cons.segment_weights.iter().enumerate() {
        rows.push(vec![format!("constrained_weight_{}", k + 1), fmt_num(*w)]);
    }
    for (i, w) in sol.omega.iter().enumerate() {
        rows.push(vec![format!("omega_{}", i + 1), fmt_num(*w)]);
    }
    Ok(csv_text(&["quantity", "value"], &rows))
}

fn train(c: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<String> {
    let tc = c.train_config(c.variant()?, &c.model.seg_lens, c.seed)?;
    let result = best_of_trials(&tc)?;
    for f in &result.failures {
        eprintln!("trial {} diverged at iteration {} (loss {:e})", f.trial, f.iteration, f.loss);
    }
    for (t, r) in &result.trial_risks {
        eprintln!("trial {t}: risk {} ± {}", r.mean, r.stderr);
    }
    eprintln!(
        "best trial {}: risk {} ± {} (normalized {})",
        result.best_trial,
        result.risk.mean,
        result.risk.stderr,
        result.risk.mean / c.model.d as f64
    );
    if let Some(path) = checkpoint {
        let ck =
            Checkpoint { params: result.params.clone(), contexts: tc.variant.gated().then(|| result.contexts.clone()) };
        let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
        ck.write(&mut w)?;
    }
    let rows: Vec<Vec<String>> = result
        .history
        .iter()
        .map(|e| vec![e.iteration.to_string(), fmt_num(e.risk.mean), fmt_num(e.risk.stderr)])
        .collect();
    Ok(csv_text(&["iteration", "risk", "stderr"], &rows))
}

fn prompt(c: &ExperimentConfig, delimiters: bool) -> Result<String> {
    let corr = c.correlation(&c.model.seg_lens)?;
    let cov = Covariance::new(c.covariance())?;
    let mut rng = stream(c.seed, purpose::TRAIN_DATA);
    let contexts = ContextVectors::sample(c.model.seg_lens.len(), c.model.p, &mut stream(c.seed, purpose::CONTEXTS));
    let layout = if c.model.p == 0 { PromptLayout::Plain } else { PromptLayout::Contextual { contexts, delimiters } };
    let ensemble = gla_core::data::sample_task_ensemble(&corr, c.model.d, &mut rng);
    let prompt = sample_multitask_prompt(&ensemble, &cov, c.model.sigma, &layout, &mut rng)?;
    Ok(prompt_csv(&prompt))
}

fn run(cli: Cli) -> Result<bool> {
    let c = cli.opts.resolve()?;
    let out = c.out.as_deref();
    match cli.command {
        Command::Verify { suite, instances } => {
            let suites = if suite == "all" { Suite::ALL.to_vec() } else { vec![suite.parse()?] };
            let mut ok = true;
            let mut text = String::new();
            for s in suites {
                let report = run_verify(s, c.seed, instances)?;
                ok &= report.passed();
                text.push_str(&report.to_string());
            }
            emit(out, &text)?;
            Ok(ok)
        }
        Command::Landscape => emit(out, &landscape(&c)?).map(|_| true),
        Command::Train { checkpoint } => emit(out, &train(&c, checkpoint.as_deref())?).map(|_| true),
        Command::Sweep { train } => {
            let rows = run_sweep(&c, train || c.sweep.train)?;
            emit(out, &sweep_csv(&rows)).map(|_| true)
        }
        Command::Prompt { delimiters } => emit(out, &prompt(&c, delimiters)?).map(|_| true),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
