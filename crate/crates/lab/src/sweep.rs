//! Risk curves against the number of examples per segment.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{Context, Result};
use gla_core::landscape::{constrained_optimum, optimal_att_risk, optimal_wpgd, wpgd_risk_isotropic};
use gla_core::rng::derive_seed;
use gla_core::train::{best_of_trials, Variant};

use crate::config::ExperimentConfig;
use crate::output::{csv_text, fmt_num, fmt_opt};

pub const HEADER: [&str; 8] = [
    "n_bar",
    "theory_wpgd",
    "theory_att",
    "theory_constrained",
    "trained_linatt",
    "trained_gla_scalar",
    "trained_gla_wo",
    "trained_gla_vector",
];

/// One sweep point. Every risk is divided by `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n_bar: usize,
    pub theory_wpgd: f64,
    /// Only defined for an identity feature covariance.
    pub theory_att: Option<f64>,
    pub theory_constrained: f64,
    /// Indexed by [`Variant::tag`].
    pub trained: [Option<f64>; 4],
}

impl SweepRow {
    pub fn trained(&self, variant: Variant) -> Option<f64> {
        self.trained[variant.tag() as usize]
    }

    fn cells(&self) -> Vec<String> {
        let mut cells = vec![
            self.n_bar.to_string(),
            fmt_num(self.theory_wpgd),
            fmt_opt(self.theory_att),
            fmt_num(self.theory_constrained),
        ];
        cells.extend(self.trained.iter().map(|t| fmt_opt(*t)));
        cells
    }
}

/// Seed of a sweep point, shared by every variant trained there.
pub fn point_seed(seed: u64, n_bar: usize) -> u64 {
    derive_seed(seed, n_bar as u64)
}

pub fn sweep_point(config: &ExperimentConfig, n_bar: usize, train: bool) -> Result<SweepRow> {
    let lens = config.sweep_lens(n_bar);
    let model = config.risk_model(&lens)?;
    let d = config.model.d as f64;
    let identity = config.model.cov_spectrum.is_none();
    let wpgd = if identity {
        wpgd_risk_isotropic(model.correlation(), model.d(), model.noise())?
    } else {
        optimal_wpgd(&model)?.risk
    };
    let att = if identity { Some(optimal_att_risk(&model)?.att / d) } else { None };
    let constrained = constrained_optimum(&model)?.risk;
    let mut trained = [None; 4];
    if train {
        let seed = point_seed(config.seed, n_bar);
        for variant in config.trained_variants()? {
            let tc = config.train_config(variant, &lens, seed)?;
            let result = best_of_trials(&tc).with_context(|| format!("training {variant} at n_bar = {n_bar}"))?;
            trained[variant.tag() as usize] = Some(result.risk.mean / d);
        }
    }
    Ok(SweepRow { n_bar, theory_wpgd: wpgd / d, theory_att: att, theory_constrained: constrained / d, trained })
}

/// Evaluates every point of the configured axis; rows come back in axis order.
///
/// Points are spread over the available cores.
pub fn run_sweep(config: &ExperimentConfig, train: bool) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let axis = &config.sweep.nbar_axis;
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(axis.len());
    let slots: Vec<Mutex<Option<Result<SweepRow>>>> = axis.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        if i >= axis.len() {
            break;
        }
        let row = sweep_point(config, axis[i], train);
        *slots[i].lock().expect("sweep slot") = Some(row);
    };
    if workers <= 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(work);
            }
        });
    }
    slots.into_iter().map(|s| s.into_inner().expect("sweep slot").expect("every point visited")).collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let cells: Vec<Vec<String>> = rows.iter().map(SweepRow::cells).collect();
    csv_text(&HEADER, &cells)
}
