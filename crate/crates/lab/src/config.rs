//! Experiment configuration: TOML file with `[model]`, `[train]` and `[sweep]` sections,
//! overridable from the command line.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gla_core::data::{build_correlation_structure, CorrelationStructure, Segment};
use gla_core::landscape::RiskModel;
use gla_core::linalg::{Mat, Vector};
use gla_core::train::{GateUpdate, LrSchedule, TrainConfig, Variant};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d: usize,
    pub p: usize,
    pub seg_lens: Vec<usize>,
    pub corr: Vec<f64>,
    pub sigma: f64,
    /// Diagonal of the feature covariance; identity when absent. Theory only.
    pub cov_spectrum: Option<Vec<f64>>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { d: 5, p: 5, seg_lens: vec![10, 10], corr: vec![0.2, 0.8], sigma: 0.0, cov_spectrum: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub variant: String,
    /// Variants trained by `sweep --train`.
    pub variants: Vec<String>,
    pub layers: usize,
    pub trials: usize,
    pub iters: usize,
    pub batch: usize,
    pub lr: f64,
    pub gate_update: String,
    pub schedule: String,
    pub eval_every: usize,
    pub eval_samples: usize,
    pub final_samples: usize,
    pub init_std: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let base = TrainConfig::default();
        Self {
            variant: base.variant.name().into(),
            variants: Variant::ALL.iter().map(|v| v.name().to_string()).collect(),
            layers: base.layers,
            trials: base.trials,
            iters: base.iterations,
            batch: base.batch,
            lr: base.lr,
            gate_update: "plain".into(),
            schedule: "constant".into(),
            eval_every: base.eval_every,
            eval_samples: base.eval_samples,
            final_samples: base.final_samples,
            init_std: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Examples per segment at each sweep point.
    pub nbar_axis: Vec<usize>,
    /// Also train the variants listed in `[train]`.
    pub train: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { nbar_axis: (1..=50).collect(), train: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub model: ModelSection,
    pub train: TrainSection,
    pub sweep: SweepSection,
}

fn parse_gate_update(s: &str) -> Result<GateUpdate> {
    match s {
        "plain" => Ok(GateUpdate::Plain),
        "normalized" => Ok(GateUpdate::Normalized),
        _ => bail!("unknown gate update mode {s:?} (plain, normalized)"),
    }
}

fn parse_schedule(s: &str) -> Result<LrSchedule> {
    match s {
        "constant" => Ok(LrSchedule::Constant),
        "cosine" => Ok(LrSchedule::Cosine),
        _ => bail!("unknown learning-rate schedule {s:?} (constant, cosine)"),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Full-size setting: `d = 10`, `p = 5`, ten thousand iterations.
    pub fn full_scale() -> Self {
        let mut c = Self::default();
        c.model.d = 10;
        c.model.p = 5;
        c.train.iters = 10_000;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.seg_lens.is_empty() {
            bail!("at least one segment is required");
        }
        if m.seg_lens.len() != m.corr.len() {
            bail!("{} segment lengths but {} correlations", m.seg_lens.len(), m.corr.len());
        }
        if let Some(s) = &m.cov_spectrum {
            if s.len() != m.d {
                bail!("covariance spectrum has {} entries, d = {}", s.len(), m.d);
            }
        }
        if self.sweep.nbar_axis.is_empty() || self.sweep.nbar_axis.contains(&0) {
            bail!("sweep axis must be non-empty with every n_bar ≥ 1");
        }
        self.variant()?;
        self.trained_variants()?;
        parse_gate_update(&self.train.gate_update)?;
        parse_schedule(&self.train.schedule)?;
        Ok(())
    }

    pub fn variant(&self) -> Result<Variant> {
        Ok(self.train.variant.parse()?)
    }

    pub fn trained_variants(&self) -> Result<Vec<Variant>> {
        self.train.variants.iter().map(|v| Ok(v.parse::<Variant>()?)).collect()
    }

    pub fn correlation(&self, seg_lens: &[usize]) -> Result<CorrelationStructure> {
        if seg_lens.len() != self.model.corr.len() {
            bail!("{} segment lengths but {} correlations", seg_lens.len(), self.model.corr.len());
        }
        let segments: Vec<Segment> = seg_lens.iter().zip(&self.model.corr).map(|(&n, &r)| Segment::new(n, r)).collect();
        Ok(build_correlation_structure(&segments, None)?)
    }

    pub fn covariance(&self) -> Mat {
        match &self.model.cov_spectrum {
            Some(s) => Mat::from_diagonal(&Vector::from_column_slice(s)),
            None => Mat::identity(self.model.d, self.model.d),
        }
    }

    pub fn risk_model(&self, seg_lens: &[usize]) -> Result<RiskModel> {
        Ok(RiskModel::new(self.covariance(), self.correlation(seg_lens)?, self.model.sigma)?)
    }

    /// Segment lengths for a sweep point: every segment gets `n_bar` examples.
    pub fn sweep_lens(&self, n_bar: usize) -> Vec<usize> {
        vec![n_bar; self.model.corr.len()]
    }

    pub fn train_config(&self, variant: Variant, seg_lens: &[usize], seed: u64) -> Result<TrainConfig> {
        if self.model.cov_spectrum.is_some() {
            bail!("training uses an identity feature covariance");
        }
        let t = &self.train;
        let config = TrainConfig {
            variant,
            d: self.model.d,
            p: self.model.p,
            segment_lens: seg_lens.to_vec(),
            sigma: self.model.sigma,
            corr: self.model.corr.clone(),
            layers: t.layers,
            lr: t.lr,
            batch: t.batch,
            iterations: t.iters,
            trials: t.trials,
            gate_update: parse_gate_update(&t.gate_update)?,
            schedule: parse_schedule(&t.schedule)?,
            seed,
            eval_every: t.eval_every,
            eval_samples: t.eval_samples,
            final_samples: t.final_samples,
            init_std: t.init_std,
            ..TrainConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), c);
        c.validate().unwrap();
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = ExperimentConfig::parse("seed = 3\n[model]\nd = 2\n[sweep]\nnbar_axis = [1, 2]\n").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.model.d, 2);
        assert_eq!(c.model.p, 5);
        assert_eq!(c.train.batch, 256);
        assert_eq!(c.sweep.nbar_axis, vec![1, 2]);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::parse("[model]\nbogus = 1\n").is_err());
        let mut c = ExperimentConfig::default();
        c.sweep.nbar_axis = vec![0, 3];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.model.corr = vec![0.5];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.train.variant = "rnn".into();
        assert!(c.validate().is_err());
    }
}
