//! Flat token streams for training, drawn in the same order as [`crate::data::sample_multitask_prompt`].

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{CorrelationStructure, Covariance};
use crate::error::{Error, Result};

/// What a prompt distribution looks like: dimension, segments, covariance and label noise.
#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub d: usize,
    pub structure: CorrelationStructure,
    pub cov: Covariance,
    pub sigma: f64,
}

impl TaskSpec {
    pub fn new(structure: CorrelationStructure, cov: Covariance, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Noise(sigma));
        }
        Ok(Self { d: cov.d(), structure, cov, sigma })
    }

    pub fn isotropic(d: usize, structure: CorrelationStructure, sigma: f64) -> Result<Self> {
        Self::new(structure, Covariance::identity(d), sigma)
    }

    /// Number of tokens per prompt, including the query.
    pub fn tokens(&self, delimiters: bool) -> usize {
        let k = self.structure.num_segments();
        self.structure.n() + if delimiters { k } else { 0 } + 1
    }
}

/// One prompt. Delimiter rows have zero features and label; the query is the last row
/// and its label slot is zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Episode {
    pub d: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Index of the contextual vector carried by each token.
    pub ctx: Vec<usize>,
    pub target: f64,
}

impl Episode {
    pub fn tokens(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }
}

pub struct EpisodeSampler<'a> {
    spec: &'a TaskSpec,
    delimiters: bool,
    white: Vec<f64>,
    tasks: Vec<f64>,
    query_task: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> EpisodeSampler<'a> {
    pub fn new(spec: &'a TaskSpec, delimiters: bool) -> Self {
        let (d, k) = (spec.d, spec.structure.num_segments());
        Self {
            spec,
            delimiters,
            white: vec![0.0; (k + 1) * d],
            tasks: vec![0.0; k * d],
            query_task: vec![0.0; d],
            scratch: vec![0.0; d],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R, ep: &mut Episode) {
        let spec = self.spec;
        let d = spec.d;
        let n_tok = spec.tokens(self.delimiters);
        spec.structure.draw_tasks(d, rng, &mut self.white, &mut self.tasks, &mut self.query_task);
        ep.d = d;
        ep.x.clear();
        ep.x.resize(n_tok * d, 0.0);
        ep.y.clear();
        ep.y.resize(n_tok, 0.0);
        ep.ctx.clear();
        ep.ctx.resize(n_tok, 0);
        let mut row = 0;
        for (s, seg) in spec.structure.segments().iter().enumerate() {
            let task = &self.tasks[s * d..(s + 1) * d];
            for _ in 0..seg.len {
                let x = &mut ep.x[row * d..(row + 1) * d];
                spec.cov.draw(rng, &mut self.scratch, x);
                let mut label: f64 = x.iter().zip(task).map(|(a, b)| a * b).sum();
                if spec.sigma > 0.0 {
                    label += spec.sigma * rng.sample::<f64, _>(StandardNormal);
                }
                ep.y[row] = label;
                row += 1;
            }
            if self.delimiters {
                ep.ctx[row] = s + 1;
                row += 1;
            }
        }
        let x = &mut ep.x[row * d..(row + 1) * d];
        spec.cov.draw(rng, &mut self.scratch, x);
        let mut target: f64 = x.iter().zip(&self.query_task).map(|(a, b)| a * b).sum();
        if spec.sigma > 0.0 {
            target += spec.sigma * rng.sample::<f64, _>(StandardNormal);
        }
        ep.target = target;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{
        build_correlation_structure, sample_multitask_prompt, sample_task_ensemble, ContextVectors, PromptLayout,
        Segment,
    };
    use crate::rng::stream;

    #[test]
    fn matches_prompt_sampler() {
        let structure = build_correlation_structure(&[Segment::new(3, 0.3), Segment::new(2, 0.6)], None).unwrap();
        let cov = Covariance::diagonal(&[1.0, 2.0, 0.5]).unwrap();
        let spec = TaskSpec::new(structure.clone(), cov.clone(), 0.3).unwrap();
        let contexts = ContextVectors::sample(2, 2, &mut stream(1, 1));
        for delimiters in [false, true] {
            let mut a = stream(9, 2);
            let mut b = stream(9, 2);
            let mut sampler = EpisodeSampler::new(&spec, delimiters);
            let mut ep = Episode::default();
            for _ in 0..3 {
                sampler.sample(&mut a, &mut ep);
                let ens = sample_task_ensemble(&structure, 3, &mut b);
                let layout = PromptLayout::Contextual { contexts: contexts.clone(), delimiters };
                let prompt = sample_multitask_prompt(&ens, &cov, 0.3, &layout, &mut b).unwrap();
                assert_eq!(ep.tokens(), prompt.z.nrows());
                assert_eq!(ep.target, prompt.y_query);
                for i in 0..ep.tokens() {
                    for j in 0..3 {
                        assert_eq!(ep.row(i)[j], prompt.z[(i, j)]);
                    }
                    assert_eq!(ep.y[i], prompt.z[(i, 3)]);
                    for j in 0..2 {
                        assert_eq!(contexts.get(ep.ctx[i])[j], prompt.z[(i, 4 + j)]);
                    }
                }
            }
        }
    }
}
