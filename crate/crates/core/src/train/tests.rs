use super::*;
use crate::data::{assemble_prompt, CorrelationStructure, PromptLayout};
use crate::gla::{build_construction, gla_multilayer_forward, gla_predict, Construction, GatingSpec};
use crate::landscape::{closed_form_risk, optimal_att_risk, optimal_preconditioner, RiskModel};
use crate::linalg::{Mat, Vector};

fn tiny(variant: Variant, layers: usize) -> TrainConfig {
    TrainConfig {
        variant,
        d: 2,
        p: 3,
        segment_lens: vec![2, 2],
        corr: vec![0.3, 0.7],
        sigma: 0.1,
        layers,
        batch: 4,
        iterations: 1,
        trials: 1,
        ..TrainConfig::default()
    }
}

fn random_setup(config: &TrainConfig, seed: u64) -> (Params, ContextVectors, TaskSpec) {
    let shape = config.shape().unwrap();
    let mut params = Params::random(shape, 0.5, &mut stream(seed, 0));
    // move away from the special initial head/value pattern
    for v in params.values.iter_mut() {
        *v += 0.1 * libm::sin(*v * 7.0 + 1.0);
    }
    let contexts = ContextVectors::sample(2, config.p, &mut stream(seed, 1));
    (params, contexts, config.task_spec().unwrap())
}

fn batch_loss(params: &Params, contexts: &ContextVectors, spec: &TaskSpec, seed: u64, grad: &mut [f64]) -> f64 {
    let mut sampler = EpisodeSampler::new(spec, params.shape.variant.delimiters());
    let ctx = params.shape.variant.gated().then_some(contexts);
    minibatch_gradient(params, ctx, &mut sampler, 4, &mut stream(seed, 2), grad)
}

#[test]
fn gradients_match_finite_differences() {
    let cases = [
        (Variant::LinAtt, 1),
        (Variant::GlaScalar, 1),
        (Variant::GlaScalarNoDelim, 1),
        (Variant::GlaVector, 1),
        (Variant::LinAtt, 2),
        (Variant::GlaScalar, 2),
        (Variant::GlaScalar, 3),
    ];
    for (variant, layers) in cases {
        let config = tiny(variant, layers);
        for seed in 0..3 {
            let (params, contexts, spec) = random_setup(&config, seed);
            let mut grad = vec![0.0; params.values.len()];
            batch_loss(&params, &contexts, &spec, seed, &mut grad);
            let mut scratch = grad.clone();
            let h = 1e-6;
            for (i, g) in grad.iter().enumerate() {
                let mut plus = params.clone();
                plus.values[i] += h;
                let mut minus = params.clone();
                minus.values[i] -= h;
                let fd = (batch_loss(&plus, &contexts, &spec, seed, &mut scratch)
                    - batch_loss(&minus, &contexts, &spec, seed, &mut scratch))
                    / (2.0 * h);
                let err = (fd - g).abs() / (1e-6 + fd.abs().max(g.abs()));
                assert!(err <= 1e-4, "{variant} L={layers} param {i}: fd {fd} vs {g}");
            }
        }
    }
}

fn episode_tokens(ep: &Episode, contexts: Option<&ContextVectors>, lens: &[usize], delimiters: bool) -> Mat {
    let d = ep.d;
    let data: Vec<usize> = (0..ep.tokens() - 1).filter(|&i| ep.ctx[i] == 0).collect();
    let x = Mat::from_fn(data.len(), d, |r, j| ep.row(data[r])[j]);
    let y = Vector::from_iterator(data.len(), data.iter().map(|&i| ep.y[i]));
    let xq = Vector::from_column_slice(ep.row(ep.tokens() - 1));
    let layout = match contexts {
        None => PromptLayout::Plain,
        Some(c) => PromptLayout::Contextual { contexts: c.clone(), delimiters },
    };
    assemble_prompt(x, y, xq, 0.0, lens, &layout).unwrap().z
}

#[test]
fn forward_matches_attention_engine() {
    for (variant, layers) in [
        (Variant::LinAtt, 2),
        (Variant::GlaScalar, 1),
        (Variant::GlaScalar, 3),
        (Variant::GlaScalarNoDelim, 2),
        (Variant::GlaVector, 1),
    ] {
        let config = tiny(variant, layers);
        let (params, contexts, spec) = random_setup(&config, 5);
        let ctx = variant.gated().then_some(&contexts);
        let bias = ContextBias::new(&params, ctx);
        let mut sampler = EpisodeSampler::new(&spec, variant.delimiters());
        let mut ep = Episode::default();
        let mut ws = Workspace::default();
        let mut rng = stream(6, 0);
        let (d, p) = (config.d, params.shape.context_dim());
        for _ in 0..5 {
            sampler.sample(&mut rng, &mut ep);
            let ours = forward(&params, &bias, &ep, &mut ws);
            let z = episode_tokens(&ep, ctx, &config.segment_lens, variant.delimiters());
            let reference = if variant == Variant::GlaVector {
                let m = params.shape.width();
                let model = build_construction(Construction::DelimiterValueVector {
                    p_k: params.p_k(0),
                    p_q: params.p_q(0),
                    p,
                    u: Vector::from_column_slice(params.u().unwrap()),
                })
                .unwrap()
                .with_head(Vector::from_column_slice(params.head().unwrap()))
                .with_gating(GatingSpec::vector(Mat::from_row_slice(m, m, params.gate(0).unwrap())));
                gla_predict(&z, &model).unwrap()
            } else {
                let models: Vec<_> = (0..layers)
                    .map(|l| {
                        let model =
                            build_construction(Construction::Delimiter { p_k: params.p_k(l), p_q: params.p_q(l), p })
                                .unwrap();
                        match params.gate(l) {
                            Some(w) => model.with_gating(GatingSpec::scalar(Vector::from_column_slice(w))),
                            None => model,
                        }
                    })
                    .collect();
                let trace = gla_multilayer_forward(&z, &models, d).unwrap();
                -trace.readouts[layers - 1][z.nrows() - 1]
            };
            assert!((ours - reference).abs() <= 1e-12 * (1.0 + reference.abs()), "{variant}: {ours} vs {reference}");
        }
    }
}

#[test]
fn zero_parameters_give_null_risk() {
    let config = TrainConfig { variant: Variant::LinAtt, d: 3, sigma: 0.5, ..TrainConfig::default() };
    let spec = config.task_spec().unwrap();
    let params = Params::zeros(config.shape().unwrap());
    let est = estimate_risk_mc(&params, &spec, None, 20_000, &mut stream(1, 0)).unwrap();
    assert!((est.mean - 3.25).abs() <= 3.0 * est.stderr, "{est:?}");
}

#[test]
fn linear_attention_at_optimum_matches_theory() {
    let d = 3;
    let structure = CorrelationStructure::single(6, 0.7).unwrap();
    let model = RiskModel::isotropic(d, structure.clone(), 0.2).unwrap();
    let omega = Vector::from_element(6, 1.0);
    let p = optimal_preconditioner(&omega, &model).unwrap();
    let theory = optimal_att_risk(&model).unwrap().att;
    assert!((closed_form_risk(&p, &omega, &model).unwrap() - theory).abs() < 1e-12);
    // prediction is −Σ y_i x_iᵀ P_k P_qᵀ x, so P_k = −Pᵀ, P_q = I
    let params = Params::linear(&(-p.transpose()), &Mat::identity(d, d), 1).unwrap();
    let spec = TaskSpec::isotropic(d, structure, 0.2).unwrap();
    let est = estimate_risk_mc(&params, &spec, None, 100_000, &mut stream(2, 0)).unwrap();
    assert!((est.mean - theory).abs() <= 3.0 * est.stderr, "{est:?} vs {theory}");
}

#[test]
fn estimates_are_reproducible() {
    let config = tiny(Variant::GlaScalar, 1);
    let (params, contexts, spec) = random_setup(&config, 1);
    let a = estimate_risk_mc(&params, &spec, Some(&contexts), 1, &mut stream(3, 3)).unwrap();
    let b = estimate_risk_mc(&params, &spec, Some(&contexts), 1, &mut stream(3, 3)).unwrap();
    assert_eq!(a, b);
    assert!(estimate_risk_mc(&params, &spec, Some(&contexts), 0, &mut stream(3, 3)).is_err());
    assert_eq!(estimate_risk_mc(&params, &spec, None, 5, &mut stream(3, 3)), Err(Error::MissingContexts));
}

fn quick(variant: Variant) -> TrainConfig {
    TrainConfig {
        variant,
        d: 2,
        p: 3,
        segment_lens: vec![3, 3],
        batch: 16,
        iterations: 40,
        trials: 3,
        eval_every: 20,
        eval_samples: 200,
        final_samples: 500,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let config = TrainConfig { lr: 0.0, ..quick(Variant::GlaVector) };
    let result = train(&config).unwrap();
    let init = Params::random(
        config.shape().unwrap(),
        config.preconditioner_init_std(),
        &mut stream(config.trial_seed(0), purpose::INIT),
    );
    assert_eq!(result.params, init);
    let risks: Vec<f64> = result.history.iter().map(|e| e.risk.mean).collect();
    assert_eq!(risks.len(), 2);
}

#[test]
fn training_is_deterministic_and_best_of_is_monotone() {
    for variant in Variant::ALL {
        let config = quick(variant);
        let a = best_of_trials(&config).unwrap();
        let b = best_of_trials(&config).unwrap();
        assert_eq!(a, b);
        let single = train(&config).unwrap();
        let one = best_of_trials(&TrainConfig { trials: 1, ..config.clone() }).unwrap();
        assert_eq!(single, one);
        assert!(a.risk.mean <= single.risk.mean);
        assert_eq!(a.trial_risks.len(), 3);
    }
}

#[test]
fn training_reduces_risk() {
    let config = TrainConfig {
        variant: Variant::LinAtt,
        iterations: 300,
        batch: 32,
        trials: 1,
        eval_every: 0,
        final_samples: 4000,
        ..quick(Variant::LinAtt)
    };
    let trained = train(&config).unwrap();
    let untrained = train(&TrainConfig { lr: 0.0, ..config.clone() }).unwrap();
    assert!(trained.risk.mean < untrained.risk.mean);
    let first = trained.smoothed_loss.first().unwrap().1;
    let last = trained.smoothed_loss.last().unwrap().1;
    assert!(last < first);
}

#[test]
fn divergence_is_detected() {
    let config = TrainConfig { lr: 1e4, iterations: 400, trials: 2, eval_every: 0, ..quick(Variant::LinAtt) };
    match best_of_trials(&config) {
        Err(Error::AllDiverged(f)) => assert_eq!(f.len(), 2),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn invalid_configs_rejected() {
    for config in [
        TrainConfig { batch: 0, ..TrainConfig::default() },
        TrainConfig { iterations: 0, ..TrainConfig::default() },
        TrainConfig { trials: 0, ..TrainConfig::default() },
        TrainConfig { corr: vec![0.5], ..TrainConfig::default() },
        TrainConfig { p: 0, ..TrainConfig::default() },
        TrainConfig { variant: Variant::GlaVector, layers: 2, ..TrainConfig::default() },
    ] {
        assert!(config.validate().is_err());
    }
}

#[test]
fn normalized_gate_update_runs() {
    let config = TrainConfig { gate_update: GateUpdate::Normalized, ..quick(Variant::GlaScalar) };
    let r = train(&config).unwrap();
    assert!(r.risk.mean.is_finite());
}

#[test]
fn variant_names_round_trip() {
    for v in Variant::ALL {
        assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        assert_eq!(Variant::from_tag(v.tag()), Some(v));
    }
    assert!("mamba".parse::<Variant>().is_err());
}

#[test]
fn weighted_estimator_risk_matches_closed_form() {
    let structure = crate::data::build_correlation_structure(
        &[crate::data::Segment::new(3, 0.4), crate::data::Segment::new(2, 0.6)],
        None,
    )
    .unwrap();
    let sigma = Mat::from_row_slice(2, 2, &[1.5, 0.3, 0.3, 0.7]);
    let model = RiskModel::new(sigma.clone(), structure.clone(), 0.3).unwrap();
    let spec = TaskSpec::new(structure, crate::data::Covariance::new(sigma).unwrap(), 0.3).unwrap();
    let p = Mat::from_row_slice(2, 2, &[0.1, 0.05, -0.02, 0.2]);
    let omega = Vector::from_column_slice(&[0.2, 0.5, 1.0, 0.7, 0.9]);
    let est = wpgd_risk_mc(&p, &omega, &spec, 200_000, &mut stream(8, 0)).unwrap();
    let exact = closed_form_risk(&p, &omega, &model).unwrap();
    assert!((est.mean - exact).abs() <= 3.0 * est.stderr, "{est:?} vs {exact}");
}
