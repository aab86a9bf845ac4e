use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::env::EnvConfig;
use crate::ledger::FeeModel;
use crate::policy::FlatPolicy;
use crate::spread::Thresholds;
use crate::synthetic::ou_pair;

fn random_batch(head: HeadKind, n: usize, history: usize, rng: &mut ChaCha8Rng) -> Vec<Transition> {
    (0..n)
        .map(|_| {
            let zone = Zone::ALL[rng.random_range(0..5)];
            let mut obs = Observation::new(rng.random_range(-1.0..1.0), rng.random_range(-3.0..3.0), zone);
            obs.z_history = (0..history).map(|_| rng.random_range(-3.0..3.0)).collect();
            let action = match head {
                HeadKind::Categorical => Sampled::Discrete(rng.random_range(0..3)),
                HeadKind::SquashedGaussian => Sampled::Continuous { pre_squash: rng.random_range(-2.0..2.0) },
            };
            Transition { input: encode_input(&obs), action, advantage: rng.random_range(-1.0..1.0), ret: rng.random_range(-1.0..1.0) }
        })
        .collect()
}

fn small(head: HeadKind, seed: u64) -> AgentParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = AgentParams::new(head, input_len(1), &[8, 8], &mut rng);
    // full-scale output weights so every layer carries gradient
    let sizes = p.policy.sizes().to_vec();
    p.policy = Mlp::init(&sizes, 1.0, &mut rng);
    if head == HeadKind::SquashedGaussian {
        p.log_std = rng.random_range(-1.0..0.5);
    }
    p
}

fn ou_env(seed: u64, mode: EnvMode) -> TradingEnv {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let series = Arc::new(ou_pair(&mut rng, 400, 0.1, 0.5));
    let mut cfg = EnvConfig::new(mode, Thresholds::new(1.5, 0.5).unwrap(), 60);
    cfg.fee = FeeModel::zero();
    TradingEnv::new(series, cfg).unwrap()
}

#[test]
fn encode_input_layout() {
    let mut obs = Observation::new(1.3, -25.0, Zone::NeutralLongZone);
    obs.z_history = vec![12.0, 0.5];
    assert_eq!(encode_input(&obs), vec![1.0, -10.0, 0.0, 0.0, 0.0, 1.0, 0.0, 10.0, 0.5]);
}

#[test]
fn continuous_actions_are_bounded_and_seeded() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut p = AgentParams::new(HeadKind::SquashedGaussian, 7, &[16], &mut rng);
    p.log_std = 3.0;
    let obs = Observation::new(0.0, 2.5, Zone::ShortZone);
    for _ in 0..1000 {
        match act(&p, &obs, ActMode::Stochastic, &mut rng).unwrap() {
            EnvAction::Quantity(a) => assert!((-1.0..=1.0).contains(&a)),
            other => panic!("{other:?}"),
        }
    }
    let a = act(&p, &obs, ActMode::Stochastic, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let b = act(&p, &obs, ActMode::Stochastic, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn uniform_logits_sample_uniformly() {
    let p = AgentParams {
        head: HeadKind::Categorical,
        policy: Mlp::zeros(&[7, 4, 3]),
        value: Mlp::zeros(&[7, 4, 1]),
        log_std: 0.0,
        version: 0,
    };
    let x = encode_input(&Observation::new(0.0, 0.0, Zone::CloseZone));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut counts = [0usize; 3];
    let n = 100_000;
    for _ in 0..n {
        match sample_action(&p, &x, ActMode::Stochastic, &mut rng).unwrap() {
            Sampled::Discrete(i) => counts[i] += 1,
            other => panic!("{other:?}"),
        }
    }
    for c in counts {
        assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.01, "{counts:?}");
    }
}

#[test]
fn non_finite_parameters_are_reported() {
    let mut p = small(HeadKind::Categorical, 1);
    p.policy.params_mut()[0] = f64::NAN;
    let mut obs = Observation::new(0.0, 1.0, Zone::NeutralShortZone);
    obs.z_history = vec![0.5];
    assert_eq!(act(&p, &obs, ActMode::Deterministic, &mut ChaCha8Rng::seed_from_u64(0)), Err(AgentError::NonFiniteParams));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distributions_are_valid(seed in any::<u64>(), z in -20.0f64..20.0, pos in -1.0f64..1.0, zone in 0usize..5) {
        let x = encode_input(&Observation::new(pos, z, Zone::ALL[zone]));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cat = AgentParams::new(HeadKind::Categorical, 7, &[16, 16], &mut rng);
        let p = cat.probabilities(&x).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|v| *v >= 0.0));
        let g = AgentParams::new(HeadKind::SquashedGaussian, 7, &[16, 16], &mut rng);
        prop_assert!(g.gaussian(&x).unwrap().1 > 0.0);
    }
}

#[test]
fn zero_network_gradient_check() {
    for head in [HeadKind::Categorical, HeadKind::SquashedGaussian] {
        let out = if head == HeadKind::Categorical { 3 } else { 1 };
        let p = AgentParams { head, policy: Mlp::zeros(&[8, 6, out]), value: Mlp::zeros(&[8, 6, 1]), log_std: 0.0, version: 0 };
        let batch = random_batch(head, 8, 1, &mut ChaCha8Rng::seed_from_u64(2));
        assert!(grad_check(&p, &batch, 0.01, 0.5) < 1e-6);
    }
}

#[test]
fn random_network_gradient_check_seed_7() {
    for head in [HeadKind::Categorical, HeadKind::SquashedGaussian] {
        let p = small(head, 7);
        assert!(p.n_params() <= 1000);
        let batch = random_batch(head, 32, 1, &mut ChaCha8Rng::seed_from_u64(7));
        let e = grad_check(&p, &batch, 0.01, 0.5);
        assert!(e < 1e-4, "{head:?}: {e}");
        let bad = grad_check_with(&p, &batch, 0.01, 0.5, BackwardPass::DropFirstMask);
        assert!(bad > 1e-2, "{head:?}: {bad}");
    }
}

#[test]
fn zero_learning_rate_is_a_no_op() {
    let cfg = TrainConfig { learning_rate: 0.0, total_steps: 200, hidden: vec![8], ..TrainConfig::default() };
    let out = train(|_| Ok(ou_env(1, EnvMode::Rl1)), &cfg).unwrap();
    let init = AgentParams::new(HeadKind::Categorical, 7, &[8], &mut ChaCha8Rng::seed_from_u64(0));
    assert_eq!(out.params.flat(), init.flat());
}

#[test]
fn training_is_deterministic_and_slot_parallel_matches_sequential() {
    for mode in [EnvMode::Rl1, EnvMode::Rl2] {
        let mut cfg = TrainConfig { total_steps: 960, hidden: vec![16], n_envs: 3, seed: 5, ..TrainConfig::default() };
        let make = |i: usize| Ok(ou_env(10 + i as u64, mode));
        let a = train(make, &cfg).unwrap();
        let b = train(make, &cfg).unwrap();
        assert_eq!(a.params.checksum(), b.params.checksum());
        cfg.execution = Execution::Parallel;
        let c = train(make, &cfg).unwrap();
        assert_eq!(a.params.checksum(), c.params.checksum());
        assert_eq!(a.params.version, 960 / 15);
    }
}

#[test]
fn entropy_pressure_moves_the_policy_towards_uniform() {
    let mut p = small(HeadKind::Categorical, 4);
    let mut batch = random_batch(HeadKind::Categorical, 32, 1, &mut ChaCha8Rng::seed_from_u64(4));
    for t in &mut batch {
        t.advantage = 0.0;
    }
    let kl = |p: &AgentParams| {
        batch
            .iter()
            .map(|t| p.probabilities(&t.input).unwrap().iter().map(|q| q * (3.0 * q).ln()).sum::<f64>())
            .sum::<f64>()
    };
    let cfg = TrainConfig { learning_rate: 0.05, entropy_coef: 1.0, value_coef: 0.0, ..TrainConfig::default() };
    let mut prev = kl(&p);
    for _ in 0..50 {
        sgd_step(&mut p, &batch, &cfg).unwrap();
        let now = kl(&p);
        assert!(now < prev, "{now} >= {prev}");
        prev = now;
    }
}

#[test]
fn checkpoint_round_trip() {
    let dir = std::env::temp_dir().join(format!("ptac-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    for head in [HeadKind::Categorical, HeadKind::SquashedGaussian] {
        let mut p = small(head, 21);
        p.version = 42;
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &p).unwrap();
        assert_eq!(&bytes[..5], MAGIC);
        assert_eq!(read_checkpoint(bytes.as_slice()).unwrap(), p);
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut corrupt = bytes.clone();
        corrupt[0] = b'X';
        assert!(read_checkpoint(corrupt.as_slice()).is_err());

        let path = dir.join(format!("{head:?}.ptac"));
        let meta = CheckpointMeta::describe(&p, 9, serde_json::json!({ "lr": 0.01 }));
        save_checkpoint(&path, &p, &meta).unwrap();
        let (q, m) = load_checkpoint(&path).unwrap();
        assert_eq!((q, m), (p.clone(), meta));

        p.log_std += 1.0;
        p.policy.params_mut()[0] += 1.0;
        let mut other = Vec::new();
        write_checkpoint(&mut other, &p).unwrap();
        std::fs::write(&path, other).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn flat_agent_has_zero_return_without_fees() {
    let env = ou_env(2, EnvMode::Rl1);
    let mut agent = PolicyAgent { policy: FlatPolicy, mode: EnvMode::Rl1 };
    let out = evaluate(&mut agent, &env, 2, &MetricsConfig::default()).unwrap();
    for r in &out.reports {
        assert_eq!(r.cumulative_return, 0.0);
        assert_eq!(r.trades.total_actions, 0);
    }
}

#[test]
fn evaluation_is_repeatable() {
    let env = ou_env(3, EnvMode::Rl2);
    let p = AgentParams::new(HeadKind::SquashedGaussian, 7, &[16], &mut ChaCha8Rng::seed_from_u64(1));
    let run = || evaluate(&mut ActorCritic::new(p.clone(), ActMode::Stochastic, 8), &env, 3, &MetricsConfig::default()).unwrap().returns;
    assert_eq!(run(), run());
}
