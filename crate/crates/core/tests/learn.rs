mod oracles;

use leo_deploy::env::{scheme_feasible, RequestMode, Stage1Env};
use leo_deploy::learn::{
    evaluate_policy, hpa_baseline, new_adversary, new_protagonist, robust_hpa_baseline, train_msrarl, train_stage1,
    train_vanilla, value_loss_and_grad, Checkpoint, Phase, PolicyParams, TrainConfig,
};
use leo_deploy::workload::RequestScenario;
use leo_deploy::Error;
use oracles::{core, platform, random_batch, relative_gap, stage2, surrogate_gradient_gap};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config() -> TrainConfig {
    TrainConfig {
        iterations: 2,
        epochs: 2,
        episodes_per_round: 2,
        update_passes: 2,
        hidden: vec![16],
        ..TrainConfig::default()
    }
}

#[test]
fn surrogate_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..20 {
        let policy = PolicyParams::new(vec![1.0; 3], 2, 3, &[6], &mut rng).unwrap();
        assert!(policy.actor.param_count() <= 200);
        let batch = random_batch(&policy, &mut rng, 8);
        let gap = surrogate_gradient_gap(&policy, &batch, 0.2, 0.01);
        assert!(gap <= 1e-4, "batch {trial}: relative gap {gap}");
    }
}

#[test]
fn value_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let policy = PolicyParams::new(vec![1.0; 4], 1, 2, &[5], &mut rng).unwrap();
    let states: Vec<Vec<f64>> = (0..6).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let targets: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let (_, grad) = value_loss_and_grad(&policy, &states, &targets).unwrap();
    let theta = policy.critic.flat_params();
    let h = 1e-6;
    let numeric: Vec<f64> = (0..theta.len())
        .map(|i| {
            let mut probe = policy.clone();
            let mut t = theta.clone();
            t[i] += h;
            probe.critic.set_flat_params(&t).unwrap();
            let up = value_loss_and_grad(&probe, &states, &targets).unwrap().0;
            t[i] -= 2.0 * h;
            probe.critic.set_flat_params(&t).unwrap();
            let down = value_loss_and_grad(&probe, &states, &targets).unwrap().0;
            (up - down) / (2.0 * h)
        })
        .collect();
    assert!(relative_gap(&grad, &numeric) <= 1e-4);
}

#[test]
fn zero_width_box_reproduces_vanilla_trajectories() {
    let env = stage2(RequestMode::Adversarial, 0);
    let config = small_config();
    let robust = train_msrarl(&env, &config, 5).unwrap();
    let vanilla = train_vanilla(&env, &config, 5).unwrap();
    assert_eq!(robust.first_rollout, vanilla.first_rollout);
    assert!(robust.adversary.is_some());
    assert!(vanilla.adversary.is_none());
}

#[test]
fn training_alternates_protagonist_and_adversary_phases() {
    let env = stage2(RequestMode::Adversarial, 2);
    let config = small_config();
    let result = train_msrarl(&env, &config, 1).unwrap();
    let mut expected = Vec::new();
    for iteration in 0..config.iterations {
        for phase in [Phase::Protagonist, Phase::Adversary] {
            for round in 0..config.epochs {
                expected.push((iteration, phase, round));
            }
        }
    }
    let got: Vec<_> = result.schedule.iter().map(|r| (r.iteration, r.phase, r.round)).collect();
    assert_eq!(got, expected);
    assert_eq!(result.curve.len(), config.iterations);
    assert!(result.diverged.is_none());
    let vanilla = train_vanilla(&env, &config, 1).unwrap();
    assert!(vanilla.schedule.iter().all(|r| r.phase == Phase::Protagonist));
}

#[test]
fn training_is_deterministic_per_seed() {
    let env = stage2(RequestMode::Adversarial, 1);
    let config = small_config();
    let a = train_msrarl(&env, &config, 9).unwrap();
    let b = train_msrarl(&env, &config, 9).unwrap();
    assert_eq!(a.protagonist, b.protagonist);
    assert_eq!(a.curve, b.curve);
}

#[test]
fn greedy_evaluation_deploys_every_light_microservice() {
    let env = stage2(RequestMode::Adversarial, 2);
    let config = small_config();
    let prot = new_protagonist(&env, &config, 0).unwrap();
    let adv = new_adversary(&env, &config, 0).unwrap();
    let eval = evaluate_policy(&env, &prot, Some(&adv), 0).unwrap();
    assert_eq!(eval.schedule.len(), env.slots());
    for slot in &eval.schedule {
        let report = scheme_feasible(&env.platform().graph, &env.platform().app, &core(), slot).unwrap();
        assert!(report.feasible(), "{report:?}");
    }
}

#[test]
fn stage1_training_returns_a_feasible_core() {
    let mut env = Stage1Env::new(platform()).unwrap();
    let config = TrainConfig {
        iterations: 5,
        ..small_config()
    };
    let result = train_stage1(&mut env, &config, 0).unwrap();
    assert!(result.certificate.core_complete() && result.certificate.core_within_capacity());
    assert_eq!(result.core.len(), 2);
    assert!(result.core.iter().all(|row| row.iter().sum::<u32>() == 1));
    assert!(result.terminal_latency_ms.is_finite());
}

#[test]
fn checkpoints_round_trip_and_reject_wrong_shapes() {
    let env = stage2(RequestMode::Adversarial, 1);
    let prot = new_protagonist(&env, &small_config(), 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/prot.json");
    let ckpt = Checkpoint {
        config_hash: "abc".into(),
        seed: 4,
        iteration: 2,
        role: "protagonist".into(),
        params: prot.clone(),
    };
    ckpt.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, ckpt);
    loaded.check_shape(env.protagonist_state_len(), prot.heads, prot.classes).unwrap();
    let err = loaded.check_shape(env.adversary_state_len(), prot.heads, prot.classes).unwrap_err();
    assert!(matches!(err, Error::CheckpointMismatch(_)));
    std::fs::write(&path, "{not json").unwrap();
    assert!(Checkpoint::load(&path).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn robust_autoscaling_never_deploys_less(totals in prop::collection::vec(0u32..90, 1..6), phi in 0u32..=4) {
        let platform = platform();
        let scenario = RequestScenario::from_totals(&totals, 6).unwrap();
        let plain = hpa_baseline(&platform, &core(), &scenario);
        let robust = robust_hpa_baseline(&platform, &core(), &scenario, phi);
        if let (Ok(plain), Ok(robust)) = (plain, robust) {
            for (p, r) in plain.iter().flatten().flatten().zip(robust.iter().flatten().flatten()) {
                prop_assert!(r >= p);
            }
            for slot in &robust {
                let report = scheme_feasible(&platform.graph, &platform.app, &core(), slot).unwrap();
                prop_assert!(report.total_within_capacity());
            }
        }
    }
}
