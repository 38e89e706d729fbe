mod oracles;

use std::sync::Arc;

use leo_deploy::env::{core_chain_latency, scheme_feasible, Agent, Platform, RequestMode, Stage1Env, Stage2Env};
use leo_deploy::experiment::bundle::{reference_app, reference_constellation, NODE_CAPACITY, RISING_TOTALS};
use leo_deploy::experiment::reproduce::default_env_config;
use leo_deploy::routing::RoutingConfig;
use leo_deploy::workload::RequestScenario;
use leo_deploy::Error;
use oracles::{check_random_episode, core, platform, stage2};
use proptest::prelude::*;

#[test]
fn reward_bookkeeping_holds_over_random_episodes() {
    for seed in 0..100 {
        check_random_episode(seed);
    }
}

#[test]
fn state_layouts_have_the_documented_lengths() {
    let mut env = stage2(RequestMode::Adversarial, 2);
    let d = 6;
    let light = 2;
    let s = env.reset(3);
    assert_eq!(s.0.len(), (1 + light) * d + 2);
    assert_eq!(env.adversary_state().0.len(), (1 + light) * d + 1);
    assert_eq!(env.protagonist_state_len(), s.0.len());
    assert_eq!(env.horizon(), light * RISING_TOTALS.len());
    assert_eq!(&s.0[..d], &env.scenario().nominal[0].iter().map(|&n| f64::from(n)).collect::<Vec<_>>()[..]);
}

#[test]
fn adversary_moves_stay_inside_the_box() {
    let mut env = stage2(RequestMode::Adversarial, 2);
    env.reset(0);
    assert!(matches!(env.adversary_step(&[3, 0, 0, 0, 0, 0]), Err(Error::InvalidAction(_))));
    assert!(matches!(env.adversary_step(&[0; 5]), Err(Error::InvalidAction(_))));
    env.adversary_step(&[-2, 2, 0, 0, 0, 0]).unwrap();
    let nominal = &env.scenario().nominal[0];
    assert_eq!(env.marking().requests()[0], nominal[0] - 2);
    assert_eq!(env.marking().requests()[1], nominal[1] + 2);
    assert!(env.adversary_step(&[0; 6]).is_err(), "one move per slot");
}

#[test]
fn vertex_modes_shift_every_region() {
    let mut up = stage2(RequestMode::UpperVertex, 2);
    let mut down = stage2(RequestMode::LowerVertex, 2);
    up.reset(0);
    down.reset(0);
    for (t, row) in up.scenario().nominal.iter().enumerate() {
        for (s, &n) in row.iter().enumerate() {
            assert_eq!(up.realized_requests()[t][s], n + 2);
            assert_eq!(down.realized_requests()[t][s], n.saturating_sub(2));
        }
    }
    assert!(!up.awaiting_adversary());
}

#[test]
fn missing_light_instance_violates_every_task() {
    let mut env = stage2(RequestMode::Nominal, 0);
    env.reset(0);
    env.protagonist_step(&[1, 0, 0, 0, 0, 0]).unwrap();
    env.protagonist_step(&[0; 6]).unwrap();
    let outcome = &env.outcomes()[0];
    assert_eq!(outcome.violations, outcome.tasks);
    assert_eq!(outcome.processed, 0);
    assert!(!outcome.feasible);
}

#[test]
fn trajectory_log_pairs_adversary_rewards() {
    let mut env = stage2(RequestMode::Adversarial, 1);
    env.set_logging(true);
    env.reset(0);
    env.adversary_step(&[1, 0, 0, 0, 0, 0]).unwrap();
    let a = env.protagonist_step(&[1, 1, 0, 0, 0, 0]).unwrap();
    let b = env.protagonist_step(&[1, 0, 1, 0, 0, 0]).unwrap();
    let log = env.trajectory();
    assert_eq!(log.len(), 3);
    assert_eq!(log[0].agent, Agent::Adversary);
    assert_eq!(log[0].reward, Some(-(a.reward + b.reward)));
    let mut buf = Vec::new();
    env.write_trajectory_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().nth(1).unwrap().starts_with("adversary,0,0,"));
}

#[test]
fn infeasible_core_is_rejected() {
    let scenario = RequestScenario::from_totals(&RISING_TOTALS, 6).unwrap();
    let missing = vec![vec![0; 6], vec![1, 0, 0, 0, 0, 0]];
    let err = Stage2Env::new(platform(), missing, scenario.clone(), 1, 60_000.0, RequestMode::Nominal).unwrap_err();
    assert!(matches!(err, Error::Infeasible(_)));
    let crowded = vec![vec![3, 0, 0, 0, 0, 0], vec![1, 0, 0, 0, 0, 0]];
    assert!(Stage2Env::new(platform(), crowded, scenario, 1, 60_000.0, RequestMode::Nominal).is_err());
}

fn tight_platform() -> Arc<Platform> {
    let mut spec = reference_constellation(2, 3);
    let mut caps = vec![NODE_CAPACITY.to_vec(); 6];
    caps[0] = vec![0.5, 0.5, 0.5, 10.0];
    spec.node_capacities = Some(caps);
    let graph = spec.build().unwrap();
    let app = reference_app(2).build().unwrap();
    Arc::new(Platform::new(graph, app, RoutingConfig::default(), default_env_config()).unwrap())
}

#[test]
fn first_stage_rejects_placements_that_do_not_fit() {
    let mut env = Stage1Env::new(tight_platform()).unwrap();
    let rewards = env.platform().env.stage1;
    assert_eq!(env.observation_len(), 2 * 6 + 1);
    assert!(!env.fits(0));
    let step = env.step(0).unwrap();
    assert!(!step.placed);
    assert_eq!(step.reward, rewards.violation);
    assert_eq!(step.state.current, 0);
    assert!(step.state.placed.iter().all(|&b| b == 0));
    assert!(env.step(6).is_err());
}

#[test]
fn first_stage_terminal_reward_charges_core_latency() {
    let mut env = Stage1Env::new(tight_platform()).unwrap();
    let rewards = env.platform().env.stage1;
    let first = env.step(2).unwrap();
    assert_eq!(first.reward, rewards.success);
    assert_eq!(first.terminal_latency_ms, None);
    let last = env.step(5).unwrap();
    assert!(last.done);
    let scheme = env.core_scheme();
    assert_eq!(scheme, vec![vec![0, 0, 1, 0, 0, 0], vec![0, 0, 0, 0, 0, 1]]);
    let latency = core_chain_latency(env.platform(), &scheme).unwrap();
    assert_eq!(last.terminal_latency_ms, Some(latency));
    assert!((last.reward - (rewards.success - rewards.latency_weight * latency)).abs() < 1e-12);
}

#[test]
fn first_stage_step_budget_ends_the_episode() {
    let mut env = Stage1Env::new(tight_platform()).unwrap();
    let budget = env.platform().env.stage1.step_budget_factor * 2;
    for _ in 0..budget {
        assert!(!env.is_done());
        env.step(0).unwrap();
    }
    assert!(env.is_done());
    assert!(env.step(1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn clipped_actions_never_exceed_capacity(seed in any::<u64>(), actions in prop::collection::vec(prop::collection::vec(0u32..=10, 6), 10)) {
        let mut env = stage2(RequestMode::Sampled, 2);
        env.reset(seed);
        let alpha = env.platform().env.max_copies;
        for action in actions {
            let action: Vec<u32> = action.into_iter().map(|a| a.min(alpha)).collect();
            env.protagonist_step(&action).unwrap();
        }
        prop_assert!(env.is_done());
        for (slot, outcome) in env.schedule().iter().zip(env.outcomes()) {
            let report = scheme_feasible(&env.platform().graph, &env.platform().app, &core(), slot).unwrap();
            prop_assert!(report.total_within_capacity());
            prop_assert_eq!(outcome.feasible, report.feasible());
            prop_assert_eq!(outcome.processed + outcome.violations, outcome.tasks);
        }
    }

    #[test]
    fn sampled_requests_stay_inside_the_box(seed in any::<u64>(), phi in 0u32..=3) {
        let mut env = stage2(RequestMode::Sampled, phi);
        env.reset(seed);
        for (row, nominal) in env.realized_requests().iter().zip(&env.scenario().nominal) {
            for (&z, &n) in row.iter().zip(nominal) {
                prop_assert!(i64::from(z) >= (i64::from(n) - i64::from(phi)).max(0));
                prop_assert!(i64::from(z) <= i64::from(n) + i64::from(phi));
            }
        }
    }
}
