//! Independent reference computations shared by the integration suites.

#![allow(dead_code)]

use std::sync::Arc;

use leo_deploy::constellation::{ConstellationGraph, OrbitalElements, EARTH_ROTATION_DEG_PER_MS};
use leo_deploy::env::{scheme_feasible, Platform, RequestMode, Stage2Env};
use leo_deploy::experiment::bundle::{reference_app, RISING_TOTALS};
use leo_deploy::experiment::reproduce::{default_env_config, reproduction_platform};
use leo_deploy::learn::{surrogate_loss_and_grad, PolicyParams, SurrogateBatch};
use leo_deploy::perf::{cost_core, cost_light_deploy, cost_light_keep, cost_light_parallel};
use leo_deploy::routing::{expand_tasks, RoutingConfig};
use leo_deploy::workload::{enumerate_box_vertices, AppGraph, RequestScenario};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Earth-fixed Cartesian position from orbital elements, by rotating the
/// in-plane position through inclination, ascending node and Earth spin.
pub fn cartesian(e: &OrbitalElements, t_ms: f64) -> [f64; 3] {
    let u = (e.angular_velocity_deg_per_ms * t_ms + e.initial_phase_deg).to_radians();
    let i = e.inclination_deg.to_radians();
    let node = (e.ascending_node_deg - EARTH_ROTATION_DEG_PER_MS * t_ms).to_radians();
    let (x, y) = (u.cos(), u.sin());
    let (y, z) = (y * i.cos(), y * i.sin());
    let (x, y) = (x * node.cos() - y * node.sin(), x * node.sin() + y * node.cos());
    [e.radius_km * x, e.radius_km * y, e.radius_km * z]
}

pub fn euclid(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

pub fn random_elements(rng: &mut ChaCha8Rng, radius: f64) -> OrbitalElements {
    OrbitalElements::new(
        radius,
        rng.gen_range(0.0..180.0),
        rng.gen_range(0.0..360.0),
        rng.gen_range(1e-5..1e-4),
        rng.gen_range(0.0..360.0),
    )
    .unwrap()
}

/// Two-light reference application with parallel capacity `k` on both
/// light microservices.
pub fn small_app(k: u32) -> AppGraph {
    let mut spec = reference_app(2);
    for m in spec.microservices.iter_mut().take(2) {
        m.parallel_capacity = k;
    }
    spec.build().unwrap()
}

/// Minimum objective over every assignment of every task hop to a hosting
/// satellite, recomputed from grid coordinates.
pub fn exhaustive_minimum(
    graph: &ConstellationGraph,
    requests: &[u32],
    slot: &[Vec<u32>],
    k: u32,
    punishment: f64,
) -> f64 {
    let tasks = expand_tasks(requests, 1);
    let hosts: Vec<Vec<usize>> = slot.iter().map(|row| (0..row.len()).filter(|&s| row[s] > 0).collect()).collect();
    let hops = tasks.len() * slot.len();
    let per_plane = graph.per_plane();
    let grid = |a: usize, b: usize| {
        let dp = (a / per_plane) as f64 - (b / per_plane) as f64;
        let ds = (a % per_plane) as f64 - (b % per_plane) as f64;
        (dp * dp + ds * ds).sqrt()
    };
    let mut choice = vec![0usize; hops];
    let mut best = f64::INFINITY;
    loop {
        let mut used = vec![vec![0u32; requests.len()]; slot.len()];
        let mut objective = 0.0;
        for (z, task) in tasks.iter().enumerate() {
            let mut at = task.region;
            for row in 0..slot.len() {
                let sat = hosts[row][choice[z * slot.len() + row]];
                objective += grid(at, sat);
                if used[row][sat] >= slot[row][sat] * k {
                    objective += punishment;
                }
                used[row][sat] += 1;
                at = sat;
            }
        }
        best = best.min(objective);
        let mut pos = hops;
        loop {
            if pos == 0 {
                return best;
            }
            pos -= 1;
            let row = pos % slot.len();
            if choice[pos] + 1 < hosts[row].len() {
                choice[pos] += 1;
                break;
            }
            choice[pos] = 0;
        }
    }
}

/// Minimum of `sum_i (y_i k - z_i)` over every vertex of the box.
pub fn explicit_worst_slack(y: &[u32], k: u32, nominal: &[i64], phi: u32) -> i64 {
    enumerate_box_vertices(&[nominal.to_vec()], phi, u128::MAX)
        .unwrap()
        .iter()
        .map(|z| {
            y.iter()
                .zip(&z[0])
                .map(|(&yi, &zi)| i64::from(yi) * i64::from(k) - zi)
                .sum::<i64>()
        })
        .min()
        .unwrap()
}

pub const CORE: [[u32; 6]; 2] = [[0, 0, 0, 0, 1, 0], [0, 0, 0, 0, 1, 0]];

pub fn platform() -> Arc<Platform> {
    reproduction_platform(default_env_config(), RoutingConfig::default()).unwrap()
}

pub fn core() -> Vec<Vec<u32>> {
    CORE.iter().map(|r| r.to_vec()).collect()
}

pub fn stage2(mode: RequestMode, phi: u32) -> Stage2Env {
    let scenario = RequestScenario::from_totals(&RISING_TOTALS, 6).unwrap();
    Stage2Env::new(platform(), core(), scenario, phi, 60_000.0, mode).unwrap()
}

/// Plays one episode with uniformly random actions and checks every reward
/// component against quantities recomputed from the resulting schedule.
pub fn check_random_episode(seed: u64) {
    let mut env = stage2(RequestMode::Adversarial, 2);
    let cfg = env.platform().env;
    let alpha = cfg.max_copies;
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    env.reset(seed);
    let mut slot_sum = 0.0;
    let mut slot_parts = 0.0;
    let mut last_terminal = 0.0;
    while !env.is_done() {
        if env.awaiting_adversary() && rng.gen_bool(0.8) {
            let q: Vec<i64> = (0..6).map(|_| rng.gen_range(-2..=2)).collect();
            env.adversary_step(&q).unwrap();
        }
        let limit = env.max_feasible();
        let action: Vec<u32> = (0..6).map(|_| rng.gen_range(0..=alpha)).collect();
        let row = env.current_row();
        let step = env.protagonist_step(&action).unwrap();
        let violated = action.iter().zip(&limit).any(|(a, l)| a > l);
        assert_eq!(step.violation, violated);
        assert_eq!(step.parts.step, if violated { cfg.eps_violation } else { cfg.eps_success });
        assert_eq!(step.parts.total, step.parts.step + step.parts.slot + step.parts.terminal);
        assert_eq!(step.reward, step.parts.total);
        for (a, l) in step.applied.iter().zip(&limit) {
            assert!(a <= l);
        }
        // Applied rows so far stay within capacity, and each clipped entry is maximal.
        let mut partial: Vec<Vec<u32>> = env.marking().rows[1..].to_vec();
        for later in partial.iter_mut().skip(row + 1) {
            later.iter_mut().for_each(|n| *n = 0);
        }
        let graph = &env.platform().graph;
        let app = &env.platform().app;
        assert!(scheme_feasible(graph, app, &core(), &partial).unwrap().total_within_capacity());
        for s in 0..6 {
            if step.applied[s] < action[s] && step.applied[s] < alpha {
                let mut grown = partial.clone();
                grown[row][s] += 1;
                assert!(!scheme_feasible(graph, app, &core(), &grown).unwrap().total_within_capacity());
            }
        }
        slot_sum += step.reward;
        slot_parts += step.parts.slot;
        last_terminal = step.parts.terminal;
        match step.adversary_reward {
            Some(r) => {
                assert_eq!(r, -slot_sum);
                slot_sum = 0.0;
            }
            None => assert_eq!(env.current_row(), row + 1),
        }
    }
    let schedule = env.schedule().to_vec();
    let app = &env.platform().app;
    let light = cost_light_deploy(&schedule, app).unwrap()
        + cost_light_keep(&schedule, app).unwrap()
        + cost_light_parallel(&schedule, app).unwrap();
    assert!((slot_parts - cfg.eps_slot_cost * light).abs() < 1e-9);
    let violations: usize = env.outcomes().iter().map(|o| o.violations).sum();
    let total = cost_core(&core(), app, env.slots()).unwrap() + light;
    let expected = cfg.eps_total_cost * total + cfg.eps_qos * violations as f64;
    assert!((last_terminal - expected).abs() < 1e-9, "{last_terminal} vs {expected}");
}

/// Batch of random states and actions with old log-probabilities close to
/// the current ones.
pub fn random_batch(policy: &PolicyParams, rng: &mut ChaCha8Rng, n: usize) -> SurrogateBatch {
    let mut batch = SurrogateBatch {
        states: Vec::new(),
        actions: Vec::new(),
        old_log_probs: Vec::new(),
        advantages: Vec::new(),
    };
    for _ in 0..n {
        let s: Vec<f64> = (0..policy.input_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a: Vec<usize> = (0..policy.heads).map(|_| rng.gen_range(0..policy.classes)).collect();
        let lp = policy.log_prob(&s, &a).unwrap();
        batch.old_log_probs.push(lp + rng.gen_range(-0.05..0.05));
        batch.advantages.push(rng.gen_range(-2.0..2.0));
        batch.states.push(s);
        batch.actions.push(a);
    }
    batch
}

pub fn relative_gap(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / scale.max(1e-12)
}

/// Relative gap between the analytic surrogate gradient and central
/// differences of the surrogate loss.
pub fn surrogate_gradient_gap(policy: &PolicyParams, batch: &SurrogateBatch, clip: f64, entropy: f64) -> f64 {
    let (_, grad) = surrogate_loss_and_grad(policy, batch, clip, entropy).unwrap();
    let theta = policy.actor.flat_params();
    let h = 1e-6;
    let numeric: Vec<f64> = (0..theta.len())
        .map(|i| {
            let mut probe = policy.clone();
            let mut t = theta.clone();
            t[i] += h;
            probe.actor.set_flat_params(&t).unwrap();
            let up = surrogate_loss_and_grad(&probe, batch, clip, entropy).unwrap().0.loss;
            t[i] -= 2.0 * h;
            probe.actor.set_flat_params(&t).unwrap();
            let down = surrogate_loss_and_grad(&probe, batch, clip, entropy).unwrap().0.loss;
            (up - down) / (2.0 * h)
        })
        .collect();
    relative_gap(&grad, &numeric)
}
