//! Training loops for core placement and for light deployment with or
//! without a request adversary, plus greedy evaluation of trained agents.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::policy::PolicyParams;
use super::ppo::{ppo_update, PolicyOptimizer, Rollout, TrainConfig, UpdateDiagnostics};
use crate::env::{scheme_feasible, FeasibilityReport, RequestMode, SlotOutcome, Stage1Env, Stage2Env};
use crate::error::{Error, Result};

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy)]
enum Stream {
    ProtagonistInit = 1,
    ProtagonistSampling = 2,
    AdversaryInit = 3,
    AdversarySampling = 4,
    ProtagonistInAdversaryPhase = 5,
    EnvSeeds = 6,
    AdversaryEnvSeeds = 7,
}

fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Scale vector for stage-1 observations.
pub fn stage1_input_scale(env: &Stage1Env) -> Vec<f64> {
    let mut scale = vec![1.0; env.observation_len()];
    let cores = env.platform().app.core().len() as f64;
    *scale.last_mut().unwrap_or(&mut 0.0) = 1.0 / cores;
    scale
}

/// Scale vector for protagonist observations `[vec(P), i, u]`.
pub fn protagonist_input_scale(env: &Stage2Env) -> Vec<f64> {
    let d = env.platform().satellites();
    let light = env.light_count();
    let cfg = env.platform().env;
    let mut scale = vec![1.0 / cfg.request_scale; d];
    scale.extend(std::iter::repeat_n(1.0 / f64::from(cfg.max_copies), light * d));
    scale.push(1.0 / env.horizon() as f64);
    scale.push(1.0 / light as f64);
    scale
}

/// Scale vector for adversary observations `[vec(P_ori), j]`.
pub fn adversary_input_scale(env: &Stage2Env) -> Vec<f64> {
    let mut scale = protagonist_input_scale(env);
    scale.truncate(scale.len() - 2);
    scale.push(1.0 / env.slots() as f64);
    scale
}

pub fn new_protagonist(env: &Stage2Env, config: &TrainConfig, seed: u64) -> Result<PolicyParams> {
    let d = env.platform().satellites();
    let classes = env.platform().env.max_copies as usize + 1;
    PolicyParams::new(
        protagonist_input_scale(env),
        d,
        classes,
        &config.hidden,
        &mut stream(seed, Stream::ProtagonistInit),
    )
}

pub fn new_adversary(env: &Stage2Env, config: &TrainConfig, seed: u64) -> Result<PolicyParams> {
    let d = env.platform().satellites();
    let classes = 2 * env.phi() as usize + 1;
    PolicyParams::new(
        adversary_input_scale(env),
        d,
        classes,
        &config.hidden,
        &mut stream(seed, Stream::AdversaryInit),
    )
}

/// Maps categorical classes `0..=2 phi` to perturbations `-phi..=phi`.
pub fn perturbation(action: &[usize], phi: u32) -> Vec<i64> {
    action.iter().map(|&c| c as i64 - i64::from(phi)).collect()
}

/// One row of a training curve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub protagonist_return: f64,
    pub adversary_return: f64,
    pub protagonist: UpdateDiagnostics,
    pub adversary: UpdateDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Protagonist,
    Adversary,
}

/// One rollout-and-update round, as executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub iteration: usize,
    pub phase: Phase,
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Result {
    pub policy: PolicyParams,
    pub core: Vec<Vec<u32>>,
    pub certificate: FeasibilityReport,
    /// False when the greedy decode failed and the best sampled placement
    /// was returned instead.
    pub greedy_decoded: bool,
    pub terminal_latency_ms: f64,
    pub curve: Vec<CurvePoint>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Learns a core placement with one satellite choice per step.
pub fn train_stage1(env: &mut Stage1Env, config: &TrainConfig, seed: u64) -> Result<Stage1Result> {
    config.validate()?;
    let d = env.platform().satellites();
    let mut policy = PolicyParams::new(
        stage1_input_scale(env),
        1,
        d,
        &config.hidden,
        &mut stream(seed, Stream::ProtagonistInit),
    )?;
    let mut optimizer = PolicyOptimizer::new(&policy, config.learning_rate);
    let mut rng = stream(seed, Stream::ProtagonistSampling);
    let mut best: Option<(f64, Vec<Vec<u32>>, f64)> = None;
    let mut curve = Vec::new();
    for iteration in 0..config.iterations {
        let mut rollout = Rollout::default();
        for _ in 0..config.episodes_per_round {
            let mut state = env.reset().to_vec();
            let mut ret = 0.0;
            loop {
                let (action, log_prob) = policy.sample_action(&state, &mut rng)?;
                let value = policy.value(&state)?;
                let step = env.step(action[0])?;
                ret += step.reward;
                rollout.push(state, action, step.reward, log_prob, value, step.done);
                state = step.state.to_vec();
                if let Some(latency) = step.terminal_latency_ms {
                    if best.as_ref().is_none_or(|b| ret > b.0) {
                        best = Some((ret, env.core_scheme(), latency));
                    }
                }
                if step.done {
                    break;
                }
            }
        }
        let diag = ppo_update(&mut policy, &mut optimizer, &rollout, config)?;
        curve.push(CurvePoint {
            iteration,
            protagonist_return: mean(&rollout.episode_returns()),
            protagonist: diag,
            ..CurvePoint::default()
        });
    }
    // Greedy decode.
    let mut state = env.reset().to_vec();
    let mut decoded = None;
    while !env.is_done() {
        let action = policy.greedy(&state)?;
        let step = env.step(action[0])?;
        state = step.state.to_vec();
        if let Some(latency) = step.terminal_latency_ms {
            decoded = Some((env.core_scheme(), latency));
        }
    }
    let (core, latency, greedy_decoded) = match (decoded, best) {
        (Some((core, latency)), _) => (core, latency, true),
        (None, Some((_, core, latency))) => (core, latency, false),
        (None, None) => {
            return Err(Error::Infeasible("no complete core placement found within the episode budget".into()))
        }
    };
    let platform = env.platform();
    let empty = vec![vec![0; d]; platform.app.light().len()];
    let certificate = scheme_feasible(&platform.graph, &platform.app, &core, &empty)?;
    if !certificate.core_complete() || !certificate.core_within_capacity() {
        return Err(Error::Infeasible(format!("decoded core placement is infeasible: {certificate:?}")));
    }
    Ok(Stage1Result {
        policy,
        core,
        certificate,
        greedy_decoded,
        terminal_latency_ms: latency,
        curve,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsrarlResult {
    pub protagonist: PolicyParams,
    pub adversary: Option<PolicyParams>,
    pub curve: Vec<CurvePoint>,
    pub schedule: Vec<PhaseRecord>,
    /// Set when training stopped on a non-finite update; the policies are
    /// the last finite ones.
    pub diverged: Option<String>,
    /// Protagonist rollouts of the first round, for trajectory comparisons.
    pub first_rollout: Rollout,
}

struct EpisodeData {
    protagonist: Rollout,
    adversary: Rollout,
}

/// Plays one episode with sampled actions. The adversary acts only when
/// given and when the environment is in adversarial mode.
fn sample_episode(
    env: &mut Stage2Env,
    protagonist: &PolicyParams,
    adversary: Option<&PolicyParams>,
    env_seed: u64,
    prot_rng: &mut ChaCha8Rng,
    adv_rng: &mut ChaCha8Rng,
) -> Result<EpisodeData> {
    let mut data = EpisodeData {
        protagonist: Rollout::default(),
        adversary: Rollout::default(),
    };
    env.reset(env_seed);
    let phi = env.phi();
    let mut pending: Option<(Vec<f64>, Vec<usize>, f64, f64)> = None;
    while !env.is_done() {
        if env.awaiting_adversary() {
            if let Some(adv) = adversary {
                let s = env.adversary_state().0;
                let (a, lp) = adv.sample_action(&s, adv_rng)?;
                let v = adv.value(&s)?;
                env.adversary_step(&perturbation(&a, phi))?;
                pending = Some((s, a, lp, v));
            }
        }
        let s = env.protagonist_state().0;
        let (a, lp) = protagonist.sample_action(&s, prot_rng)?;
        let v = protagonist.value(&s)?;
        let counts: Vec<u32> = a.iter().map(|&c| c as u32).collect();
        let step = env.protagonist_step(&counts)?;
        data.protagonist.push(s, a, step.reward, lp, v, step.done);
        if let Some(r) = step.adversary_reward {
            if let Some((s, a, lp, v)) = pending.take() {
                data.adversary.push(s, a, r, lp, v, step.done);
            }
        }
    }
    Ok(data)
}

fn append(into: &mut Rollout, from: Rollout) {
    into.states.extend(from.states);
    into.actions.extend(from.actions);
    into.rewards.extend(from.rewards);
    into.log_probs.extend(from.log_probs);
    into.values.extend(from.values);
    into.dones.extend(from.dones);
}

/// Alternating protagonist/adversary training. Each iteration runs
/// `epochs` protagonist rounds against the frozen adversary, then `epochs`
/// adversary rounds against the frozen protagonist.
pub fn train_msrarl(env: &Stage2Env, config: &TrainConfig, seed: u64) -> Result<MsrarlResult> {
    let mut env = env.clone();
    env.set_mode(RequestMode::Adversarial);
    train_alternating(env, config, seed, true)
}

/// Protagonist-only training on nominal requests, with the same random
/// streams as [`train_msrarl`] so that a zero-width box yields identical
/// protagonist trajectories.
pub fn train_vanilla(env: &Stage2Env, config: &TrainConfig, seed: u64) -> Result<MsrarlResult> {
    let mut env = env.clone();
    env.set_mode(RequestMode::Nominal);
    train_alternating(env, config, seed, false)
}

fn train_alternating(mut env: Stage2Env, config: &TrainConfig, seed: u64, adversarial: bool) -> Result<MsrarlResult> {
    config.validate()?;
    env.set_logging(false);
    let mut protagonist = new_protagonist(&env, config, seed)?;
    let mut adversary = if adversarial {
        Some(new_adversary(&env, config, seed)?)
    } else {
        None
    };
    let mut prot_opt = PolicyOptimizer::new(&protagonist, config.learning_rate);
    let mut adv_opt = adversary.as_ref().map(|a| PolicyOptimizer::new(a, config.learning_rate));
    let mut prot_rng = stream(seed, Stream::ProtagonistSampling);
    let mut adv_rng = stream(seed, Stream::AdversarySampling);
    let mut frozen_rng = stream(seed, Stream::ProtagonistInAdversaryPhase);
    let mut seed_rng = stream(seed, Stream::EnvSeeds);
    let mut adv_seed_rng = stream(seed, Stream::AdversaryEnvSeeds);
    let mut curve = Vec::new();
    let mut schedule = Vec::new();
    let mut first_rollout = None;
    let mut diverged = None;
    'outer: for iteration in 0..config.iterations {
        let mut point = CurvePoint {
            iteration,
            ..CurvePoint::default()
        };
        let mut returns = Vec::new();
        for round in 0..config.epochs {
            schedule.push(PhaseRecord {
                iteration,
                phase: Phase::Protagonist,
                round,
            });
            let mut rollout = Rollout::default();
            for _ in 0..config.episodes_per_round {
                let env_seed = rand::Rng::gen(&mut seed_rng);
                let data = sample_episode(
                    &mut env,
                    &protagonist,
                    adversary.as_ref(),
                    env_seed,
                    &mut prot_rng,
                    &mut adv_rng,
                )?;
                append(&mut rollout, data.protagonist);
            }
            returns.extend(rollout.episode_returns());
            if first_rollout.is_none() {
                first_rollout = Some(rollout.clone());
            }
            let snapshot = protagonist.clone();
            match ppo_update(&mut protagonist, &mut prot_opt, &rollout, config) {
                Ok(d) => point.protagonist = d,
                Err(Error::Divergence(msg)) => {
                    protagonist = snapshot;
                    diverged = Some(msg);
                    break 'outer;
                }
                Err(e) => return Err(e),
            }
        }
        point.protagonist_return = mean(&returns);
        if let (Some(adv), Some(opt)) = (adversary.as_mut(), adv_opt.as_mut()) {
            let mut returns = Vec::new();
            for round in 0..config.epochs {
                schedule.push(PhaseRecord {
                    iteration,
                    phase: Phase::Adversary,
                    round,
                });
                let mut rollout = Rollout::default();
                for _ in 0..config.episodes_per_round {
                    let env_seed = rand::Rng::gen(&mut adv_seed_rng);
                    let data = sample_episode(&mut env, &protagonist, Some(adv), env_seed, &mut frozen_rng, &mut adv_rng)?;
                    append(&mut rollout, data.adversary);
                }
                returns.extend(rollout.episode_returns());
                let snapshot = adv.clone();
                match ppo_update(adv, opt, &rollout, config) {
                    Ok(d) => point.adversary = d,
                    Err(Error::Divergence(msg)) => {
                        *adv = snapshot;
                        diverged = Some(msg);
                        curve.push(point);
                        break 'outer;
                    }
                    Err(e) => return Err(e),
                }
            }
            point.adversary_return = mean(&returns);
        }
        curve.push(point);
    }
    Ok(MsrarlResult {
        protagonist,
        adversary,
        curve,
        schedule,
        diverged,
        first_rollout: first_rollout.unwrap_or_default(),
    })
}

/// Outcome of a greedy evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub schedule: Vec<Vec<Vec<u32>>>,
    pub outcomes: Vec<SlotOutcome>,
    pub protagonist_return: f64,
    pub adversary_return: f64,
}

/// Greedy counts for the current row, with at least one instance of the
/// row's microservice placed on the feasible satellite most likely to host it.
pub fn greedy_counts(env: &Stage2Env, protagonist: &PolicyParams) -> Result<Vec<u32>> {
    let state = env.protagonist_state().0;
    let limit = env.max_feasible();
    let mut counts: Vec<u32> = protagonist
        .greedy(&state)?
        .iter()
        .zip(&limit)
        .map(|(&c, &l)| (c as u32).min(l))
        .collect();
    if counts.iter().all(|&c| c == 0) {
        let probs = protagonist.probabilities(&state)?;
        let pick = (0..counts.len())
            .filter(|&s| limit[s] > 0)
            .max_by(|&a, &b| (1.0 - probs[a][0]).total_cmp(&(1.0 - probs[b][0])).then(b.cmp(&a)))
            .ok_or_else(|| Error::Infeasible("no satellite can host the current microservice".into()))?;
        counts[pick] = 1;
    }
    Ok(counts)
}

/// Runs one episode with greedy protagonist (and adversary, if given and
/// the environment is adversarial) decisions.
pub fn evaluate_policy(
    env: &Stage2Env,
    protagonist: &PolicyParams,
    adversary: Option<&PolicyParams>,
    seed: u64,
) -> Result<Evaluation> {
    let mut env = env.clone();
    env.reset(seed);
    let mut protagonist_return = 0.0;
    let mut adversary_return = 0.0;
    while !env.is_done() {
        if env.awaiting_adversary() {
            if let Some(adv) = adversary {
                let a = adv.greedy(&env.adversary_state().0)?;
                env.adversary_step(&perturbation(&a, env.phi()))?;
            }
        }
        let counts = greedy_counts(&env, protagonist)?;
        let step = env.protagonist_step(&counts)?;
        protagonist_return += step.reward;
        adversary_return += step.adversary_reward.unwrap_or(0.0);
    }
    Ok(Evaluation {
        schedule: env.schedule().to_vec(),
        outcomes: env.outcomes().to_vec(),
        protagonist_return,
        adversary_return,
    })
}

/// Plays a fixed light schedule through the environment.
pub fn evaluate_schedule(env: &Stage2Env, schedule: &[Vec<Vec<u32>>], seed: u64) -> Result<Evaluation> {
    let mut env = env.clone();
    env.reset(seed);
    if schedule.len() != env.slots() {
        return Err(Error::ShapeMismatch(format!(
            "schedule has {} slots, scenario {}",
            schedule.len(),
            env.slots()
        )));
    }
    let mut protagonist_return = 0.0;
    for slot in schedule {
        for row in slot {
            let step = env.protagonist_step(row)?;
            protagonist_return += step.reward;
        }
    }
    Ok(Evaluation {
        schedule: env.schedule().to_vec(),
        outcomes: env.outcomes().to_vec(),
        protagonist_return,
        adversary_return: 0.0,
    })
}

/// Mean returns of a protagonist against an adversary with sampled actions
/// over a fixed seed set: `(protagonist, adversary)`.
pub fn mean_returns(
    env: &Stage2Env,
    protagonist: &PolicyParams,
    adversary: &PolicyParams,
    seeds: &[u64],
) -> Result<(f64, f64)> {
    let mut env = env.clone();
    env.set_mode(RequestMode::Adversarial);
    let mut p = 0.0;
    let mut a = 0.0;
    for &seed in seeds {
        let mut prot_rng = stream(seed, Stream::ProtagonistSampling);
        let mut adv_rng = stream(seed, Stream::AdversarySampling);
        let data = sample_episode(&mut env, protagonist, Some(adversary), seed, &mut prot_rng, &mut adv_rng)?;
        p += data.protagonist.rewards.iter().sum::<f64>();
        a += data.adversary.rewards.iter().sum::<f64>();
    }
    let n = seeds.len().max(1) as f64;
    Ok((p / n, a / n))
}
