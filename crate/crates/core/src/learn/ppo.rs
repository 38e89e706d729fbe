//! Clipped-surrogate policy optimization with generalized advantage estimates.

use serde::{Deserialize, Serialize};

use super::nn::Adam;
use super::policy::PolicyParams;
use crate::error::{Error, Result};

fn default_iterations() -> usize {
    40
}
fn default_epochs() -> usize {
    5
}
fn default_episodes_per_round() -> usize {
    16
}
fn default_update_passes() -> usize {
    10
}
fn default_clip() -> f64 {
    0.2
}
fn default_discount() -> f64 {
    0.99
}
fn default_gae_lambda() -> f64 {
    0.95
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}
fn default_entropy_coef() -> f64 {
    0.01
}
fn default_max_grad_norm() -> f64 {
    0.5
}
fn default_reward_scale() -> f64 {
    0.01
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Outer iterations; each runs a protagonist phase and, when an
    /// adversary is trained, an adversary phase.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Rollout-and-update rounds per phase.
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_episodes_per_round")]
    pub episodes_per_round: usize,
    /// Gradient passes over each rollout batch.
    #[serde(default = "default_update_passes")]
    pub update_passes: usize,
    #[serde(default = "default_clip")]
    pub clip: f64,
    #[serde(default = "default_discount")]
    pub discount: f64,
    /// Exponential smoothing of the advantage estimator.
    #[serde(default = "default_gae_lambda")]
    pub gae_lambda: f64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_entropy_coef")]
    pub entropy_coef: f64,
    /// Global gradient-norm clip; zero disables clipping.
    #[serde(default = "default_max_grad_norm")]
    pub max_grad_norm: f64,
    /// Multiplier applied to rewards before advantage estimation.
    #[serde(default = "default_reward_scale")]
    pub reward_scale: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: default_iterations(),
            epochs: default_epochs(),
            episodes_per_round: default_episodes_per_round(),
            update_passes: default_update_passes(),
            clip: default_clip(),
            discount: default_discount(),
            gae_lambda: default_gae_lambda(),
            learning_rate: default_learning_rate(),
            hidden: default_hidden(),
            entropy_coef: default_entropy_coef(),
            max_grad_norm: default_max_grad_norm(),
            reward_scale: default_reward_scale(),
            seeds: default_seeds(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.clip > 0.0 && self.clip < 1.0, "clip must lie in (0, 1)"),
            (self.discount > 0.0 && self.discount <= 1.0, "discount must lie in (0, 1]"),
            (self.gae_lambda >= 0.0 && self.gae_lambda <= 1.0, "gae_lambda must lie in [0, 1]"),
            (self.learning_rate > 0.0, "learning_rate must be positive"),
            (self.iterations >= 1 && self.epochs >= 1, "iterations and epochs must be positive"),
            (self.episodes_per_round >= 1 && self.update_passes >= 1, "episodes_per_round and update_passes must be positive"),
            (self.entropy_coef >= 0.0 && self.max_grad_norm >= 0.0, "entropy_coef and max_grad_norm must be non-negative"),
            (self.reward_scale > 0.0, "reward_scale must be positive"),
            (self.hidden.iter().all(|&h| h > 0), "hidden sizes must be positive"),
            (!self.seeds.is_empty(), "at least one seed is required"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidConfig(msg.into()));
            }
        }
        Ok(())
    }
}

/// Transitions of one or more consecutive episodes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<usize>>,
    pub rewards: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    /// True on the last transition of each episode.
    pub dones: Vec<bool>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn push(&mut self, state: Vec<f64>, action: Vec<usize>, reward: f64, log_prob: f64, value: f64, done: bool) {
        self.states.push(state);
        self.actions.push(action);
        self.rewards.push(reward);
        self.log_probs.push(log_prob);
        self.values.push(value);
        self.dones.push(done);
    }

    fn check(&self) -> Result<()> {
        let n = self.states.len();
        let same = [self.actions.len(), self.rewards.len(), self.log_probs.len(), self.values.len(), self.dones.len()];
        if same.iter().any(|&l| l != n) {
            return Err(Error::ShapeMismatch("rollout fields differ in length".into()));
        }
        if n == 0 {
            return Err(Error::InvalidConfig("empty rollout".into()));
        }
        Ok(())
    }

    /// Summed reward of each complete episode.
    pub fn episode_returns(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut acc = 0.0;
        for (r, &done) in self.rewards.iter().zip(&self.dones) {
            acc += r;
            if done {
                out.push(acc);
                acc = 0.0;
            }
        }
        out
    }
}

/// Generalized advantage estimates and value targets.
pub fn advantages(rewards: &[f64], values: &[f64], dones: &[bool], discount: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut gae = 0.0;
    for i in (0..n).rev() {
        let next = if dones[i] || i + 1 == n { 0.0 } else { values[i + 1] };
        let cont = if dones[i] { 0.0 } else { 1.0 };
        let delta = rewards[i] + discount * next - values[i];
        gae = delta + discount * lambda * cont * gae;
        adv[i] = gae;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Inputs of the clipped surrogate objective.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateBatch {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<usize>>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SurrogateStats {
    pub loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Negated clipped surrogate minus the entropy bonus, averaged over the
/// batch, and its gradient with respect to the actor parameters.
pub fn surrogate_loss_and_grad(
    policy: &PolicyParams,
    batch: &SurrogateBatch,
    clip: f64,
    entropy_coef: f64,
) -> Result<(SurrogateStats, Vec<f64>)> {
    let n = batch.states.len();
    if n == 0 {
        return Err(Error::InvalidConfig("empty surrogate batch".into()));
    }
    let inv = 1.0 / n as f64;
    let mut grad = vec![0.0; policy.actor.param_count()];
    let mut stats = SurrogateStats::default();
    let mut d_out = vec![0.0; policy.heads * policy.classes];
    for i in 0..n {
        let action = &batch.actions[i];
        policy.check_action(action)?;
        let trace = policy.actor_trace(&batch.states[i])?;
        let heads = policy.head_log_probs(&trace);
        let log_prob: f64 = heads.iter().zip(action).map(|(h, &a)| h[a]).sum();
        let ratio = (log_prob - batch.old_log_probs[i]).exp();
        let adv = batch.advantages[i];
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv;
        stats.loss -= unclipped.min(clipped) * inv;
        stats.approx_kl += (batch.old_log_probs[i] - log_prob) * inv;
        let d_log_prob = if unclipped <= clipped {
            -unclipped * inv
        } else {
            stats.clip_fraction += inv;
            0.0
        };
        for (h, head) in heads.iter().enumerate() {
            let entropy: f64 = -head.iter().map(|lp| lp.exp() * lp).sum::<f64>();
            stats.entropy += entropy * inv;
            stats.loss -= entropy_coef * entropy * inv;
            for (c, lp) in head.iter().enumerate() {
                let p = lp.exp();
                let indicator = if c == action[h] { 1.0 } else { 0.0 };
                let d_entropy = -p * (lp + entropy);
                d_out[h * policy.classes + c] = d_log_prob * (indicator - p) - entropy_coef * inv * d_entropy;
            }
        }
        policy.actor.backward(&trace, &d_out, &mut grad);
    }
    if !stats.loss.is_finite() {
        return Err(Error::Divergence(format!("non-finite surrogate loss {}", stats.loss)));
    }
    Ok((stats, grad))
}

/// Half mean squared error of the value network and its gradient.
pub fn value_loss_and_grad(policy: &PolicyParams, states: &[Vec<f64>], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    let inv = 1.0 / states.len().max(1) as f64;
    let mut grad = vec![0.0; policy.critic.param_count()];
    let mut loss = 0.0;
    for (s, &target) in states.iter().zip(targets) {
        let trace = policy.critic.forward(&policy.features(s)?)?;
        let err = trace.output()[0] - target;
        loss += 0.5 * err * err * inv;
        policy.critic.backward(&trace, &[err * inv], &mut grad);
    }
    if !loss.is_finite() {
        return Err(Error::Divergence(format!("non-finite value loss {loss}")));
    }
    Ok((loss, grad))
}

/// Optimizer state of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOptimizer {
    pub actor: Adam,
    pub critic: Adam,
}

impl PolicyOptimizer {
    pub fn new(policy: &PolicyParams, learning_rate: f64) -> Self {
        Self {
            actor: Adam::new(policy.actor.param_count(), learning_rate),
            critic: Adam::new(policy.critic.param_count(), learning_rate),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateDiagnostics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

fn clip_norm(grad: &mut [f64], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let k = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= k);
    }
}

/// Runs `update_passes` full-batch passes of the clipped surrogate and value
/// regression. Rewards are multiplied by `reward_scale` first.
pub fn ppo_update(
    policy: &mut PolicyParams,
    optimizer: &mut PolicyOptimizer,
    rollout: &Rollout,
    config: &TrainConfig,
) -> Result<UpdateDiagnostics> {
    rollout.check()?;
    let rewards: Vec<f64> = rollout.rewards.iter().map(|r| r * config.reward_scale).collect();
    let (mut adv, returns) = advantages(&rewards, &rollout.values, &rollout.dones, config.discount, config.gae_lambda);
    let mean = adv.iter().sum::<f64>() / adv.len() as f64;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / adv.len() as f64;
    let std = var.sqrt();
    if std > 1e-8 {
        adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
    } else {
        adv.iter_mut().for_each(|a| *a -= mean);
    }
    let batch = SurrogateBatch {
        states: rollout.states.clone(),
        actions: rollout.actions.clone(),
        old_log_probs: rollout.log_probs.clone(),
        advantages: adv,
    };
    let mut diag = UpdateDiagnostics::default();
    for _ in 0..config.update_passes {
        let (stats, mut grad) = surrogate_loss_and_grad(policy, &batch, config.clip, config.entropy_coef)?;
        clip_norm(&mut grad, config.max_grad_norm);
        optimizer.actor.step(&mut policy.actor, &grad)?;
        let (value_loss, mut vgrad) = value_loss_and_grad(policy, &batch.states, &returns)?;
        clip_norm(&mut vgrad, config.max_grad_norm);
        optimizer.critic.step(&mut policy.critic, &vgrad)?;
        diag = UpdateDiagnostics {
            policy_loss: stats.loss,
            value_loss,
            entropy: stats.entropy,
            clip_fraction: stats.clip_fraction,
            approx_kl: stats.approx_kl,
        };
    }
    if !policy.is_finite() {
        return Err(Error::Divergence("non-finite weights after update".into()));
    }
    Ok(diag)
}
