//! Factorized categorical policies with a separate value network.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{Mlp, Trace};
use crate::error::{Error, Result};

/// Actor and critic for a vector action of `heads` independent categorical
/// choices over `classes` values each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub heads: usize,
    pub classes: usize,
    /// Multiplied entrywise into raw states before the networks see them.
    pub input_scale: Vec<f64>,
    pub actor: Mlp,
    pub critic: Mlp,
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

impl PolicyParams {
    pub fn new<R: Rng + ?Sized>(
        input_scale: Vec<f64>,
        heads: usize,
        classes: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || classes == 0 || input_scale.is_empty() {
            return Err(Error::InvalidConfig("policy needs inputs, heads and classes".into()));
        }
        let inputs = input_scale.len();
        let actor = Mlp::new(inputs, hidden, heads * classes, 0.01, rng);
        let critic = Mlp::new(inputs, hidden, 1, 1.0, rng);
        Ok(Self {
            heads,
            classes,
            input_scale,
            actor,
            critic,
        })
    }

    pub fn input_len(&self) -> usize {
        self.input_scale.len()
    }

    pub fn features(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.input_scale.len() {
            return Err(Error::ShapeMismatch(format!(
                "policy expects a state of length {}, got {}",
                self.input_scale.len(),
                state.len()
            )));
        }
        Ok(state.iter().zip(&self.input_scale).map(|(s, k)| s * k).collect())
    }

    pub fn actor_trace(&self, state: &[f64]) -> Result<Trace> {
        self.actor.forward(&self.features(state)?)
    }

    /// Per-head log-probabilities from a forward trace.
    pub fn head_log_probs(&self, trace: &Trace) -> Vec<Vec<f64>> {
        trace.output().chunks(self.classes).map(log_softmax).collect()
    }

    pub fn probabilities(&self, state: &[f64]) -> Result<Vec<Vec<f64>>> {
        let trace = self.actor_trace(state)?;
        Ok(self
            .head_log_probs(&trace)
            .into_iter()
            .map(|h| h.into_iter().map(f64::exp).collect())
            .collect())
    }

    /// Samples each head independently; returns the joint log-probability.
    pub fn sample_action<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<(Vec<usize>, f64)> {
        let trace = self.actor_trace(state)?;
        let mut action = Vec::with_capacity(self.heads);
        let mut log_prob = 0.0;
        for head in self.head_log_probs(&trace) {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = head.len() - 1;
            for (c, lp) in head.iter().enumerate() {
                acc += lp.exp();
                if u < acc {
                    pick = c;
                    break;
                }
            }
            log_prob += head[pick];
            action.push(pick);
        }
        Ok((action, log_prob))
    }

    pub fn log_prob(&self, state: &[f64], action: &[usize]) -> Result<f64> {
        self.check_action(action)?;
        let trace = self.actor_trace(state)?;
        Ok(self.head_log_probs(&trace).iter().zip(action).map(|(h, &a)| h[a]).sum())
    }

    /// Argmax per head, lowest class on ties.
    pub fn greedy(&self, state: &[f64]) -> Result<Vec<usize>> {
        let trace = self.actor_trace(state)?;
        Ok(trace
            .output()
            .chunks(self.classes)
            .map(|h| {
                let mut best = 0;
                for c in 1..h.len() {
                    if h[c] > h[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }

    pub fn value(&self, state: &[f64]) -> Result<f64> {
        Ok(self.critic.predict(&self.features(state)?)?[0])
    }

    pub fn check_action(&self, action: &[usize]) -> Result<()> {
        if action.len() != self.heads || action.iter().any(|&a| a >= self.classes) {
            return Err(Error::InvalidAction(format!(
                "action {action:?} does not fit {} heads of {} classes",
                self.heads, self.classes
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite() && self.critic.is_finite()
    }
}
