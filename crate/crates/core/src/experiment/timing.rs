//! Wall-clock cost of one slot's deployment decision.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::env::{RequestMode, Stage2Env};
use crate::error::{Error, Result};
use crate::learn::{greedy_counts, PolicyParams};

/// Budget for one slot's decision, in ms.
pub const DECISION_BUDGET_MS: f64 = 110.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub samples_ms: Vec<f64>,
    pub mean_ms: f64,
    /// Nearest-rank 95th percentile.
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl LatencyStats {
    pub fn from_samples(samples_ms: Vec<f64>) -> Result<Self> {
        if samples_ms.is_empty() {
            return Err(Error::InvalidConfig("latency statistics need at least one sample".into()));
        }
        let mut sorted = samples_ms.clone();
        sorted.sort_by(f64::total_cmp);
        let rank = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        Ok(Self {
            mean_ms: samples_ms.iter().sum::<f64>() / samples_ms.len() as f64,
            p95_ms: sorted[rank - 1],
            max_ms: sorted[sorted.len() - 1],
            samples_ms,
        })
    }

    pub fn within_budget(&self) -> bool {
        self.p95_ms < DECISION_BUDGET_MS
    }
}

/// Times the greedy decisions of the first slot, one forward pass and
/// decode per light microservice, `repetitions` times on nominal requests.
pub fn measure_decision_latency(
    env: &Stage2Env,
    protagonist: &PolicyParams,
    repetitions: usize,
) -> Result<LatencyStats> {
    let mut env = env.clone();
    env.set_mode(RequestMode::Nominal);
    let mut samples = Vec::with_capacity(repetitions);
    for rep in 0..repetitions {
        env.reset(rep as u64);
        let mut elapsed = 0.0;
        for _ in 0..env.light_count() {
            let start = Instant::now();
            let counts = greedy_counts(&env, protagonist)?;
            elapsed += start.elapsed().as_secs_f64() * 1e3;
            env.protagonist_step(&counts)?;
        }
        samples.push(elapsed);
    }
    LatencyStats::from_samples(samples)
}
