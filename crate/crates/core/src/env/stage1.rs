use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::feasibility::{add_load, fits};
use super::Platform;
use crate::error::{Error, Result};
use crate::workload::Chain;

/// Placement indicators for core microservices plus the index of the next
/// microservice to place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStageState {
    /// `placed[c * D + s]` is 1 when core row `c` sits on satellite `s`.
    pub placed: Vec<u8>,
    pub current: usize,
    pub steps: usize,
}

impl FirstStageState {
    /// Observation layout: indicators followed by the current index.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.placed.iter().map(|&b| f64::from(b)).collect();
        v.push(self.current as f64);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Step {
    pub state: FirstStageState,
    pub reward: f64,
    pub done: bool,
    /// Whether the action was accepted.
    pub placed: bool,
    /// Summed core chain latency, reported on the final successful placement.
    pub terminal_latency_ms: Option<f64>,
}

/// Places core microservices one at a time; each action picks a satellite.
#[derive(Debug, Clone)]
pub struct Stage1Env {
    platform: Arc<Platform>,
    state: FirstStageState,
    usage: Vec<Vec<f64>>,
    budget: usize,
}

impl Stage1Env {
    pub fn new(platform: Arc<Platform>) -> Result<Self> {
        if platform.app.core().is_empty() {
            return Err(Error::InvalidConfig("application has no core microservices".into()));
        }
        let budget = platform.env.stage1.step_budget_factor * platform.app.core().len();
        let mut env = Self {
            state: FirstStageState {
                placed: Vec::new(),
                current: 0,
                steps: 0,
            },
            usage: Vec::new(),
            budget,
            platform,
        };
        env.reset();
        Ok(env)
    }

    pub fn platform(&self) -> &Arc<Platform> {
        &self.platform
    }

    pub fn observation_len(&self) -> usize {
        self.platform.app.core().len() * self.platform.satellites() + 1
    }

    pub fn reset(&mut self) -> FirstStageState {
        let d = self.platform.satellites();
        self.state = FirstStageState {
            placed: vec![0; self.platform.app.core().len() * d],
            current: 0,
            steps: 0,
        };
        self.usage = vec![vec![0.0; self.platform.graph.resource_types()]; d];
        self.state.clone()
    }

    pub fn state(&self) -> &FirstStageState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.current == self.platform.app.core().len() || self.state.steps >= self.budget
    }

    /// Core scheme `X` (rows in core order) from the placement indicators.
    pub fn core_scheme(&self) -> Vec<Vec<u32>> {
        self.state
            .placed
            .chunks(self.platform.satellites())
            .map(|row| row.iter().map(|&b| u32::from(b)).collect())
            .collect()
    }

    /// Whether the current microservice fits on `satellite` now.
    pub fn fits(&self, satellite: usize) -> bool {
        let m = self.platform.app.core()[self.state.current.min(self.platform.app.core().len() - 1)];
        let demands = &self.platform.app.microservice(m).demands;
        let load: Vec<f64> = self.usage[satellite].iter().zip(demands).map(|(u, d)| u + d).collect();
        fits(&load, &self.platform.graph.nodes()[satellite].capacities)
    }

    pub fn step(&mut self, action: usize) -> Result<Stage1Step> {
        let d = self.platform.satellites();
        if action >= d {
            return Err(Error::InvalidAction(format!("satellite {action} outside 0..{d}")));
        }
        if self.is_done() {
            return Err(Error::InvalidAction("episode already finished".into()));
        }
        let rewards = self.platform.env.stage1;
        self.state.steps += 1;
        let accepted = self.fits(action);
        let mut reward;
        let mut terminal_latency_ms = None;
        if accepted {
            let m = self.platform.app.core()[self.state.current];
            let mut onehot = vec![0u32; d];
            onehot[action] = 1;
            add_load(&mut self.usage, &self.platform.app.microservice(m).demands, &onehot);
            self.state.placed[self.state.current * d + action] = 1;
            self.state.current += 1;
            reward = rewards.success;
            if self.state.current == self.platform.app.core().len() {
                let latency = core_chain_latency(&self.platform, &self.core_scheme())?;
                reward += -rewards.latency_weight * latency;
                terminal_latency_ms = Some(latency);
            }
        } else {
            reward = rewards.violation;
        }
        Ok(Stage1Step {
            state: self.state.clone(),
            reward,
            done: self.is_done(),
            placed: accepted,
            terminal_latency_ms,
        })
    }
}

/// Sum over chains of the latency of the chain's core members alone, with
/// each core member hosted on its lowest-id satellite.
pub fn core_chain_latency(platform: &Platform, core: &[Vec<u32>]) -> Result<f64> {
    let app = &platform.app;
    let model = platform.latency_model();
    let mut placement = vec![None; app.len()];
    for (&m, row) in app.core().iter().zip(core) {
        placement[m] = row.iter().position(|&n| n > 0);
    }
    let mut total = 0.0;
    for chain in app.chains() {
        let members: Vec<usize> = chain.members.iter().copied().filter(|m| app.core().contains(m)).collect();
        if members.is_empty() {
            continue;
        }
        let sub = Chain {
            name: chain.name.clone(),
            members,
        };
        total += model.chain_latency(&sub, &placement, 0.0)?;
    }
    Ok(total)
}
