//! Decision processes for the two deployment stages.
//!
//! [`Stage1Env`] places core microservices one at a time. [`Stage2Env`] is
//! the slot-by-slot light deployment game between a protagonist that sets
//! per-satellite instance counts and an adversary that perturbs each slot's
//! regional requests inside the uncertainty box.

mod feasibility;
mod stage1;
mod stage2;

use serde::{Deserialize, Serialize};

pub use feasibility::{core_usage, scheme_feasible, FeasibilityReport};
pub(crate) use feasibility::add_load;
pub use stage1::{core_chain_latency, FirstStageState, Stage1Env, Stage1Step};
pub use stage2::{
    AdversaryState, Agent, MarkingMatrix, ProtagonistState, ProtagonistStep, RequestMode, RewardParts, SlotOutcome,
    Stage2Env, TrajectoryRecord,
};

use crate::constellation::ConstellationGraph;
use crate::error::{Error, Result};
use crate::routing::RoutingConfig;
use crate::workload::AppGraph;

/// Resource slack tolerated when comparing float resource sums.
pub(crate) const RESOURCE_EPS: f64 = 1e-9;

fn default_alpha() -> u32 {
    3
}
fn default_eps1() -> f64 {
    -5.0
}
fn default_eps2() -> f64 {
    1.0
}
fn default_eps3() -> f64 {
    -0.01
}
fn default_eps4() -> f64 {
    -0.01
}
fn default_eps5() -> f64 {
    -10.0
}
fn default_request_scale() -> f64 {
    30.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage1Rewards {
    /// Punishment for a placement exceeding the satellite's capacity.
    pub violation: f64,
    /// Reward for a successful placement.
    pub success: f64,
    /// Weight of the terminal latency penalty.
    pub latency_weight: f64,
    /// Episode step budget as a multiple of the core count.
    pub step_budget_factor: usize,
}

impl Default for Stage1Rewards {
    fn default() -> Self {
        Self {
            violation: -5.0,
            success: 1.0,
            latency_weight: 0.01,
            step_budget_factor: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    /// Maximum copies of one microservice per satellite per slot.
    #[serde(default = "default_alpha")]
    pub max_copies: u32,
    /// Resource-violation punishment (< 0).
    #[serde(default = "default_eps1")]
    pub eps_violation: f64,
    /// Successful deployment reward (> 0).
    #[serde(default = "default_eps2")]
    pub eps_success: f64,
    /// Per-slot cost weight (< 0).
    #[serde(default = "default_eps3")]
    pub eps_slot_cost: f64,
    /// Whole-horizon cost weight (< 0).
    #[serde(default = "default_eps4")]
    pub eps_total_cost: f64,
    /// QoS violation weight (< 0).
    #[serde(default = "default_eps5")]
    pub eps_qos: f64,
    pub qos_bound_ms: f64,
    /// Waiting time of a task served beyond instance capacity; defaults to
    /// one slot.
    #[serde(default)]
    pub deferral_ms: Option<f64>,
    /// Request count mapped to 1.0 in policy observations.
    #[serde(default = "default_request_scale")]
    pub request_scale: f64,
    #[serde(default)]
    pub stage1: Stage1Rewards,
}

impl EnvConfig {
    pub fn with_qos_bound(qos_bound_ms: f64) -> Self {
        Self {
            max_copies: default_alpha(),
            eps_violation: default_eps1(),
            eps_success: default_eps2(),
            eps_slot_cost: default_eps3(),
            eps_total_cost: default_eps4(),
            eps_qos: default_eps5(),
            qos_bound_ms,
            deferral_ms: None,
            request_scale: default_request_scale(),
            stage1: Stage1Rewards::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.eps_violation < 0.0, "eps_violation must be negative"),
            (self.eps_success > 0.0, "eps_success must be positive"),
            (self.eps_slot_cost < 0.0, "eps_slot_cost must be negative"),
            (self.eps_total_cost < 0.0, "eps_total_cost must be negative"),
            (self.eps_qos < 0.0, "eps_qos must be negative"),
            (self.max_copies >= 1, "max_copies must be at least 1"),
            (self.qos_bound_ms >= 0.0, "qos_bound_ms must be non-negative"),
            (self.request_scale > 0.0, "request_scale must be positive"),
            (self.stage1.violation < 0.0, "stage1.violation must be negative"),
            (self.stage1.success > 0.0, "stage1.success must be positive"),
            (self.stage1.latency_weight > 0.0, "stage1.latency_weight must be positive"),
            (self.stage1.step_budget_factor >= 1, "stage1.step_budget_factor must be at least 1"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidConfig(msg.into()));
            }
        }
        Ok(())
    }
}

/// Everything static about a deployment problem: the constellation, the
/// application and the reward/routing parameters.
#[derive(Debug, Clone)]
pub struct Platform {
    pub graph: ConstellationGraph,
    pub app: AppGraph,
    pub routing: RoutingConfig,
    pub env: EnvConfig,
}

impl Platform {
    pub fn new(graph: ConstellationGraph, app: AppGraph, routing: RoutingConfig, env: EnvConfig) -> Result<Self> {
        env.validate()?;
        if graph.resource_types() != app.resource_types() {
            return Err(Error::InvalidConfig(format!(
                "satellites expose {} resource types, microservices request {}",
                graph.resource_types(),
                app.resource_types()
            )));
        }
        if app.light().is_empty() {
            return Err(Error::InvalidConfig("application has no light microservices".into()));
        }
        Ok(Self { graph, app, routing, env })
    }

    pub fn satellites(&self) -> usize {
        self.graph.len()
    }

    pub fn latency_model(&self) -> crate::perf::LatencyModel<'_> {
        crate::perf::LatencyModel::new(&self.graph, &self.app)
    }
}
