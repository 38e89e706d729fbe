use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::feasibility::{add_load, core_usage, scheme_feasible};
use super::{Platform, RESOURCE_EPS};
use crate::error::{Error, Result};
use crate::perf::{check_core_shape, cost_core, slot_cost_deploy, slot_cost_keep, slot_cost_parallel};
use crate::routing::{qos_violations, solve_routing};
use crate::workload::RequestScenario;

/// Requests row followed by one deployment row per light microservice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkingMatrix {
    pub rows: Vec<Vec<u32>>,
}

impl MarkingMatrix {
    pub fn zeros(light: usize, satellites: usize) -> Self {
        Self {
            rows: vec![vec![0; satellites]; light + 1],
        }
    }

    pub fn requests(&self) -> &[u32] {
        &self.rows[0]
    }

    /// Row-major flattening.
    pub fn flatten(&self) -> Vec<f64> {
        self.rows.iter().flatten().map(|&n| f64::from(n)).collect()
    }
}

/// `[vec(P), i, u]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtagonistState(pub Vec<f64>);

/// `[vec(P_ori), j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryState(pub Vec<f64>);

/// How each slot's realized requests are derived from the nominal ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RequestMode {
    /// Nominal plus the adversary's perturbation (zero when it does not act).
    Adversarial,
    Nominal,
    /// Every region at nominal plus the box width.
    UpperVertex,
    /// Every region at nominal minus the box width, floored at zero.
    LowerVertex,
    /// Uniform integer point of the box per region and slot.
    Sampled,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardParts {
    /// Resource compliance term.
    pub step: f64,
    /// End-of-slot cost term.
    pub slot: f64,
    /// End-of-episode cost and QoS term.
    pub terminal: f64,
    pub total: f64,
}

impl RewardParts {
    fn new(step: f64, slot: f64, terminal: f64) -> Self {
        Self {
            step,
            slot,
            terminal,
            total: step + slot + terminal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcome {
    pub slot: usize,
    pub requests: Vec<u32>,
    pub tasks: usize,
    pub processed: usize,
    pub violations: usize,
    pub deployed: u32,
    pub cost_deploy: f64,
    pub cost_keep: f64,
    pub cost_parallel: f64,
    pub latencies_ms: Vec<f64>,
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Agent {
    Protagonist,
    Adversary,
}

/// One logged transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub agent: Agent,
    pub step: usize,
    pub slot: usize,
    pub state: Vec<f64>,
    pub action: Vec<i64>,
    pub parts: RewardParts,
    /// Filled for the adversary once the slot completes.
    pub reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtagonistStep {
    pub state: ProtagonistState,
    pub reward: f64,
    pub parts: RewardParts,
    pub done: bool,
    /// Counts actually applied after clipping to capacity.
    pub applied: Vec<u32>,
    pub violation: bool,
    /// Adversary reward for the slot that just closed.
    pub adversary_reward: Option<f64>,
}

/// Slot-by-slot light deployment with an optional request adversary.
#[derive(Debug, Clone)]
pub struct Stage2Env {
    platform: Arc<Platform>,
    core: Vec<Vec<u32>>,
    base_usage: Vec<Vec<f64>>,
    scenario: RequestScenario,
    phi: u32,
    slot_duration_ms: f64,
    mode: RequestMode,
    logging: bool,
    rng: ChaCha8Rng,
    marking: MarkingMatrix,
    previous_marking: MarkingMatrix,
    step: usize,
    realized: Vec<Vec<u32>>,
    perturbed: bool,
    schedule: Vec<Vec<Vec<u32>>>,
    current: Vec<Vec<u32>>,
    slot_rewards: Vec<f64>,
    outcomes: Vec<SlotOutcome>,
    log: Vec<TrajectoryRecord>,
}

impl Stage2Env {
    pub fn new(
        platform: Arc<Platform>,
        core: Vec<Vec<u32>>,
        scenario: RequestScenario,
        phi: u32,
        slot_duration_ms: f64,
        mode: RequestMode,
    ) -> Result<Self> {
        let d = platform.satellites();
        check_core_shape(&core, &platform.app, d)?;
        if scenario.regions() != d {
            return Err(Error::ShapeMismatch(format!(
                "scenario has {} regions for {d} satellites",
                scenario.regions()
            )));
        }
        if !(slot_duration_ms > 0.0) {
            return Err(Error::InvalidConfig("slot duration must be positive".into()));
        }
        let empty: Vec<Vec<u32>> = vec![vec![0; d]; platform.app.light().len()];
        let report = scheme_feasible(&platform.graph, &platform.app, &core, &empty)?;
        if !report.core_complete() || !report.core_within_capacity() {
            return Err(Error::Infeasible(format!(
                "core scheme: missing {:?}, overloaded satellites {:?}",
                report.missing_core, report.core_overloaded
            )));
        }
        let base_usage = core_usage(&platform.graph, &platform.app, &core);
        let light = platform.app.light().len();
        let mut env = Self {
            core,
            base_usage,
            scenario,
            phi,
            slot_duration_ms,
            mode,
            logging: false,
            rng: ChaCha8Rng::seed_from_u64(0),
            marking: MarkingMatrix::zeros(light, d),
            previous_marking: MarkingMatrix::zeros(light, d),
            step: 0,
            realized: Vec::new(),
            perturbed: false,
            schedule: Vec::new(),
            current: vec![vec![0; d]; light],
            slot_rewards: Vec::new(),
            outcomes: Vec::new(),
            log: Vec::new(),
            platform,
        };
        env.reset(0);
        Ok(env)
    }

    pub fn platform(&self) -> &Arc<Platform> {
        &self.platform
    }

    pub fn core(&self) -> &[Vec<u32>] {
        &self.core
    }

    pub fn scenario(&self) -> &RequestScenario {
        &self.scenario
    }

    pub fn phi(&self) -> u32 {
        self.phi
    }

    pub fn mode(&self) -> RequestMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: RequestMode) {
        self.mode = mode;
    }

    pub fn slot_duration_ms(&self) -> f64 {
        self.slot_duration_ms
    }

    /// Enables the per-step trajectory log for subsequent episodes.
    pub fn set_logging(&mut self, on: bool) {
        self.logging = on;
    }

    pub fn slots(&self) -> usize {
        self.scenario.slots()
    }

    pub fn light_count(&self) -> usize {
        self.platform.app.light().len()
    }

    pub fn protagonist_state_len(&self) -> usize {
        (1 + self.light_count()) * self.platform.satellites() + 2
    }

    pub fn adversary_state_len(&self) -> usize {
        (1 + self.light_count()) * self.platform.satellites() + 1
    }

    /// Total protagonist steps per episode.
    pub fn horizon(&self) -> usize {
        self.light_count() * self.slots()
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn current_slot(&self) -> usize {
        self.step / self.light_count()
    }

    pub fn current_row(&self) -> usize {
        self.step % self.light_count()
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.horizon()
    }

    /// Whether the adversary may still act on the current slot.
    pub fn awaiting_adversary(&self) -> bool {
        !self.is_done() && self.current_row() == 0 && !self.perturbed && self.mode == RequestMode::Adversarial
    }

    pub fn marking(&self) -> &MarkingMatrix {
        &self.marking
    }

    pub fn reset(&mut self, seed: u64) -> ProtagonistState {
        let d = self.platform.satellites();
        let light = self.light_count();
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.realized = self
            .scenario
            .nominal
            .iter()
            .map(|row| {
                let phi = i64::from(self.phi);
                row.iter()
                    .map(|&n| {
                        let n = i64::from(n);
                        let r = match self.mode {
                            RequestMode::Adversarial | RequestMode::Nominal => n,
                            RequestMode::UpperVertex => n + phi,
                            RequestMode::LowerVertex => n - phi,
                            RequestMode::Sampled => n + self.rng.gen_range(-phi..=phi),
                        };
                        r.max(0) as u32
                    })
                    .collect()
            })
            .collect();
        self.marking = MarkingMatrix::zeros(light, d);
        self.marking.rows[0] = self.realized[0].clone();
        self.previous_marking = self.marking.clone();
        self.step = 0;
        self.perturbed = false;
        self.schedule.clear();
        self.current = vec![vec![0; d]; light];
        self.slot_rewards.clear();
        self.outcomes.clear();
        self.log.clear();
        self.protagonist_state()
    }

    pub fn protagonist_state(&self) -> ProtagonistState {
        let mut v = self.marking.flatten();
        v.push(self.step as f64);
        v.push(self.current_row() as f64);
        ProtagonistState(v)
    }

    /// Built from the marking matrix at the close of the previous slot.
    pub fn adversary_state(&self) -> AdversaryState {
        let mut v = self.previous_marking.flatten();
        v.push(self.current_slot() as f64);
        AdversaryState(v)
    }

    /// Perturbs the current slot's requests by `q` (clamped at zero).
    pub fn adversary_step(&mut self, q: &[i64]) -> Result<AdversaryState> {
        let d = self.platform.satellites();
        if q.len() != d {
            return Err(Error::InvalidAction(format!("perturbation has {} entries for {d} regions", q.len())));
        }
        if let Some(bad) = q.iter().find(|v| v.unsigned_abs() > u64::from(self.phi)) {
            return Err(Error::InvalidAction(format!("perturbation {bad} exceeds box width {}", self.phi)));
        }
        if self.mode != RequestMode::Adversarial {
            return Err(Error::InvalidAction("request mode does not accept perturbations".into()));
        }
        if !self.awaiting_adversary() {
            return Err(Error::InvalidAction("adversary acts once at the start of each slot".into()));
        }
        let state = self.adversary_state();
        let t = self.current_slot();
        let realized: Vec<u32> = self.scenario.nominal[t]
            .iter()
            .zip(q)
            .map(|(&n, &dq)| (i64::from(n) + dq).max(0) as u32)
            .collect();
        self.realized[t] = realized.clone();
        self.marking.rows[0] = realized;
        self.perturbed = true;
        if self.logging {
            self.log.push(TrajectoryRecord {
                agent: Agent::Adversary,
                step: self.step,
                slot: t,
                state: state.0,
                action: q.to_vec(),
                parts: RewardParts::default(),
                reward: None,
            });
        }
        Ok(self.adversary_state())
    }

    /// Largest count of the current row's microservice each satellite can
    /// still host this slot, capped at the copy limit.
    pub fn max_feasible(&self) -> Vec<u32> {
        let app = &self.platform.app;
        let row = self.current_row();
        let mut usage = self.base_usage.clone();
        for (&m, counts) in app.light().iter().zip(&self.current).take(row) {
            add_load(&mut usage, &app.microservice(m).demands, counts);
        }
        let demands = &app.microservice(app.light()[row]).demands;
        let alpha = self.platform.env.max_copies;
        self.platform
            .graph
            .nodes()
            .iter()
            .map(|node| {
                let mut best = alpha;
                for ((cap, used), d) in node.capacities.iter().zip(&usage[node.id]).zip(demands) {
                    if *d > 0.0 {
                        let room = ((cap - used + RESOURCE_EPS) / d).floor().max(0.0);
                        best = best.min(room.min(f64::from(alpha)) as u32);
                    }
                }
                best
            })
            .collect()
    }

    pub fn protagonist_step(&mut self, action: &[u32]) -> Result<ProtagonistStep> {
        let d = self.platform.satellites();
        let alpha = self.platform.env.max_copies;
        if action.len() != d {
            return Err(Error::InvalidAction(format!("action has {} entries for {d} satellites", action.len())));
        }
        if let Some(bad) = action.iter().find(|&&a| a > alpha) {
            return Err(Error::InvalidAction(format!("count {bad} exceeds copy limit {alpha}")));
        }
        if self.is_done() {
            return Err(Error::InvalidAction("episode already finished".into()));
        }
        let state_before = self.logging.then(|| self.protagonist_state());
        let cfg = self.platform.env;
        let row = self.current_row();
        let t = self.current_slot();
        let limit = self.max_feasible();
        let violation = action.iter().zip(&limit).any(|(a, l)| a > l);
        let applied: Vec<u32> = action.iter().zip(&limit).map(|(&a, &l)| a.min(l)).collect();
        self.current[row] = applied.clone();
        self.marking.rows[row + 1] = applied.clone();
        self.perturbed = true;
        let step_reward = if violation { cfg.eps_violation } else { cfg.eps_success };
        let mut slot_reward = 0.0;
        let mut terminal_reward = 0.0;
        let closes_slot = row + 1 == self.light_count();
        if closes_slot {
            let outcome = self.close_slot(t)?;
            slot_reward = cfg.eps_slot_cost * (outcome.cost_deploy + outcome.cost_keep + outcome.cost_parallel);
            self.outcomes.push(outcome);
            if t + 1 == self.slots() {
                let costs = self.total_cost()?;
                let q: usize = self.outcomes.iter().map(|o| o.violations).sum();
                terminal_reward = cfg.eps_total_cost * costs + cfg.eps_qos * q as f64;
            }
        }
        let parts = RewardParts::new(step_reward, slot_reward, terminal_reward);
        self.slot_rewards.push(parts.total);
        let mut adversary_reward = None;
        if closes_slot {
            let sum: f64 = self.slot_rewards.iter().sum();
            adversary_reward = Some(-sum);
            self.slot_rewards.clear();
        }
        if let Some(state) = state_before {
            self.log.push(TrajectoryRecord {
                agent: Agent::Protagonist,
                step: self.step,
                slot: t,
                state: state.0,
                action: action.iter().map(|&a| i64::from(a)).collect(),
                parts,
                reward: Some(parts.total),
            });
            if let Some(r) = adversary_reward {
                if let Some(rec) = self
                    .log
                    .iter_mut()
                    .rev()
                    .find(|rec| rec.agent == Agent::Adversary && rec.slot == t)
                {
                    rec.reward = Some(r);
                }
            }
        }
        self.step += 1;
        if closes_slot {
            self.previous_marking = self.marking.clone();
            self.perturbed = false;
            if !self.is_done() {
                self.marking.rows[0] = self.realized[t + 1].clone();
            }
        }
        Ok(ProtagonistStep {
            state: self.protagonist_state(),
            reward: parts.total,
            parts,
            done: self.is_done(),
            applied,
            violation,
            adversary_reward,
        })
    }

    fn close_slot(&mut self, t: usize) -> Result<SlotOutcome> {
        let app = &self.platform.app;
        let current = self.current.clone();
        let previous = self.schedule.last().map(Vec::as_slice);
        let cost_deploy = slot_cost_deploy(&current, previous, app);
        let cost_keep = slot_cost_keep(&current, app);
        let cost_parallel = slot_cost_parallel(&current, app);
        let requests = self.realized[t].clone();
        let tasks = requests.iter().map(|&n| n as usize).sum::<usize>();
        let model = self.platform.latency_model();
        let t_ms = t as f64 * self.slot_duration_ms;
        let deferral = self.platform.env.deferral_ms.unwrap_or(self.slot_duration_ms);
        let (violations, latencies_ms) = match solve_routing(model, &requests, &current, &self.platform.routing) {
            Ok(routing) => {
                let qos = qos_violations(model, &routing, &self.core, self.platform.env.qos_bound_ms, deferral, t_ms)?;
                (qos.violations, qos.latencies_ms)
            }
            Err(Error::NoInstance(_)) => (tasks, vec![f64::INFINITY; tasks]),
            Err(e) => return Err(e),
        };
        let feasible = scheme_feasible(&self.platform.graph, app, &self.core, &current)?.feasible();
        let deployed = current.iter().flatten().sum();
        self.schedule.push(current);
        Ok(SlotOutcome {
            slot: t,
            requests,
            tasks,
            processed: tasks - violations,
            violations,
            deployed,
            cost_deploy,
            cost_keep,
            cost_parallel,
            latencies_ms,
            feasible,
        })
    }

    /// Core cost plus every closed slot's light cost.
    fn total_cost(&self) -> Result<f64> {
        let core = cost_core(&self.core, &self.platform.app, self.slots())?;
        let light: f64 = self
            .outcomes
            .iter()
            .map(|o| o.cost_deploy + o.cost_keep + o.cost_parallel)
            .sum();
        Ok(core + light)
    }

    pub fn realized_requests(&self) -> &[Vec<u32>] {
        &self.realized
    }

    /// Light deployments of every closed slot.
    pub fn schedule(&self) -> &[Vec<Vec<u32>>] {
        &self.schedule
    }

    pub fn outcomes(&self) -> &[SlotOutcome] {
        &self.outcomes
    }

    pub fn trajectory(&self) -> &[TrajectoryRecord] {
        &self.log
    }

    /// Writes the trajectory log as CSV; vectors are space-separated.
    pub fn write_trajectory_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "agent",
            "step",
            "slot",
            "state",
            "action",
            "reward_step",
            "reward_slot",
            "reward_terminal",
            "reward",
        ])?;
        let join = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(" ");
        for rec in &self.log {
            let agent = match rec.agent {
                Agent::Protagonist => "protagonist",
                Agent::Adversary => "adversary",
            };
            w.write_record([
                agent.to_string(),
                rec.step.to_string(),
                rec.slot.to_string(),
                join(&mut rec.state.iter().map(|x| x.to_string())),
                join(&mut rec.action.iter().map(|x| x.to_string())),
                rec.parts.step.to_string(),
                rec.parts.slot.to_string(),
                rec.parts.terminal.to_string(),
                rec.reward.map_or_else(String::new, |r| r.to_string()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
