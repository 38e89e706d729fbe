//! Per-slot task routing and QoS accounting.
//!
//! Each task walks the light members of its chain; every hop is served by a
//! deployed instance. The routing objective is the summed mesh-coordinate
//! distance along each task's path (anchored at the task's region) plus an
//! overload punishment per request assigned beyond `instances * k_m`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perf::LatencyModel;

fn default_overload_punishment() -> f64 {
    1.0e6
}

fn default_exact_search_cap() -> u128 {
    200_000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingConfig {
    #[serde(default = "default_overload_punishment")]
    pub overload_punishment: f64,
    /// Largest assignment space searched exhaustively.
    #[serde(default = "default_exact_search_cap")]
    pub exact_search_cap: u128,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self {
            overload_punishment: default_overload_punishment(),
            exact_search_cap: default_exact_search_cap(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub region: usize,
    pub chain: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoutingMode {
    Exact,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingMatrix {
    pub tasks: Vec<Task>,
    /// `assignments[z][p]`: satellite serving the p-th light member of task z's chain.
    pub assignments: Vec<Vec<usize>>,
    /// Tasks with at least one hop assigned beyond instance capacity.
    pub deferred: Vec<bool>,
    pub objective: f64,
    pub mode: RoutingMode,
}

impl RoutingMatrix {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

/// Expands per-region counts into tasks: region order, chains round-robin.
pub fn expand_tasks(region_requests: &[u32], chains: usize) -> Vec<Task> {
    region_requests
        .iter()
        .enumerate()
        .flat_map(|(region, &n)| (0..n as usize).map(move |j| Task { region, chain: j % chains }))
        .collect()
}

struct Problem<'a> {
    model: LatencyModel<'a>,
    tasks: Vec<Task>,
    /// Light-row index per chain position, per chain.
    chain_rows: Vec<Vec<usize>>,
    /// Satellites hosting each light row, ascending.
    hosts: Vec<Vec<usize>>,
    /// Request capacity of each (light row, satellite).
    capacity: Vec<Vec<u64>>,
    punishment: f64,
}

impl Problem<'_> {
    fn step_distance(&self, from: usize, to: usize) -> f64 {
        self.model.graph.grid_distance(from, to)
    }

    fn exact_space(&self) -> u128 {
        self.tasks.iter().fold(1u128, |acc, task| {
            self.chain_rows[task.chain]
                .iter()
                .fold(acc, |acc, &row| acc.saturating_mul(self.hosts[row].len() as u128))
        })
    }

    fn solve_exact(&self) -> Vec<Vec<usize>> {
        let mut used: Vec<Vec<u64>> = self.capacity.iter().map(|r| vec![0; r.len()]).collect();
        let mut current: Vec<Vec<usize>> = self.tasks.iter().map(|t| vec![0; self.chain_rows[t.chain].len()]).collect();
        let mut best = (f64::INFINITY, current.clone());
        self.search(0, 0, 0.0, &mut used, &mut current, &mut best);
        best.1
    }

    fn search(
        &self,
        z: usize,
        p: usize,
        partial: f64,
        used: &mut Vec<Vec<u64>>,
        current: &mut Vec<Vec<usize>>,
        best: &mut (f64, Vec<Vec<usize>>),
    ) {
        if partial >= best.0 {
            return;
        }
        if z == self.tasks.len() {
            *best = (partial, current.clone());
            return;
        }
        let task = self.tasks[z];
        let rows = &self.chain_rows[task.chain];
        if p == rows.len() {
            self.search(z + 1, 0, partial, used, current, best);
            return;
        }
        let row = rows[p];
        let from = if p == 0 { task.region } else { current[z][p - 1] };
        for &sat in &self.hosts[row] {
            let over = used[row][sat] >= self.capacity[row][sat];
            let cost = self.step_distance(from, sat) + if over { self.punishment } else { 0.0 };
            used[row][sat] += 1;
            current[z][p] = sat;
            self.search(z, p + 1, partial + cost, used, current, best);
            used[row][sat] -= 1;
        }
    }

    fn solve_greedy(&self) -> Vec<Vec<usize>> {
        let mut used: Vec<Vec<u64>> = self.capacity.iter().map(|r| vec![0; r.len()]).collect();
        self.tasks
            .iter()
            .map(|task| {
                let mut at = task.region;
                self.chain_rows[task.chain]
                    .iter()
                    .map(|&row| {
                        let nearest = |with_room: bool| {
                            self.hosts[row]
                                .iter()
                                .copied()
                                .filter(|&s| !with_room || used[row][s] < self.capacity[row][s])
                                .min_by(|&a, &b| self.step_distance(at, a).total_cmp(&self.step_distance(at, b)).then(a.cmp(&b)))
                        };
                        let sat = nearest(true).or_else(|| nearest(false)).expect("hosts checked non-empty");
                        used[row][sat] += 1;
                        at = sat;
                        sat
                    })
                    .collect()
            })
            .collect()
    }

    fn evaluate(&self, assignments: &[Vec<usize>]) -> (f64, Vec<bool>) {
        let mut used: Vec<Vec<u64>> = self.capacity.iter().map(|r| vec![0; r.len()]).collect();
        let mut objective = 0.0;
        let mut deferred = vec![false; self.tasks.len()];
        for (z, (task, path)) in self.tasks.iter().zip(assignments).enumerate() {
            let mut at = task.region;
            for (&row, &sat) in self.chain_rows[task.chain].iter().zip(path) {
                objective += self.step_distance(at, sat);
                if used[row][sat] >= self.capacity[row][sat] {
                    objective += self.punishment;
                    deferred[z] = true;
                }
                used[row][sat] += 1;
                at = sat;
            }
        }
        (objective, deferred)
    }
}

/// Assigns every task hop to a deployed light instance.
///
/// `region_requests[s]` is the task count originating at satellite `s`;
/// `light_slot[m][s]` the number of instances of light row `m` on `s`.
pub fn solve_routing(
    model: LatencyModel<'_>,
    region_requests: &[u32],
    light_slot: &[Vec<u32>],
    config: &RoutingConfig,
) -> Result<RoutingMatrix> {
    let app = model.app;
    let satellites = model.graph.len();
    crate::perf::check_light_slot_shape(light_slot, app, satellites)?;
    if region_requests.len() != satellites {
        return Err(Error::ShapeMismatch(format!(
            "{} request regions for {satellites} satellites",
            region_requests.len()
        )));
    }
    let tasks = expand_tasks(region_requests, app.chains().len());
    let chain_rows: Vec<Vec<usize>> = app
        .chains()
        .iter()
        .map(|c| app.chain_light(c).into_iter().map(|m| app.row_of(m)).collect())
        .collect();
    let hosts: Vec<Vec<usize>> = light_slot
        .iter()
        .map(|row| (0..satellites).filter(|&s| row[s] > 0).collect())
        .collect();
    for task in &tasks {
        for &row in &chain_rows[task.chain] {
            if hosts[row].is_empty() {
                return Err(Error::NoInstance(app.light()[row]));
            }
        }
    }
    let capacity = light_slot
        .iter()
        .enumerate()
        .map(|(row, counts)| {
            let k = u64::from(app.microservice(app.light()[row]).parallel_capacity);
            counts.iter().map(|&y| u64::from(y) * k).collect()
        })
        .collect();
    let problem = Problem {
        model,
        tasks,
        chain_rows,
        hosts,
        capacity,
        punishment: config.overload_punishment,
    };
    let (assignments, mode) = if problem.exact_space() <= config.exact_search_cap {
        (problem.solve_exact(), RoutingMode::Exact)
    } else {
        (problem.solve_greedy(), RoutingMode::Greedy)
    };
    let (objective, deferred) = problem.evaluate(&assignments);
    Ok(RoutingMatrix {
        tasks: problem.tasks,
        assignments,
        deferred,
        objective,
        mode,
    })
}

/// Greedy routing regardless of instance size; used to compare against exact mode.
pub fn solve_routing_greedy(
    model: LatencyModel<'_>,
    region_requests: &[u32],
    light_slot: &[Vec<u32>],
    config: &RoutingConfig,
) -> Result<RoutingMatrix> {
    let forced = RoutingConfig {
        exact_search_cap: 0,
        ..*config
    };
    let mut routing = solve_routing(model, region_requests, light_slot, &forced)?;
    // An empty task set has a trivially exact search space of 1.
    routing.mode = RoutingMode::Greedy;
    Ok(routing)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosReport {
    pub violations: usize,
    pub latencies_ms: Vec<f64>,
}

/// Host chosen for each core member: nearest hosting satellite (mesh metric)
/// to the previous chain member, lowest id on ties.
fn pick_core_host(model: &LatencyModel<'_>, core: &[Vec<u32>], member: usize, near: usize) -> Result<usize> {
    let row = &core[model.app.row_of(member)];
    (0..row.len())
        .filter(|&s| row[s] > 0)
        .min_by(|&a, &b| {
            let g = model.graph;
            g.grid_distance(near, a).total_cmp(&g.grid_distance(near, b)).then(a.cmp(&b))
        })
        .ok_or(Error::NoInstance(member))
}

/// Per-task end-to-end latency and the count of tasks above `qos_bound_ms`.
///
/// Deferred tasks (served beyond instance capacity) wait `deferral_ms`
/// before being processed.
pub fn qos_violations(
    model: LatencyModel<'_>,
    routing: &RoutingMatrix,
    core: &[Vec<u32>],
    qos_bound_ms: f64,
    deferral_ms: f64,
    t_ms: f64,
) -> Result<QosReport> {
    let app = model.app;
    crate::perf::check_core_shape(core, app, model.graph.len())?;
    let mut latencies_ms = Vec::with_capacity(routing.len());
    for ((task, path), &deferred) in routing.tasks.iter().zip(&routing.assignments).zip(&routing.deferred) {
        let chain = &app.chains()[task.chain];
        let mut placement = vec![None; app.len()];
        let mut light = path.iter();
        let mut previous = task.region;
        for &m in &chain.members {
            let host = match app.microservice(m).kind {
                crate::workload::Kind::Light => *light.next().ok_or(Error::MissingPlacement(m))?,
                crate::workload::Kind::Core => pick_core_host(&model, core, m, previous)?,
            };
            placement[m] = Some(host);
            previous = host;
        }
        let mut latency = model.chain_latency(chain, &placement, t_ms)?;
        if deferred {
            latency += deferral_ms;
        }
        latencies_ms.push(latency);
    }
    let violations = latencies_ms.iter().filter(|&&l| l > qos_bound_ms).count();
    Ok(QosReport { violations, latencies_ms })
}
