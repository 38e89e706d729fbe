//! Reproduction of the reference comparisons: robust against vanilla agents,
//! learned against threshold baselines, box widths, latency and decision
//! timing.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bundle::{
    reference_app, reference_constellation, reproduce_scenarios, TimingCell, FALLING_TOTALS, REFERENCE_QOS_BOUND_MS,
    RISING_TOTALS,
};
use super::tables::{FigureRow, Tables, TimingRow};
use super::timing::{measure_decision_latency, LatencyStats};
use crate::env::{EnvConfig, Platform, RequestMode, Stage1Env, Stage2Env};
use crate::error::{Error, Result};
use crate::learn::{
    evaluate_policy, evaluate_schedule, hpa_baseline, new_protagonist, robust_hpa_baseline, train_msrarl,
    train_stage1, train_vanilla, Checkpoint, Evaluation, PolicyParams, TrainConfig,
};
use crate::routing::RoutingConfig;
use crate::workload::RequestScenario;

/// Satellites per plane and planes of the reproduction constellation.
const PLANES: usize = 2;
const PER_PLANE: usize = 3;
const LIGHT: usize = 2;

/// Reference platform with `light` light stages on a `planes x per_plane` shell.
pub fn reference_platform(
    light: usize,
    planes: usize,
    per_plane: usize,
    env: EnvConfig,
    routing: RoutingConfig,
) -> Result<Arc<Platform>> {
    let graph = reference_constellation(planes, per_plane).build()?;
    let app = reference_app(light).build()?;
    Ok(Arc::new(Platform::new(graph, app, routing, env)?))
}

pub fn default_env_config() -> EnvConfig {
    EnvConfig::with_qos_bound(REFERENCE_QOS_BOUND_MS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Demand {
    Rising,
    Falling,
}

impl Demand {
    fn totals(self) -> &'static [u32] {
        match self {
            Demand::Rising => &RISING_TOTALS,
            Demand::Falling => &FALLING_TOTALS,
        }
    }
}

/// One trained agent: demand profile and training width (`None`: vanilla).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct RunKey {
    demand: Demand,
    width: Option<u32>,
}

impl RunKey {
    fn name(self) -> String {
        let demand = match self.demand {
            Demand::Rising => "rising",
            Demand::Falling => "falling",
        };
        match self.width {
            None => format!("{demand}-vanilla"),
            Some(w) => format!("{demand}-width{w}"),
        }
    }
}

const fn key(demand: Demand, width: Option<u32>) -> RunKey {
    RunKey { demand, width }
}

/// Figure evaluations: figure, metric, evaluation width, request mode,
/// and `(series label, agent)` pairs, all on one demand profile.
struct FigureSpec {
    figure: &'static str,
    bundle: &'static str,
    metric: Metric,
    demand: Demand,
    eval_width: u32,
    mode: RequestMode,
    series: &'static [(&'static str, RunKey)],
}

#[derive(Debug, Clone, Copy)]
enum Metric {
    Processed,
    Deployed,
    MeanLatency,
}

impl Metric {
    fn name(self) -> &'static str {
        match self {
            Metric::Processed => "processed",
            Metric::Deployed => "deployed",
            Metric::MeanLatency => "mean_latency_ms",
        }
    }

    fn per_slot(self, eval: &Evaluation) -> Vec<f64> {
        eval.outcomes
            .iter()
            .map(|o| match self {
                Metric::Processed => o.processed as f64,
                Metric::Deployed => f64::from(o.deployed),
                Metric::MeanLatency => {
                    if o.latencies_ms.is_empty() {
                        0.0
                    } else {
                        o.latencies_ms.iter().sum::<f64>() / o.latencies_ms.len() as f64
                    }
                }
            })
            .collect()
    }
}

const RISING_VANILLA: RunKey = key(Demand::Rising, None);
const RISING_W1: RunKey = key(Demand::Rising, Some(1));
const RISING_W2: RunKey = key(Demand::Rising, Some(2));
const RISING_W4: RunKey = key(Demand::Rising, Some(4));
const FALLING_VANILLA: RunKey = key(Demand::Falling, None);
const FALLING_W2: RunKey = key(Demand::Falling, Some(2));

const FIGURES: [FigureSpec; 7] = [
    FigureSpec {
        figure: "fig6",
        bundle: "fig6",
        metric: Metric::Processed,
        demand: Demand::Rising,
        eval_width: 2,
        mode: RequestMode::UpperVertex,
        series: &[("msrarl", RISING_W2), ("vanilla", RISING_VANILLA)],
    },
    FigureSpec {
        figure: "fig7",
        bundle: "fig7",
        metric: Metric::Deployed,
        demand: Demand::Rising,
        eval_width: 2,
        mode: RequestMode::UpperVertex,
        series: &[("msrarl", RISING_W2), ("vanilla", RISING_VANILLA)],
    },
    FigureSpec {
        figure: "fig7-second",
        bundle: "fig7-second",
        metric: Metric::Deployed,
        demand: Demand::Falling,
        eval_width: 2,
        mode: RequestMode::LowerVertex,
        series: &[("msrarl", FALLING_W2), ("vanilla", FALLING_VANILLA)],
    },
    FigureSpec {
        figure: "fig5",
        bundle: "fig5",
        metric: Metric::Deployed,
        demand: Demand::Rising,
        eval_width: 1,
        mode: RequestMode::Nominal,
        series: &[("msrarl", RISING_W1)],
    },
    FigureSpec {
        figure: "fig8",
        bundle: "fig8-9",
        metric: Metric::Processed,
        demand: Demand::Rising,
        eval_width: 4,
        mode: RequestMode::UpperVertex,
        series: &[("width-1", RISING_W1), ("width-2", RISING_W2), ("width-4", RISING_W4)],
    },
    FigureSpec {
        figure: "fig9",
        bundle: "fig8-9",
        metric: Metric::Deployed,
        demand: Demand::Rising,
        eval_width: 4,
        mode: RequestMode::UpperVertex,
        series: &[("width-1", RISING_W1), ("width-2", RISING_W2), ("width-4", RISING_W4)],
    },
    FigureSpec {
        figure: "fig10",
        bundle: "fig10",
        metric: Metric::MeanLatency,
        demand: Demand::Rising,
        eval_width: 4,
        mode: RequestMode::UpperVertex,
        series: &[("vanilla", RISING_VANILLA), ("width-1", RISING_W1), ("width-4", RISING_W4)],
    },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    /// Mean over seeds, one entry per slot.
    pub per_slot: Vec<f64>,
}

impl Series {
    pub fn mean(&self) -> f64 {
        self.per_slot.iter().sum::<f64>() / self.per_slot.len().max(1) as f64
    }

    pub fn total(&self) -> f64 {
        self.per_slot.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureData {
    pub figure: String,
    pub metric: String,
    pub series: Vec<Series>,
}

impl FigureData {
    pub fn series(&self, label: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.label == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingResult {
    pub cell: TimingCell,
    /// Whether the timed network was trained or freshly initialized.
    pub trained: bool,
    pub stats: LatencyStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceReport {
    pub seeds: Vec<u64>,
    pub figures: Vec<FigureData>,
    pub timing: Vec<TimingResult>,
    /// Robust-HPA instance counts at least the HPA ones, entry by entry, for
    /// every seed's core placement.
    pub robust_hpa_dominates: Option<bool>,
    pub checked_slots: usize,
    pub infeasible_slots: usize,
    /// Wall-clock seconds spent training, summed over seeds.
    pub training_seconds: f64,
}

impl ReproduceReport {
    pub fn figure(&self, name: &str) -> Option<&FigureData> {
        self.figures.iter().find(|f| f.figure == name)
    }

    pub fn series(&self, figure: &str, label: &str) -> Option<&Series> {
        self.figure(figure).and_then(|f| f.series(label))
    }
}

struct SeedOutcome {
    seed: u64,
    tables: Tables,
    /// `(figure, metric, series, per-slot values)`.
    metrics: Vec<(String, String, String, Vec<f64>)>,
    dominates: Option<bool>,
    timing_policy: Option<PolicyParams>,
    training_seconds: f64,
    /// Files written for this seed, relative to the output directory.
    files: Vec<String>,
}

fn scenario(demand: Demand, regions: usize) -> Result<RequestScenario> {
    RequestScenario::from_totals(demand.totals(), regions)
}

fn slot_duration() -> f64 {
    reproduce_scenarios().scenarios[0].scenario.slot_duration_ms
}

/// Context of one reproduction run.
pub(super) struct Reproduction<'a> {
    pub platform: Arc<Platform>,
    pub train: &'a TrainConfig,
    pub selected: &'a [String],
    pub timing_repetitions: usize,
    pub config_hash: &'a str,
}

impl Reproduction<'_> {
    fn selected(&self, bundle: &str) -> bool {
        self.selected.iter().any(|s| s == bundle)
    }

    fn figures(&self) -> impl Iterator<Item = &'static FigureSpec> + '_ {
        FIGURES.iter().filter(|f| self.selected(f.bundle))
    }

    fn needed_runs(&self) -> BTreeSet<RunKey> {
        let mut runs: BTreeSet<RunKey> = self.figures().flat_map(|f| f.series.iter().map(|(_, k)| *k)).collect();
        if self.selected("timing") {
            runs.insert(RISING_W2);
        }
        runs
    }

    fn run_seed(&self, seed: u64, dir: &Path) -> Result<SeedOutcome> {
        let platform = &self.platform;
        let d = platform.satellites();
        let mut tables = Tables::default();
        let mut training_seconds = 0.0;
        let mut files = Vec::new();
        let mut checkpoint = |role: &str, name: &str, params: &PolicyParams| -> Result<()> {
            let file = format!("checkpoints/{name}-{role}.json");
            Checkpoint {
                config_hash: self.config_hash.to_string(),
                seed,
                iteration: self.train.iterations,
                role: role.into(),
                params: params.clone(),
            }
            .save(&dir.join(&file))?;
            files.push(file);
            Ok(())
        };

        let started = Instant::now();
        let mut stage1 = Stage1Env::new(platform.clone())?;
        let placed = train_stage1(&mut stage1, self.train, seed)?;
        training_seconds += started.elapsed().as_secs_f64();
        tables.record_core("stage1", seed, platform, &placed.core);
        tables.record_curve("stage1", seed, &placed.curve);
        checkpoint("stage1", "core", &placed.policy)?;
        let core = placed.core;

        let mut trained: Vec<(RunKey, PolicyParams)> = Vec::new();
        for run in self.needed_runs() {
            let env = Stage2Env::new(
                platform.clone(),
                core.clone(),
                scenario(run.demand, d)?,
                run.width.unwrap_or(0),
                slot_duration(),
                RequestMode::Nominal,
            )?;
            let started = Instant::now();
            let result = match run.width {
                Some(_) => train_msrarl(&env, self.train, seed)?,
                None => train_vanilla(&env, self.train, seed)?,
            };
            training_seconds += started.elapsed().as_secs_f64();
            if let Some(reason) = &result.diverged {
                return Err(Error::Divergence(format!("{} seed {seed}: {reason}", run.name())));
            }
            let name = run.name();
            tables.record_curve(&name, seed, &result.curve);
            tables.record_phase_schedule(&name, seed, &result.schedule);
            checkpoint("protagonist", &name, &result.protagonist)?;
            if let Some(adv) = &result.adversary {
                checkpoint("adversary", &name, adv)?;
            }
            trained.push((run, result.protagonist));
        }
        let agent = |k: RunKey| -> &PolicyParams { &trained.iter().find(|(r, _)| *r == k).expect("trained run").1 };

        let mut metrics = Vec::new();
        for fig in self.figures() {
            let env = Stage2Env::new(
                platform.clone(),
                core.clone(),
                scenario(fig.demand, d)?,
                fig.eval_width,
                slot_duration(),
                fig.mode,
            )?;
            for (label, run) in fig.series {
                let eval = evaluate_policy(&env, agent(*run), None, seed)?;
                tables.record_evaluation(&format!("{}/{label}", fig.figure), seed, platform, &core, &eval)?;
                metrics.push((
                    fig.figure.to_string(),
                    fig.metric.name().to_string(),
                    label.to_string(),
                    fig.metric.per_slot(&eval),
                ));
            }
        }

        let mut dominates = None;
        if self.selected("fig5") {
            let nominal = scenario(Demand::Rising, d)?;
            let env = Stage2Env::new(platform.clone(), core.clone(), nominal.clone(), 1, slot_duration(), RequestMode::Nominal)?;
            let hpa = hpa_baseline(platform, &core, &nominal)?;
            let robust = robust_hpa_baseline(platform, &core, &nominal, 1)?;
            let entrywise = hpa
                .iter()
                .flatten()
                .flatten()
                .zip(robust.iter().flatten().flatten())
                .all(|(h, r)| r >= h);
            dominates = Some(entrywise);
            for (label, schedule) in [("hpa", &hpa), ("robust-hpa", &robust)] {
                let eval = evaluate_schedule(&env, schedule, seed)?;
                tables.record_evaluation(&format!("fig5/{label}"), seed, platform, &core, &eval)?;
                metrics.push((
                    "fig5".into(),
                    Metric::Deployed.name().into(),
                    label.into(),
                    Metric::Deployed.per_slot(&eval),
                ));
            }
        }

        let timing_policy = self
            .selected("timing")
            .then(|| agent(RISING_W2).clone());
        Ok(SeedOutcome {
            seed,
            tables,
            metrics,
            dominates,
            timing_policy,
            training_seconds,
            files,
        })
    }

    fn timing(&self, trained: Option<&PolicyParams>) -> Result<Vec<TimingResult>> {
        let env_config = self.platform.env;
        let mut out = Vec::new();
        for cell in reproduce_scenarios().timing {
            let platform = reference_platform(cell.light, cell.planes, cell.per_plane, env_config, self.platform.routing)?;
            let d = platform.satellites();
            let mut core = vec![vec![0; d]; platform.app.core().len()];
            core.iter_mut().for_each(|row| row[0] = 1);
            let env = Stage2Env::new(
                platform,
                core,
                scenario(Demand::Rising, d)?,
                2,
                slot_duration(),
                RequestMode::Nominal,
            )?;
            let fits = |p: &PolicyParams| p.input_len() == env.protagonist_state_len() && p.heads == d;
            let (policy, was_trained) = match trained.filter(|p| fits(p)) {
                Some(p) => (p.clone(), true),
                None => (new_protagonist(&env, self.train, 0)?, false),
            };
            out.push(TimingResult {
                cell,
                trained: was_trained,
                stats: measure_decision_latency(&env, &policy, self.timing_repetitions)?,
            });
        }
        Ok(out)
    }

    /// Runs every seed, writes per-seed tables under `seed-<n>/` and the
    /// aggregated figure and timing tables at the top of `out`.
    pub fn run(&self, seeds: &[u64], out: &Path, written: &mut Vec<String>) -> Result<ReproduceReport> {
        let mut outcomes: Vec<SeedOutcome> = seeds
            .par_iter()
            .map(|&seed| {
                let dir = out.join(format!("seed-{seed}"));
                let mut outcome = self.run_seed(seed, &dir)?;
                let tables = outcome.tables.write(&dir)?;
                outcome.files.extend(tables);
                Ok(outcome)
            })
            .collect::<Result<_>>()?;
        outcomes.sort_by_key(|o| o.seed);

        let mut top = Tables::default();
        for o in &outcomes {
            written.extend(o.files.iter().map(|f| format!("seed-{}/{f}", o.seed)));
            top.checked += o.tables.checked;
            top.infeasible += o.tables.infeasible;
        }

        let figures = aggregate(&outcomes);
        for f in &figures {
            for s in &f.series {
                for (slot, &value) in s.per_slot.iter().enumerate() {
                    top.figures.push(FigureRow {
                        figure: f.figure.clone(),
                        metric: f.metric.clone(),
                        series: s.label.clone(),
                        slot,
                        value,
                    });
                }
            }
        }

        let timing = if self.selected("timing") {
            self.timing(outcomes.first().and_then(|o| o.timing_policy.as_ref()))?
        } else {
            Vec::new()
        };
        for t in &timing {
            top.timing.push(TimingRow {
                label: if t.trained { "policy-trained".into() } else { "policy-initial".into() },
                light: t.cell.light,
                satellites: t.cell.satellites(),
                repetitions: t.stats.samples_ms.len(),
                mean_ms: t.stats.mean_ms,
                p95_ms: t.stats.p95_ms,
                max_ms: t.stats.max_ms,
            });
        }
        written.extend(top.write(out)?);

        let dominates = outcomes
            .iter()
            .filter_map(|o| o.dominates)
            .fold(None, |acc: Option<bool>, d| Some(acc.unwrap_or(true) && d));
        Ok(ReproduceReport {
            seeds: seeds.to_vec(),
            figures,
            timing,
            robust_hpa_dominates: dominates,
            checked_slots: top.checked,
            infeasible_slots: top.infeasible,
            training_seconds: outcomes.iter().map(|o| o.training_seconds).sum(),
        })
    }
}

/// Per-slot means over seeds, in figure order.
fn aggregate(outcomes: &[SeedOutcome]) -> Vec<FigureData> {
    let mut figures: Vec<FigureData> = Vec::new();
    for o in outcomes {
        for (figure, metric, label, values) in &o.metrics {
            let fig = match figures.iter().position(|f| &f.figure == figure) {
                Some(i) => &mut figures[i],
                None => {
                    figures.push(FigureData {
                        figure: figure.clone(),
                        metric: metric.clone(),
                        series: Vec::new(),
                    });
                    figures.last_mut().expect("just pushed")
                }
            };
            match fig.series.iter_mut().find(|s| &s.label == label) {
                Some(s) => s.per_slot.iter_mut().zip(values).for_each(|(a, v)| *a += v),
                None => fig.series.push(Series {
                    label: label.clone(),
                    per_slot: values.clone(),
                }),
            }
        }
    }
    let n = outcomes.len().max(1) as f64;
    for f in &mut figures {
        for s in &mut f.series {
            s.per_slot.iter_mut().for_each(|v| *v /= n);
        }
    }
    figures
}

/// Platform of the reproduction runs.
pub fn reproduction_platform(env: EnvConfig, routing: RoutingConfig) -> Result<Arc<Platform>> {
    reference_platform(LIGHT, PLANES, PER_PLANE, env, routing)
}
