//! CSV tables shared by every mode. Each table keeps one column layout
//! regardless of the mode that writes it.

use std::path::Path;

use serde::Serialize;

use crate::env::{scheme_feasible, Platform};
use crate::error::Result;
use crate::learn::{CurvePoint, Evaluation, Phase, PhaseRecord};

#[derive(Debug, Clone, Serialize)]
pub struct DeploymentRow {
    pub run: String,
    pub seed: u64,
    pub slot: usize,
    pub microservice: usize,
    pub satellite: usize,
    pub count: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoreRow {
    pub run: String,
    pub seed: u64,
    pub microservice: usize,
    pub satellite: usize,
    pub count: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlotRow {
    pub run: String,
    pub seed: u64,
    pub slot: usize,
    pub requests: u32,
    pub tasks: usize,
    pub processed: usize,
    pub violations: usize,
    pub deployed: u32,
    pub feasible: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LatencyRow {
    pub run: String,
    pub seed: u64,
    pub slot: usize,
    pub task: usize,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CostRow {
    pub run: String,
    pub seed: u64,
    pub slot: usize,
    pub deploy: f64,
    pub keep: f64,
    pub parallel: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveRow {
    pub run: String,
    pub seed: u64,
    pub iteration: usize,
    pub protagonist_return: f64,
    pub adversary_return: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleRow {
    pub run: String,
    pub seed: u64,
    pub iteration: usize,
    pub phase: String,
    pub round: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingRow {
    pub label: String,
    pub light: usize,
    pub satellites: usize,
    pub repetitions: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

/// Long-format figure data: one value per series and slot.
#[derive(Debug, Clone, Serialize)]
pub struct FigureRow {
    pub figure: String,
    pub metric: String,
    pub series: String,
    pub slot: usize,
    pub value: f64,
}

/// Rows collected for one output directory.
#[derive(Debug, Clone, Default)]
pub struct Tables {
    pub core: Vec<CoreRow>,
    pub deployments: Vec<DeploymentRow>,
    pub slots: Vec<SlotRow>,
    pub latencies: Vec<LatencyRow>,
    pub costs: Vec<CostRow>,
    pub curves: Vec<CurveRow>,
    pub schedule_log: Vec<ScheduleRow>,
    pub timing: Vec<TimingRow>,
    pub figures: Vec<FigureRow>,
    /// Light slots checked for feasibility and how many failed.
    pub checked: usize,
    pub infeasible: usize,
}

fn write_table<T: Serialize>(dir: &Path, name: &str, rows: &[T], written: &mut Vec<String>) -> Result<()> {
    if rows.is_empty() {
        return Ok(());
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    crate::io::write_atomic(&dir.join(name), &bytes)?;
    written.push(name.to_string());
    Ok(())
}

impl Tables {
    pub fn record_core(&mut self, run: &str, seed: u64, platform: &Platform, core: &[Vec<u32>]) {
        for (&m, row) in platform.app.core().iter().zip(core) {
            for (s, &count) in row.iter().enumerate().filter(|(_, &c)| c > 0) {
                self.core.push(CoreRow {
                    run: run.into(),
                    seed,
                    microservice: m,
                    satellite: s,
                    count,
                });
            }
        }
    }

    /// Records an evaluation episode and checks every slot of its schedule.
    pub fn record_evaluation(
        &mut self,
        run: &str,
        seed: u64,
        platform: &Platform,
        core: &[Vec<u32>],
        eval: &Evaluation,
    ) -> Result<()> {
        for (t, slot) in eval.schedule.iter().enumerate() {
            self.record_schedule_slot(run, seed, platform, core, t, slot)?;
        }
        for o in &eval.outcomes {
            self.slots.push(SlotRow {
                run: run.into(),
                seed,
                slot: o.slot,
                requests: o.requests.iter().sum(),
                tasks: o.tasks,
                processed: o.processed,
                violations: o.violations,
                deployed: o.deployed,
                feasible: o.feasible,
            });
            for (task, &latency_ms) in o.latencies_ms.iter().enumerate() {
                self.latencies.push(LatencyRow {
                    run: run.into(),
                    seed,
                    slot: o.slot,
                    task,
                    latency_ms,
                });
            }
            self.costs.push(CostRow {
                run: run.into(),
                seed,
                slot: o.slot,
                deploy: o.cost_deploy,
                keep: o.cost_keep,
                parallel: o.cost_parallel,
                total: o.cost_deploy + o.cost_keep + o.cost_parallel,
            });
        }
        Ok(())
    }

    fn record_schedule_slot(
        &mut self,
        run: &str,
        seed: u64,
        platform: &Platform,
        core: &[Vec<u32>],
        t: usize,
        slot: &[Vec<u32>],
    ) -> Result<()> {
        self.checked += 1;
        if !scheme_feasible(&platform.graph, &platform.app, core, slot)?.feasible() {
            self.infeasible += 1;
        }
        for (&m, row) in platform.app.light().iter().zip(slot) {
            for (s, &count) in row.iter().enumerate().filter(|(_, &c)| c > 0) {
                self.deployments.push(DeploymentRow {
                    run: run.into(),
                    seed,
                    slot: t,
                    microservice: m,
                    satellite: s,
                    count,
                });
            }
        }
        Ok(())
    }

    pub fn record_curve(&mut self, run: &str, seed: u64, curve: &[CurvePoint]) {
        for c in curve {
            self.curves.push(CurveRow {
                run: run.into(),
                seed,
                iteration: c.iteration,
                protagonist_return: c.protagonist_return,
                adversary_return: c.adversary_return,
                policy_loss: c.protagonist.policy_loss,
                value_loss: c.protagonist.value_loss,
                entropy: c.protagonist.entropy,
                approx_kl: c.protagonist.approx_kl,
            });
        }
    }

    pub fn record_phase_schedule(&mut self, run: &str, seed: u64, schedule: &[PhaseRecord]) {
        for p in schedule {
            self.schedule_log.push(ScheduleRow {
                run: run.into(),
                seed,
                iteration: p.iteration,
                phase: match p.phase {
                    Phase::Protagonist => "protagonist".into(),
                    Phase::Adversary => "adversary".into(),
                },
                round: p.round,
            });
        }
    }

    pub fn extend(&mut self, other: Tables) {
        self.core.extend(other.core);
        self.deployments.extend(other.deployments);
        self.slots.extend(other.slots);
        self.latencies.extend(other.latencies);
        self.costs.extend(other.costs);
        self.curves.extend(other.curves);
        self.schedule_log.extend(other.schedule_log);
        self.timing.extend(other.timing);
        self.figures.extend(other.figures);
        self.checked += other.checked;
        self.infeasible += other.infeasible;
    }

    /// Writes every non-empty table into `dir`; returns the file names.
    pub fn write(&self, dir: &Path) -> Result<Vec<String>> {
        let mut written = Vec::new();
        write_table(dir, "core.csv", &self.core, &mut written)?;
        write_table(dir, "deployments.csv", &self.deployments, &mut written)?;
        write_table(dir, "slots.csv", &self.slots, &mut written)?;
        write_table(dir, "latencies.csv", &self.latencies, &mut written)?;
        write_table(dir, "costs.csv", &self.costs, &mut written)?;
        write_table(dir, "curves.csv", &self.curves, &mut written)?;
        write_table(dir, "schedule_log.csv", &self.schedule_log, &mut written)?;
        write_table(dir, "timing.csv", &self.timing, &mut written)?;
        write_table(dir, "figures.csv", &self.figures, &mut written)?;
        Ok(written)
    }
}
