use serde::{Deserialize, Serialize};

use super::RESOURCE_EPS;
use crate::constellation::ConstellationGraph;
use crate::error::Result;
use crate::perf::{check_core_shape, check_light_slot_shape};
use crate::workload::AppGraph;

/// Per-constraint outcome of a feasibility check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Core microservice ids without any instance.
    pub missing_core: Vec<usize>,
    /// Light microservice ids without any instance in the slot.
    pub missing_light: Vec<usize>,
    /// Satellites whose core load alone exceeds capacity.
    pub core_overloaded: Vec<usize>,
    /// Satellites whose core plus light load exceeds capacity.
    pub total_overloaded: Vec<usize>,
}

impl FeasibilityReport {
    pub fn core_complete(&self) -> bool {
        self.missing_core.is_empty()
    }

    pub fn light_complete(&self) -> bool {
        self.missing_light.is_empty()
    }

    pub fn core_within_capacity(&self) -> bool {
        self.core_overloaded.is_empty()
    }

    pub fn total_within_capacity(&self) -> bool {
        self.total_overloaded.is_empty()
    }

    pub fn feasible(&self) -> bool {
        self.core_complete() && self.light_complete() && self.core_within_capacity() && self.total_within_capacity()
    }
}

/// Resource load of the core scheme: `usage[s][r]`.
pub fn core_usage(graph: &ConstellationGraph, app: &AppGraph, core: &[Vec<u32>]) -> Vec<Vec<f64>> {
    let mut usage = vec![vec![0.0; graph.resource_types()]; graph.len()];
    for (&m, row) in app.core().iter().zip(core) {
        add_load(&mut usage, &app.microservice(m).demands, row);
    }
    usage
}

pub(crate) fn add_load(usage: &mut [Vec<f64>], demands: &[f64], counts: &[u32]) {
    for (load, &n) in usage.iter_mut().zip(counts) {
        for (l, d) in load.iter_mut().zip(demands) {
            *l += f64::from(n) * d;
        }
    }
}

pub(crate) fn fits(load: &[f64], capacity: &[f64]) -> bool {
    load.iter().zip(capacity).all(|(l, c)| *l <= c + RESOURCE_EPS)
}

/// Checks completeness of both schemes and the capacity limits of the core
/// scheme alone and of the core scheme together with one light slot.
pub fn scheme_feasible(
    graph: &ConstellationGraph,
    app: &AppGraph,
    core: &[Vec<u32>],
    light_slot: &[Vec<u32>],
) -> Result<FeasibilityReport> {
    check_core_shape(core, app, graph.len())?;
    check_light_slot_shape(light_slot, app, graph.len())?;
    let absent = |ids: &[usize], rows: &[Vec<u32>]| -> Vec<usize> {
        ids.iter()
            .zip(rows)
            .filter(|(_, row)| row.iter().all(|&n| n == 0))
            .map(|(&m, _)| m)
            .collect()
    };
    let mut usage = core_usage(graph, app, core);
    let overloaded = |usage: &[Vec<f64>]| -> Vec<usize> {
        graph
            .nodes()
            .iter()
            .filter(|n| !fits(&usage[n.id], &n.capacities))
            .map(|n| n.id)
            .collect()
    };
    let core_overloaded = overloaded(&usage);
    for (&m, row) in app.light().iter().zip(light_slot) {
        add_load(&mut usage, &app.microservice(m).demands, row);
    }
    Ok(FeasibilityReport {
        missing_core: absent(app.core(), core),
        missing_light: absent(app.light(), light_slot),
        core_overloaded,
        total_overloaded: overloaded(&usage),
    })
}
