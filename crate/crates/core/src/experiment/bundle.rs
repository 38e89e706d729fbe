//! Reference constellation, application and request scenarios used to
//! reproduce the evaluation runs.

use serde::{Deserialize, Serialize};

use crate::constellation::ConstellationSpec;
use crate::workload::{AppSpec, Chain, Kind, Microservice, ScenarioSpec};

/// Per-node resources: CPU cores, GB of memory, GPU cores, watts.
pub const NODE_CAPACITY: [f64; 4] = [4.0, 4.0, 4.0, 200.0];

/// Relative compute speed of successive satellites.
const SPEED_PATTERN: [f64; 6] = [1.0, 0.9, 1.1, 0.8, 1.2, 1.0];

/// Walker-Star shell at 550 km with the reference node resources.
pub fn reference_constellation(planes: usize, per_plane: usize) -> ConstellationSpec {
    let count = planes * per_plane;
    ConstellationSpec {
        planes,
        per_plane,
        altitude_km: 550.0,
        inclination_deg: 86.4,
        angular_velocity_deg_per_ms: None,
        capacities: NODE_CAPACITY.to_vec(),
        node_capacities: None,
        compute_speed: 1.0e5,
        node_compute_speed: Some((0..count).map(|i| 1.0e5 * SPEED_PATTERN[i % SPEED_PATTERN.len()]).collect()),
        link_rate: 1.0e5,
        link_overrides: Vec::new(),
    }
}

fn light(name: &str) -> Microservice {
    Microservice {
        name: name.into(),
        kind: Kind::Light,
        demands: vec![0.5, 0.5, 0.0, 20.0],
        compute_bits: 2.0e6,
        output_bits: 2.0e5,
        parallel_capacity: 10,
        price_deploy: 50.0,
        price_keep: 100.0,
        price_parallel: 150.0,
    }
}

fn core(name: &str) -> Microservice {
    Microservice {
        name: name.into(),
        kind: Kind::Core,
        demands: vec![1.0, 1.0, 2.0, 50.0],
        compute_bits: 1.0e7,
        output_bits: 1.0e5,
        parallel_capacity: 1000,
        price_deploy: 200.0,
        price_keep: 100.0,
        price_parallel: 0.0,
    }
}

/// Remote-sensing inference pipeline: `light_count` light preprocessing
/// stages feeding two core backbone stages, one chain.
pub fn reference_app(light_count: usize) -> AppSpec {
    let light_names = ["precoding", "projection", "tiling", "denoising"];
    let mut microservices: Vec<Microservice> = (0..light_count)
        .map(|i| light(light_names.get(i).copied().unwrap_or("stage")))
        .collect();
    microservices.push(core("backbone"));
    microservices.push(core("head"));
    let n = microservices.len();
    AppSpec {
        microservices,
        edges: (0..n - 1).map(|i| (i, i + 1)).collect(),
        chains: vec![Chain {
            name: "inference".into(),
            members: (0..n).collect(),
        }],
    }
}

/// QoS bound of the reference application, in ms.
pub const REFERENCE_QOS_BOUND_MS: f64 = 400.0;

fn totals(name: &str, phi: u32, totals: &[u32]) -> ScenarioSpec {
    ScenarioSpec {
        name: Some(name.into()),
        phi,
        slot_duration_ms: 60_000.0,
        totals: Some(totals.to_vec()),
        nominal: None,
        chains: None,
    }
}

/// Request levels where demand rises above the usual level.
pub const RISING_TOTALS: [u32; 5] = [55, 65, 27, 87, 76];
/// Request levels where demand falls below the usual level.
pub const FALLING_TOTALS: [u32; 4] = [43, 54, 63, 54];

/// One named experiment of the reproduction bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleScenario {
    pub name: String,
    pub scenario: ScenarioSpec,
    /// Box widths the agents are trained with.
    pub train_widths: Vec<u32>,
    /// Width at which trained agents are evaluated.
    pub eval_width: u32,
}

/// Timing-grid cell: light microservices and constellation shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingCell {
    pub light: usize,
    pub planes: usize,
    pub per_plane: usize,
}

impl TimingCell {
    pub fn satellites(&self) -> usize {
        self.planes * self.per_plane
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioBundle {
    pub scenarios: Vec<BundleScenario>,
    pub timing: Vec<TimingCell>,
}

impl ScenarioBundle {
    pub fn get(&self, name: &str) -> Option<&BundleScenario> {
        self.scenarios.iter().find(|s| s.name == name)
    }
}

/// The reproduction fixtures.
pub fn reproduce_scenarios() -> ScenarioBundle {
    let scenarios = vec![
        BundleScenario {
            name: "fig6".into(),
            scenario: totals("fig6", 2, &RISING_TOTALS),
            train_widths: vec![2],
            eval_width: 2,
        },
        BundleScenario {
            name: "fig7".into(),
            scenario: totals("fig7", 2, &RISING_TOTALS),
            train_widths: vec![2],
            eval_width: 2,
        },
        BundleScenario {
            name: "fig7-second".into(),
            scenario: totals("fig7-second", 2, &FALLING_TOTALS),
            train_widths: vec![2],
            eval_width: 2,
        },
        BundleScenario {
            name: "fig5".into(),
            scenario: totals("fig5", 1, &RISING_TOTALS),
            train_widths: vec![1],
            eval_width: 1,
        },
        BundleScenario {
            name: "fig8-9".into(),
            scenario: totals("fig8-9", 4, &RISING_TOTALS),
            train_widths: vec![1, 2, 4],
            eval_width: 4,
        },
        BundleScenario {
            name: "fig10".into(),
            scenario: totals("fig10", 4, &RISING_TOTALS),
            train_widths: vec![1, 4],
            eval_width: 4,
        },
    ];
    let mut timing = Vec::new();
    for light in [2, 4] {
        for (planes, per_plane) in [(2, 3), (3, 4), (3, 6)] {
            timing.push(TimingCell {
                light,
                planes,
                per_plane,
            });
        }
    }
    ScenarioBundle { scenarios, timing }
}
