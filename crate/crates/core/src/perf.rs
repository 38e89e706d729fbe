//! Latency and money-cost models over deployment schemes.

use serde::{Deserialize, Serialize};

use crate::constellation::ConstellationGraph;
use crate::error::{Error, Result};
use crate::workload::{AppGraph, Chain};

/// Speed of light in km/ms.
pub const SPEED_OF_LIGHT_KM_PER_MS: f64 = 299.792_458;

/// Core scheme `X` (deployed once at t = 0) and light scheme `Y` over slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentScheme {
    /// `core[m][s]`, rows in core-row order.
    pub core: Vec<Vec<u32>>,
    /// `light[t][m][s]`, rows in light-row order.
    pub light: Vec<Vec<Vec<u32>>>,
}

impl DeploymentScheme {
    pub fn check_shape(&self, app: &AppGraph, satellites: usize) -> Result<()> {
        check_core_shape(&self.core, app, satellites)?;
        for slot in &self.light {
            check_light_slot_shape(slot, app, satellites)?;
        }
        Ok(())
    }

    pub fn slots(&self) -> usize {
        self.light.len()
    }
}

pub(crate) fn check_core_shape(core: &[Vec<u32>], app: &AppGraph, satellites: usize) -> Result<()> {
    if core.len() != app.core().len() || core.iter().any(|r| r.len() != satellites) {
        return Err(Error::ShapeMismatch(format!(
            "core scheme must be {}x{satellites}",
            app.core().len()
        )));
    }
    Ok(())
}

pub(crate) fn check_light_slot_shape(slot: &[Vec<u32>], app: &AppGraph, satellites: usize) -> Result<()> {
    if slot.len() != app.light().len() || slot.iter().any(|r| r.len() != satellites) {
        return Err(Error::ShapeMismatch(format!(
            "light slot must be {}x{satellites}",
            app.light().len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub transmission_ms: f64,
    pub propagation_ms: f64,
    pub processing_ms: f64,
    pub total_ms: f64,
}

/// Latency evaluation bound to one constellation and application.
#[derive(Debug, Clone, Copy)]
pub struct LatencyModel<'a> {
    pub graph: &'a ConstellationGraph,
    pub app: &'a AppGraph,
}

impl<'a> LatencyModel<'a> {
    pub fn new(graph: &'a ConstellationGraph, app: &'a AppGraph) -> Self {
        Self { graph, app }
    }

    /// Propagation delay of `u`'s output from `src` to `dst`. Zero when `u`
    /// heads its chain.
    pub fn propagation_latency(&self, u_is_chain_head: bool, src: usize, dst: usize, t_ms: f64) -> Result<f64> {
        let path = self.graph.path_metrics(src, dst, t_ms)?;
        if u_is_chain_head || src == dst {
            return Ok(0.0);
        }
        Ok(path.distance_km / SPEED_OF_LIGHT_KM_PER_MS)
    }

    /// Serialization delay of `u`'s output over the bottleneck link.
    pub fn transmission_latency(&self, u: usize, src: usize, dst: usize) -> Result<f64> {
        if src == dst {
            self.graph.node(src)?;
            return Ok(0.0);
        }
        let path = self.graph.path_metrics(src, dst, 0.0)?;
        Ok(self.app.microservice(u).output_bits / path.rate_bits_per_ms)
    }

    pub fn processing_latency(&self, v: usize, host: usize) -> Result<f64> {
        let node = self.graph.node(host)?;
        Ok(self.app.microservice(v).compute_bits / node.compute_speed)
    }

    /// Latency of `v` on `j` fed by `u` on `i`.
    pub fn hop_latency(
        &self,
        u: usize,
        u_is_chain_head: bool,
        v: usize,
        i: usize,
        j: usize,
        t_ms: f64,
    ) -> Result<LatencyBreakdown> {
        let transmission_ms = self.transmission_latency(u, i, j)?;
        let propagation_ms = self.propagation_latency(u_is_chain_head, i, j, t_ms)?;
        let processing_ms = self.processing_latency(v, j)?;
        Ok(LatencyBreakdown {
            transmission_ms,
            propagation_ms,
            processing_ms,
            total_ms: transmission_ms + propagation_ms + processing_ms,
        })
    }

    /// End-to-end latency of one chain. `placement[m]` is the host of
    /// microservice `m`. At fan-in members the latest upstream arrival wins.
    pub fn chain_latency(&self, chain: &Chain, placement: &[Option<usize>], t_ms: f64) -> Result<f64> {
        let mut finish = vec![0.0f64; self.app.len()];
        let mut is_head = vec![false; self.app.len()];
        let mut latest = 0.0f64;
        for &v in &chain.members {
            let host_v = placement.get(v).copied().flatten().ok_or(Error::MissingPlacement(v))?;
            let preds = self.app.chain_predecessors(chain, v);
            let processing = self.processing_latency(v, host_v)?;
            let arrival = if preds.is_empty() {
                is_head[v] = true;
                0.0
            } else {
                let mut arrival = f64::NEG_INFINITY;
                for u in preds {
                    let host_u = placement[u].ok_or(Error::MissingPlacement(u))?;
                    let hop = self.transmission_latency(u, host_u, host_v)?
                        + self.propagation_latency(is_head[u], host_u, host_v, t_ms)?;
                    arrival = arrival.max(finish[u] + hop);
                }
                arrival
            };
            finish[v] = arrival + processing;
            latest = latest.max(finish[v]);
        }
        Ok(latest)
    }
}

fn light_prices(app: &AppGraph) -> impl Iterator<Item = &crate::workload::Microservice> {
    app.light().iter().map(|&m| app.microservice(m))
}

/// Core deployment plus per-slot maintenance of the t = 0 core scheme.
pub fn cost_core(core: &[Vec<u32>], app: &AppGraph, slots: usize) -> Result<f64> {
    let satellites = core.first().map_or(0, Vec::len);
    check_core_shape(core, app, satellites)?;
    Ok(app
        .core()
        .iter()
        .zip(core)
        .map(|(&m, row)| {
            let ms = app.microservice(m);
            let count: u32 = row.iter().sum();
            (ms.price_deploy + slots as f64 * ms.price_keep) * f64::from(count)
        })
        .sum())
}

fn check_light(light: &[Vec<Vec<u32>>], app: &AppGraph) -> Result<()> {
    let satellites = light.first().and_then(|s| s.first()).map_or(0, Vec::len);
    for slot in light {
        check_light_slot_shape(slot, app, satellites)?;
    }
    Ok(())
}

/// Redeployment cost: new instances relative to the previous slot.
pub fn slot_cost_deploy(current: &[Vec<u32>], previous: Option<&[Vec<u32>]>, app: &AppGraph) -> f64 {
    let Some(previous) = previous else {
        return 0.0;
    };
    light_prices(app)
        .zip(current.iter().zip(previous))
        .map(|(ms, (cur, prev))| {
            let added: u32 = cur.iter().zip(prev).map(|(&c, &p)| c.saturating_sub(p)).sum();
            ms.price_deploy * f64::from(added)
        })
        .sum()
}

pub fn slot_cost_keep(current: &[Vec<u32>], app: &AppGraph) -> f64 {
    light_prices(app)
        .zip(current)
        .map(|(ms, row)| ms.price_keep * f64::from(row.iter().sum::<u32>()))
        .sum()
}

pub fn slot_cost_parallel(current: &[Vec<u32>], app: &AppGraph) -> f64 {
    light_prices(app)
        .zip(current)
        .map(|(ms, row)| ms.price_parallel * f64::from(row.iter().sum::<u32>()))
        .sum()
}

pub fn cost_light_deploy(light: &[Vec<Vec<u32>>], app: &AppGraph) -> Result<f64> {
    check_light(light, app)?;
    Ok(light
        .windows(2)
        .map(|w| slot_cost_deploy(&w[1], Some(&w[0]), app))
        .sum())
}

pub fn cost_light_keep(light: &[Vec<Vec<u32>>], app: &AppGraph) -> Result<f64> {
    check_light(light, app)?;
    Ok(light.iter().map(|slot| slot_cost_keep(slot, app)).sum())
}

pub fn cost_light_parallel(light: &[Vec<Vec<u32>>], app: &AppGraph) -> Result<f64> {
    check_light(light, app)?;
    Ok(light.iter().map(|slot| slot_cost_parallel(slot, app)).sum())
}

/// The four cost terms for a full scheme.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub core: f64,
    pub light_deploy: f64,
    pub light_keep: f64,
    pub light_parallel: f64,
}

impl CostReport {
    pub fn evaluate(scheme: &DeploymentScheme, app: &AppGraph) -> Result<Self> {
        Ok(Self {
            core: cost_core(&scheme.core, app, scheme.slots())?,
            light_deploy: cost_light_deploy(&scheme.light, app)?,
            light_keep: cost_light_keep(&scheme.light, app)?,
            light_parallel: cost_light_parallel(&scheme.light, app)?,
        })
    }

    pub fn total(&self) -> f64 {
        self.core + self.light_deploy + self.light_keep + self.light_parallel
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::ConstellationSpec;
    use crate::workload::{Kind, Microservice};

    fn ms(name: &str, kind: Kind, a: f64, b: f64) -> Microservice {
        Microservice {
            name: name.into(),
            kind,
            demands: vec![1.0],
            compute_bits: a,
            output_bits: b,
            parallel_capacity: 10,
            price_deploy: 2.0,
            price_keep: 1.0,
            price_parallel: 0.5,
        }
    }

    fn fixture() -> (ConstellationGraph, AppGraph) {
        let graph = ConstellationSpec {
            planes: 2,
            per_plane: 3,
            altitude_km: 550.0,
            inclination_deg: 86.4,
            angular_velocity_deg_per_ms: None,
            capacities: vec![4.0],
            node_capacities: None,
            compute_speed: 50.0,
            node_compute_speed: None,
            link_rate: 500.0,
            link_overrides: vec![],
        }
        .build()
        .unwrap();
        let app = AppGraph::new(
            vec![
                ms("a", Kind::Light, 100.0, 1000.0),
                ms("b", Kind::Light, 200.0, 0.0),
                ms("c", Kind::Core, 50.0, 10.0),
            ],
            vec![(0, 1), (1, 2)],
            vec![Chain { name: "main".into(), members: vec![0, 1, 2] }],
        )
        .unwrap();
        (graph, app)
    }

    #[test]
    fn elementary_latencies() {
        let (graph, app) = fixture();
        let model = LatencyModel::new(&graph, &app);
        assert_eq!(model.processing_latency(0, 3).unwrap(), 2.0);
        assert_eq!(model.transmission_latency(0, 0, 1).unwrap(), 2.0);
        assert_eq!(model.transmission_latency(1, 0, 1).unwrap(), 0.0);
        assert_eq!(model.transmission_latency(0, 2, 2).unwrap(), 0.0);
        assert_eq!(model.propagation_latency(false, 2, 2, 5.0).unwrap(), 0.0);
        assert_eq!(model.propagation_latency(true, 0, 4, 5.0).unwrap(), 0.0);
        let d = graph.distance(0, 1, 5.0).unwrap();
        let got = model.propagation_latency(false, 0, 1, 5.0).unwrap();
        assert!((got - d / SPEED_OF_LIGHT_KM_PER_MS).abs() < 1e-12);
    }

    #[test]
    fn light_speed_division() {
        // 3000 km at c.
        assert!((3000.0 / SPEED_OF_LIGHT_KM_PER_MS - 10.006_922_855_944_56).abs() < 1e-9);
    }

    #[test]
    fn single_member_chain_is_processing_only() {
        let (graph, app) = fixture();
        let model = LatencyModel::new(&graph, &app);
        let chain = Chain { name: "solo".into(), members: vec![2] };
        let placement = vec![None, None, Some(4)];
        assert_eq!(model.chain_latency(&chain, &placement, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn co_located_chain_has_no_network_terms() {
        let (graph, app) = fixture();
        let model = LatencyModel::new(&graph, &app);
        let placement = vec![Some(1), Some(1), Some(1)];
        let got = model.chain_latency(&app.chains()[0], &placement, 0.0).unwrap();
        assert_eq!(got, 2.0 + 4.0 + 1.0);
        let missing = vec![Some(1), None, Some(1)];
        assert!(matches!(
            model.chain_latency(&app.chains()[0], &missing, 0.0),
            Err(Error::MissingPlacement(1))
        ));
    }

    #[test]
    fn hand_evaluated_costs() {
        let (_, app) = fixture();
        // One light row pair; y0 = 1, y1 = 3 for (m = a, s = 0).
        let light = vec![vec![vec![1, 0], vec![0, 0]], vec![vec![3, 0], vec![0, 0]]];
        assert_eq!(cost_light_deploy(&light, &app).unwrap(), 4.0);
        assert_eq!(cost_light_keep(&light, &app).unwrap(), 4.0);
        assert_eq!(cost_light_parallel(&light, &app).unwrap(), 2.0);
    }

    #[test]
    fn constant_and_zero_schedules() {
        let (_, app) = fixture();
        let zero = vec![vec![vec![0, 0], vec![0, 0]]; 3];
        assert_eq!(cost_light_deploy(&zero, &app).unwrap(), 0.0);
        assert_eq!(cost_light_keep(&zero, &app).unwrap(), 0.0);
        assert_eq!(cost_light_parallel(&zero, &app).unwrap(), 0.0);
        let constant = vec![vec![vec![2, 1], vec![0, 3]]; 4];
        assert_eq!(cost_light_deploy(&constant, &app).unwrap(), 0.0);
    }

    #[test]
    fn core_cost_charges_each_slot() {
        let (_, app) = fixture();
        let core = vec![vec![1, 1]];
        // 2 copies * (2 + 3 * 1).
        assert_eq!(cost_core(&core, &app, 3).unwrap(), 10.0);
        assert!(cost_core(&[vec![1, 1], vec![0, 0]], &app, 3).is_err());
    }
}
