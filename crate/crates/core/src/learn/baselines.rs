//! Threshold autoscaling heuristics sized from local request counts.

use crate::env::{core_usage, Platform, RESOURCE_EPS};
use crate::error::{Error, Result};
use crate::workload::RequestScenario;

/// Tracks per-satellite load while instances are added.
struct Packer<'a> {
    platform: &'a Platform,
    usage: Vec<Vec<f64>>,
    slot: Vec<Vec<u32>>,
}

impl<'a> Packer<'a> {
    fn new(platform: &'a Platform, core: &[Vec<u32>], slot: Vec<Vec<u32>>) -> Self {
        let mut usage = core_usage(&platform.graph, &platform.app, core);
        for (&m, row) in platform.app.light().iter().zip(&slot) {
            crate::env::add_load(&mut usage, &platform.app.microservice(m).demands, row);
        }
        Self { platform, usage, slot }
    }

    /// Additional instances of light row `row` that fit on `s`.
    fn room(&self, row: usize, s: usize) -> u32 {
        let app = &self.platform.app;
        let demands = &app.microservice(app.light()[row]).demands;
        let node = &self.platform.graph.nodes()[s];
        let alpha = self.platform.env.max_copies;
        let mut room = alpha.saturating_sub(self.slot[row][s]);
        for ((cap, used), d) in node.capacities.iter().zip(&self.usage[s]).zip(demands) {
            if *d > 0.0 {
                let fit = ((cap - used + RESOURCE_EPS) / d).floor().max(0.0);
                room = room.min(fit.min(f64::from(alpha)) as u32);
            }
        }
        room
    }

    fn add(&mut self, row: usize, s: usize, n: u32) {
        let app = &self.platform.app;
        let demands = &app.microservice(app.light()[row]).demands;
        for (u, d) in self.usage[s].iter_mut().zip(demands) {
            *u += f64::from(n) * d;
        }
        self.slot[row][s] += n;
    }

    /// Places `need[s]` more instances of `row` at each `s`, moving what does
    /// not fit to the nearest satellite with room (mesh metric, lowest id).
    fn place(&mut self, row: usize, need: &[u32]) -> Result<()> {
        let d = need.len();
        let mut excess = Vec::new();
        for (s, &n) in need.iter().enumerate() {
            let here = n.min(self.room(row, s));
            self.add(row, s, here);
            if n > here {
                excess.push((s, n - here));
            }
        }
        let graph = &self.platform.graph;
        for (origin, mut left) in excess {
            while left > 0 {
                let target = (0..d)
                    .filter(|&s| self.room(row, s) > 0)
                    .min_by(|&a, &b| {
                        graph
                            .grid_distance(origin, a)
                            .total_cmp(&graph.grid_distance(origin, b))
                            .then(a.cmp(&b))
                    })
                    .ok_or_else(|| {
                        Error::Infeasible(format!(
                            "no satellite can host another instance of microservice {}",
                            self.platform.app.light()[row]
                        ))
                    })?;
                let n = left.min(self.room(row, target));
                self.add(row, target, n);
                left -= n;
            }
        }
        if self.slot[row].iter().all(|&n| n == 0) {
            let s = (0..d).find(|&s| self.room(row, s) > 0).ok_or_else(|| {
                Error::Infeasible(format!(
                    "no satellite can host microservice {}",
                    self.platform.app.light()[row]
                ))
            })?;
            self.add(row, s, 1);
        }
        Ok(())
    }
}

/// Instances needed at each satellite for each light row.
fn local_need(platform: &Platform, requests: &[u32]) -> Vec<Vec<u32>> {
    let app = &platform.app;
    let z = app.microservice_requests(requests);
    app.light()
        .iter()
        .map(|&m| {
            let k = i64::from(app.microservice(m).parallel_capacity.max(1));
            z[m].iter().map(|&n| ((n + k - 1) / k) as u32).collect()
        })
        .collect()
}

fn hpa_slot(platform: &Platform, core: &[Vec<u32>], requests: &[u32]) -> Result<Vec<Vec<u32>>> {
    let d = platform.satellites();
    let need = local_need(platform, requests);
    let mut packer = Packer::new(platform, core, vec![vec![0; d]; platform.app.light().len()]);
    for (row, n) in need.iter().enumerate() {
        packer.place(row, n)?;
    }
    Ok(packer.slot)
}

/// One instance per `k_m` local requests at every satellite, per slot.
pub fn hpa_baseline(platform: &Platform, core: &[Vec<u32>], scenario: &RequestScenario) -> Result<Vec<Vec<Vec<u32>>>> {
    scenario.nominal.iter().map(|r| hpa_slot(platform, core, r)).collect()
}

/// Starts from the plain schedule and adds the instances needed to serve
/// every region at nominal plus `phi` requests.
pub fn robust_hpa_baseline(
    platform: &Platform,
    core: &[Vec<u32>],
    scenario: &RequestScenario,
    phi: u32,
) -> Result<Vec<Vec<Vec<u32>>>> {
    scenario
        .nominal
        .iter()
        .map(|r| {
            let base = hpa_slot(platform, core, r)?;
            let upper: Vec<u32> = r.iter().map(|&n| n + phi).collect();
            let need = local_need(platform, &upper);
            let plain = local_need(platform, r);
            let mut packer = Packer::new(platform, core, base);
            for (row, (up, low)) in need.iter().zip(&plain).enumerate() {
                let extra: Vec<u32> = up.iter().zip(low).map(|(a, b)| a - b).collect();
                packer.place(row, &extra)?;
            }
            Ok(packer.slot)
        })
        .collect()
}
