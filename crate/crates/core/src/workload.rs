//! Application model and request scenarios.
//!
//! A request is one raw image entering a task chain. Per-region request counts
//! (row 0 of a request matrix) are split across chains round-robin, and each
//! request touches every microservice of its chain once, so per-microservice
//! rows are derived from row 0.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Light,
    Core,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Microservice {
    pub name: String,
    pub kind: Kind,
    /// Resource demand per deployed instance, one entry per resource type.
    pub demands: Vec<f64>,
    /// Computing amount, bits.
    pub compute_bits: f64,
    /// Result size, bits.
    pub output_bits: f64,
    /// Requests one instance serves per slot.
    pub parallel_capacity: u32,
    pub price_deploy: f64,
    pub price_keep: f64,
    pub price_parallel: f64,
}

impl Microservice {
    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("microservice {}: {what}", self.name)));
        if !(self.compute_bits > 0.0) {
            return bad("compute amount must be positive");
        }
        if !(self.output_bits >= 0.0) {
            return bad("output size must be non-negative");
        }
        if self.parallel_capacity < 1 {
            return bad("parallel capacity must be at least 1");
        }
        if [self.price_deploy, self.price_keep, self.price_parallel]
            .iter()
            .any(|p| !(*p >= 0.0))
        {
            return bad("prices must be non-negative");
        }
        if self.demands.iter().any(|d| !(*d >= 0.0)) {
            return bad("resource demands must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Chain {
    pub name: String,
    /// Microservice ids in topological order.
    pub members: Vec<usize>,
}

/// Serialized form of an application; validated into an [`AppGraph`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppSpec {
    pub microservices: Vec<Microservice>,
    pub edges: Vec<(usize, usize)>,
    pub chains: Vec<Chain>,
}

impl AppSpec {
    pub fn build(&self) -> Result<AppGraph> {
        AppGraph::new(self.microservices.clone(), self.edges.clone(), self.chains.clone())
    }
}

#[derive(Debug, Clone)]
pub struct AppGraph {
    microservices: Vec<Microservice>,
    edges: BTreeSet<(usize, usize)>,
    chains: Vec<Chain>,
    light: Vec<usize>,
    core: Vec<usize>,
    /// Light-row or core-row index of each microservice.
    row: Vec<usize>,
}

impl AppGraph {
    pub fn new(microservices: Vec<Microservice>, edges: Vec<(usize, usize)>, chains: Vec<Chain>) -> Result<Self> {
        let count = microservices.len();
        if count == 0 {
            return Err(Error::InvalidConfig("application has no microservices".into()));
        }
        let resource_types = microservices[0].demands.len();
        for m in &microservices {
            m.validate()?;
            if m.demands.len() != resource_types {
                return Err(Error::InvalidConfig(
                    "microservices disagree on the number of resource types".into(),
                ));
            }
        }
        let mut edge_set = BTreeSet::new();
        for &(a, b) in &edges {
            if a >= count || b >= count || a == b {
                return Err(Error::InvalidConfig(format!("invalid data-flow edge ({a}, {b})")));
            }
            edge_set.insert((a, b));
        }
        if has_cycle(count, &edge_set) {
            return Err(Error::InvalidConfig("data-flow graph has a cycle".into()));
        }
        if chains.is_empty() {
            return Err(Error::InvalidConfig("application defines no chains".into()));
        }
        for chain in &chains {
            if chain.members.is_empty() {
                return Err(Error::InvalidConfig(format!("chain {} is empty", chain.name)));
            }
            let mut seen = BTreeSet::new();
            for (pos, &m) in chain.members.iter().enumerate() {
                if m >= count || !seen.insert(m) {
                    return Err(Error::InvalidConfig(format!(
                        "chain {} has an invalid or repeated member {m}",
                        chain.name
                    )));
                }
                let earlier = &chain.members[..pos];
                // Members must be topologically ordered and joined by data-flow edges.
                if chain.members[pos + 1..].iter().any(|&later| edge_set.contains(&(later, m))) {
                    return Err(Error::InvalidConfig(format!(
                        "chain {} is not in topological order",
                        chain.name
                    )));
                }
                if pos > 0 && !earlier.iter().any(|&u| edge_set.contains(&(u, m))) {
                    // A second source is allowed only if something downstream joins it.
                    let joins = chain.members[pos + 1..].iter().any(|&w| edge_set.contains(&(m, w)));
                    if !joins {
                        return Err(Error::InvalidConfig(format!(
                            "chain {} member {m} is not connected by a data-flow edge",
                            chain.name
                        )));
                    }
                }
            }
        }
        let light: Vec<usize> = (0..count).filter(|&m| microservices[m].kind == Kind::Light).collect();
        let core: Vec<usize> = (0..count).filter(|&m| microservices[m].kind == Kind::Core).collect();
        let mut row = vec![0; count];
        for (i, &m) in light.iter().enumerate() {
            row[m] = i;
        }
        for (i, &m) in core.iter().enumerate() {
            row[m] = i;
        }
        Ok(Self {
            microservices,
            edges: edge_set,
            chains,
            light,
            core,
            row,
        })
    }

    pub fn len(&self) -> usize {
        self.microservices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.microservices.is_empty()
    }

    pub fn microservice(&self, id: usize) -> &Microservice {
        &self.microservices[id]
    }

    pub fn microservices(&self) -> &[Microservice] {
        &self.microservices
    }

    pub fn chains(&self) -> &[Chain] {
        &self.chains
    }

    /// Light microservice ids, in row order of `Y`.
    pub fn light(&self) -> &[usize] {
        &self.light
    }

    /// Core microservice ids, in row order of `X`.
    pub fn core(&self) -> &[usize] {
        &self.core
    }

    /// Row of `id` inside the light or core deployment matrix.
    pub fn row_of(&self, id: usize) -> usize {
        self.row[id]
    }

    pub fn resource_types(&self) -> usize {
        self.microservices[0].demands.len()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    /// Predecessors of `member` restricted to the chain.
    pub fn chain_predecessors(&self, chain: &Chain, member: usize) -> Vec<usize> {
        chain
            .members
            .iter()
            .copied()
            .take_while(|&m| m != member)
            .filter(|&m| self.has_edge(m, member))
            .collect()
    }

    /// Light members of a chain, in chain order.
    pub fn chain_light(&self, chain: &Chain) -> Vec<usize> {
        chain
            .members
            .iter()
            .copied()
            .filter(|&m| self.microservices[m].kind == Kind::Light)
            .collect()
    }

    /// Splits one region's request count across chains round-robin.
    pub fn chain_split(&self, requests: u32) -> Vec<u32> {
        let c = self.chains.len() as u32;
        (0..c).map(|k| requests / c + u32::from(k < requests % c)).collect()
    }

    /// Per-microservice request rows `Z` (M x D) from per-region counts.
    pub fn microservice_requests(&self, region_requests: &[u32]) -> Vec<Vec<i64>> {
        let mut rows = vec![vec![0i64; region_requests.len()]; self.len()];
        for (s, &n) in region_requests.iter().enumerate() {
            for (chain, share) in self.chains.iter().zip(self.chain_split(n)) {
                for &m in &chain.members {
                    rows[m][s] += i64::from(share);
                }
            }
        }
        rows
    }
}

fn has_cycle(count: usize, edges: &BTreeSet<(usize, usize)>) -> bool {
    let mut indegree = vec![0usize; count];
    for &(_, b) in edges {
        indegree[b] += 1;
    }
    let mut stack: Vec<usize> = (0..count).filter(|&m| indegree[m] == 0).collect();
    let mut visited = 0;
    while let Some(m) = stack.pop() {
        visited += 1;
        for &(a, b) in edges.range((m, 0)..=(m, usize::MAX)) {
            debug_assert_eq!(a, m);
            indegree[b] -= 1;
            if indegree[b] == 0 {
                stack.push(b);
            }
        }
    }
    visited != count
}

/// Width of the box uncertainty set, in requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UncertaintyBox {
    pub width: u32,
}

/// Nominal per-region request counts for each slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestScenario {
    /// `nominal[t][s]`: nominal requests originating in region `s` at slot `t`.
    pub nominal: Vec<Vec<u32>>,
}

impl RequestScenario {
    pub fn new(nominal: Vec<Vec<u32>>) -> Result<Self> {
        if nominal.is_empty() {
            return Err(Error::InvalidConfig("scenario has no slots".into()));
        }
        let regions = nominal[0].len();
        if regions == 0 || nominal.iter().any(|row| row.len() != regions) {
            return Err(Error::ShapeMismatch("scenario slots disagree on region count".into()));
        }
        Ok(Self { nominal })
    }

    /// Spreads per-slot totals across regions, remainder to the lowest ids.
    pub fn from_totals(totals: &[u32], regions: usize) -> Result<Self> {
        if regions == 0 {
            return Err(Error::InvalidConfig("no regions".into()));
        }
        Self::new(totals.iter().map(|&total| spread_total(total, regions)).collect())
    }

    /// Uniform integer requests in `[0, max]` per region and slot.
    pub fn random<R: Rng + ?Sized>(slots: usize, regions: usize, max: u32, rng: &mut R) -> Result<Self> {
        Self::new(
            (0..slots)
                .map(|_| (0..regions).map(|_| rng.gen_range(0..=max)).collect())
                .collect(),
        )
    }

    pub fn slots(&self) -> usize {
        self.nominal.len()
    }

    pub fn regions(&self) -> usize {
        self.nominal[0].len()
    }

    pub fn total(&self, slot: usize) -> u32 {
        self.nominal[slot].iter().sum()
    }
}

pub fn spread_total(total: u32, regions: usize) -> Vec<u32> {
    let n = regions as u32;
    (0..n).map(|s| total / n + u32::from(s < total % n)).collect()
}

fn default_slot_duration() -> f64 {
    60_000.0
}

/// Scenario section of a config, or a standalone scenario file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub name: Option<String>,
    /// Box width.
    pub phi: u32,
    #[serde(default = "default_slot_duration")]
    pub slot_duration_ms: f64,
    /// Per-slot totals, spread across regions.
    #[serde(default)]
    pub totals: Option<Vec<u32>>,
    /// Explicit per-slot, per-region nominal requests.
    #[serde(default)]
    pub nominal: Option<Vec<Vec<u32>>>,
    /// Replaces the application's chains when present.
    #[serde(default)]
    pub chains: Option<Vec<Chain>>,
}

impl ScenarioSpec {
    pub fn build(&self, regions: usize) -> Result<RequestScenario> {
        match (&self.totals, &self.nominal) {
            (Some(totals), None) => RequestScenario::from_totals(totals, regions),
            (None, Some(nominal)) => {
                let scenario = RequestScenario::new(nominal.clone())?;
                if scenario.regions() != regions {
                    return Err(Error::ShapeMismatch(format!(
                        "scenario has {} regions, constellation has {regions}",
                        scenario.regions()
                    )));
                }
                Ok(scenario)
            }
            _ => Err(Error::InvalidConfig(
                "scenario needs exactly one of `totals` or `nominal`".into(),
            )),
        }
    }
}

fn check_same_shape(a: &[Vec<i64>], b: &[Vec<i64>]) -> Result<()> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len()) {
        return Err(Error::ShapeMismatch("request matrices differ in shape".into()));
    }
    Ok(())
}

/// Whether `candidate` lies in the box of width `phi` around `nominal`.
pub fn box_contains(nominal: &[Vec<i64>], candidate: &[Vec<i64>], phi: u32) -> Result<bool> {
    check_same_shape(nominal, candidate)?;
    let phi = i64::from(phi);
    Ok(nominal.iter().flatten().zip(candidate.iter().flatten()).all(|(&n, &c)| c >= 0 && (c - n).abs() <= phi))
}

/// Minimum over the box of `sum_s (y_s k - z_s)`, attained at the upper vertex.
pub fn worst_case_parallel_slack(y_row: &[u32], parallel_capacity: u32, nominal_row: &[i64], phi: u32) -> Result<i64> {
    if y_row.len() != nominal_row.len() {
        return Err(Error::ShapeMismatch("deployment row and request row differ in length".into()));
    }
    let capacity: i64 = y_row.iter().map(|&y| i64::from(y) * i64::from(parallel_capacity)).sum();
    let demand: i64 = nominal_row.iter().map(|&z| z + i64::from(phi)).sum();
    Ok(capacity - demand)
}

/// Per-entry admissible range `[max(0, z - phi), z + phi]`.
fn entry_ranges(nominal: &[Vec<i64>], phi: u32) -> Vec<(i64, i64)> {
    let phi = i64::from(phi);
    nominal.iter().flatten().map(|&z| ((z - phi).max(0), z + phi)).collect()
}

pub fn box_cardinality(nominal: &[Vec<i64>], phi: u32) -> u128 {
    entry_ranges(nominal, phi)
        .iter()
        .fold(1u128, |acc, (lo, hi)| acc.saturating_mul((hi - lo + 1).max(0) as u128))
}

/// Every integer matrix in the box, in lexicographic order of flattened entries.
pub fn enumerate_box_vertices(nominal: &[Vec<i64>], phi: u32, cap: u128) -> Result<Vec<Vec<Vec<i64>>>> {
    let size = box_cardinality(nominal, phi);
    if size > cap {
        return Err(Error::EnumerationCap { size, cap });
    }
    let ranges = entry_ranges(nominal, phi);
    let widths: Vec<usize> = nominal.iter().map(Vec::len).collect();
    let mut current: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    let mut out = Vec::with_capacity(size as usize);
    loop {
        let mut it = current.iter().copied();
        out.push(widths.iter().map(|&w| it.by_ref().take(w).collect()).collect());
        // Odometer increment, last entry fastest.
        let mut pos = current.len();
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            if current[pos] < ranges[pos].1 {
                current[pos] += 1;
                break;
            }
            current[pos] = ranges[pos].0;
        }
    }
}
