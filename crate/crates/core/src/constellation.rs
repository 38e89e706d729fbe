//! Walker-Star constellation geometry.
//!
//! Satellites sit on an `planes x per_plane` grid. Node `id` lives on plane
//! `id / per_plane` at slot `id % per_plane`. Each node has inter-satellite
//! links to its intra-plane and inter-plane neighbours with wrap-around on
//! both axes; duplicate links collapse on 2-wide axes.
//!
//! Positions follow circular-orbit propagation in degrees:
//!
//! ```text
//! mu     = omega1 * t + gamma
//! lat    = asin(sin i * sin mu)
//! lon    = Omega + atan2(cos i * sin mu, cos mu) - omega2 * t
//! D(u,v) = sqrt(2 r^2 [1 - cos lat_u cos lat_v cos(lon_u - lon_v) - sin lat_u sin lat_v])
//! ```

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Earth rotation rate in degrees per millisecond (one sidereal day).
pub const EARTH_ROTATION_DEG_PER_MS: f64 = 360.0 / 86_164_090.5;

/// Standard gravitational parameter of Earth, km^3 / s^2.
const EARTH_MU_KM3_S2: f64 = 398_600.441_8;

/// Circular-orbit angular velocity (degrees/ms) for a given altitude.
pub fn circular_angular_velocity(altitude_km: f64) -> f64 {
    let r = EARTH_RADIUS_KM + altitude_km;
    let period_s = 2.0 * std::f64::consts::PI * (r.powi(3) / EARTH_MU_KM3_S2).sqrt();
    360.0 / (period_s * 1000.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitalElements {
    /// Earth radius plus altitude, km.
    pub radius_km: f64,
    pub inclination_deg: f64,
    pub ascending_node_deg: f64,
    pub angular_velocity_deg_per_ms: f64,
    pub initial_phase_deg: f64,
}

impl OrbitalElements {
    pub fn new(
        radius_km: f64,
        inclination_deg: f64,
        ascending_node_deg: f64,
        angular_velocity_deg_per_ms: f64,
        initial_phase_deg: f64,
    ) -> Result<Self> {
        let elements = Self {
            radius_km,
            inclination_deg,
            ascending_node_deg,
            angular_velocity_deg_per_ms,
            initial_phase_deg,
        };
        elements.validate()?;
        Ok(elements)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius_km > EARTH_RADIUS_KM) {
            return Err(Error::InvalidConfig(format!(
                "orbit radius {} km must exceed the Earth radius",
                self.radius_km
            )));
        }
        if !(self.angular_velocity_deg_per_ms > 0.0) {
            return Err(Error::InvalidConfig(
                "angular velocity must be positive".into(),
            ));
        }
        if !(0.0..=180.0).contains(&self.inclination_deg) {
            return Err(Error::InvalidConfig(format!(
                "inclination {} outside [0, 180]",
                self.inclination_deg
            )));
        }
        Ok(())
    }

    /// Argument of latitude at time `t_ms`, degrees (unwrapped).
    pub fn argument_of_latitude(&self, t_ms: f64) -> f64 {
        self.angular_velocity_deg_per_ms * t_ms + self.initial_phase_deg
    }

    pub fn position(&self, t_ms: f64) -> GeoPosition {
        let mu = self.argument_of_latitude(t_ms).to_radians();
        let inc = self.inclination_deg.to_radians();
        let lat = (inc.sin() * mu.sin()).clamp(-1.0, 1.0).asin();
        let lon = self.ascending_node_deg
            + (inc.cos() * mu.sin()).atan2(mu.cos()).to_degrees()
            - EARTH_ROTATION_DEG_PER_MS * t_ms;
        GeoPosition {
            lat_deg: lat.to_degrees(),
            lon_deg: normalize_longitude(lon),
        }
    }
}

/// Wraps a longitude into (-180, 180].
pub fn normalize_longitude(lon_deg: f64) -> f64 {
    let mut lon = lon_deg % 360.0;
    if lon <= -180.0 {
        lon += 360.0;
    } else if lon > 180.0 {
        lon -= 360.0;
    }
    lon
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPosition {
    pub lat_deg: f64,
    pub lon_deg: f64,
}

/// Chord length between two points on a sphere of radius `radius_km`.
///
/// Evaluates `sqrt(2 r^2 [1 - cos a cos b cos dl - sin a sin b])` through the
/// equivalent half-angle form, which keeps full relative precision when the
/// two points are close.
pub fn chord_distance(radius_km: f64, a: GeoPosition, b: GeoPosition) -> f64 {
    let (la, lb) = (a.lat_deg.to_radians(), b.lat_deg.to_radians());
    let dlat = lb - la;
    let dlon = (b.lon_deg - a.lon_deg).to_radians();
    let half = (dlat / 2.0).sin().powi(2) + la.cos() * lb.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * radius_km * half.clamp(0.0, 1.0).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatelliteNode {
    pub id: usize,
    pub elements: OrbitalElements,
    /// Resource capacities, one entry per resource type.
    pub capacities: Vec<f64>,
    /// Computing speed, bits/ms.
    pub compute_speed: f64,
}

impl SatelliteNode {
    pub fn position(&self, t_ms: f64) -> GeoPosition {
        self.elements.position(t_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathMetrics {
    pub distance_km: f64,
    /// Bottleneck link rate along the path, bits/ms. Infinite for `src == dst`.
    pub rate_bits_per_ms: f64,
    pub hops: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkOverride {
    pub a: usize,
    pub b: usize,
    pub rate: f64,
}

fn default_capacities() -> Vec<f64> {
    vec![4.0, 4.0, 4.0, 200.0]
}

fn default_inclination() -> f64 {
    86.4
}

/// Constellation section of an experiment config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstellationSpec {
    pub planes: usize,
    pub per_plane: usize,
    pub altitude_km: f64,
    #[serde(default = "default_inclination")]
    pub inclination_deg: f64,
    /// Defaults to the circular-orbit rate for `altitude_km`.
    #[serde(default)]
    pub angular_velocity_deg_per_ms: Option<f64>,
    /// Per-node capacity used when `node_capacities` is absent.
    #[serde(default = "default_capacities")]
    pub capacities: Vec<f64>,
    #[serde(default)]
    pub node_capacities: Option<Vec<Vec<f64>>>,
    pub compute_speed: f64,
    #[serde(default)]
    pub node_compute_speed: Option<Vec<f64>>,
    pub link_rate: f64,
    #[serde(default)]
    pub link_overrides: Vec<LinkOverride>,
}

impl ConstellationSpec {
    pub fn build(&self) -> Result<ConstellationGraph> {
        let count = self.planes * self.per_plane;
        if count == 0 {
            return Err(Error::InvalidConfig("constellation has no satellites".into()));
        }
        let radius = EARTH_RADIUS_KM + self.altitude_km;
        let omega1 = self
            .angular_velocity_deg_per_ms
            .unwrap_or_else(|| circular_angular_velocity(self.altitude_km));
        if let Some(caps) = &self.node_capacities {
            if caps.len() != count {
                return Err(Error::InvalidConfig(format!(
                    "node_capacities has {} rows, expected {count}",
                    caps.len()
                )));
            }
        }
        if let Some(speeds) = &self.node_compute_speed {
            if speeds.len() != count {
                return Err(Error::InvalidConfig(format!(
                    "node_compute_speed has {} entries, expected {count}",
                    speeds.len()
                )));
            }
        }
        let mut nodes = Vec::with_capacity(count);
        for id in 0..count {
            let (plane, slot) = (id / self.per_plane, id % self.per_plane);
            let elements = OrbitalElements::new(
                radius,
                self.inclination_deg,
                plane as f64 * 180.0 / self.planes as f64,
                omega1,
                slot as f64 * 360.0 / self.per_plane as f64,
            )?;
            let capacities = match &self.node_capacities {
                Some(caps) => caps[id].clone(),
                None => self.capacities.clone(),
            };
            let compute_speed = match &self.node_compute_speed {
                Some(speeds) => speeds[id],
                None => self.compute_speed,
            };
            nodes.push(SatelliteNode {
                id,
                elements,
                capacities,
                compute_speed,
            });
        }
        let mut graph = ConstellationGraph::new(self.planes, self.per_plane, nodes, self.link_rate)?;
        for o in &self.link_overrides {
            graph.set_link_rate(o.a, o.b, o.rate)?;
        }
        Ok(graph)
    }
}

/// Immutable constellation: nodes, ISL topology, link rates and
/// precomputed shortest-hop routes.
#[derive(Debug, Clone)]
pub struct ConstellationGraph {
    planes: usize,
    per_plane: usize,
    nodes: Vec<SatelliteNode>,
    edges: BTreeSet<(usize, usize)>,
    link_rates: BTreeMap<(usize, usize), f64>,
    adjacency: Vec<Vec<usize>>,
    /// `routes[src * D + dst]` is the node sequence from src to dst.
    routes: Vec<Vec<usize>>,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl ConstellationGraph {
    pub fn new(
        planes: usize,
        per_plane: usize,
        nodes: Vec<SatelliteNode>,
        link_rate: f64,
    ) -> Result<Self> {
        let count = planes * per_plane;
        if nodes.len() != count || count == 0 {
            return Err(Error::InvalidConfig(format!(
                "expected {count} nodes for a {planes}x{per_plane} grid, got {}",
                nodes.len()
            )));
        }
        if !(link_rate > 0.0) {
            return Err(Error::InvalidConfig("link rate must be positive".into()));
        }
        let radius = nodes[0].elements.radius_km;
        for (idx, node) in nodes.iter().enumerate() {
            node.elements.validate()?;
            if node.id != idx {
                return Err(Error::InvalidConfig(format!(
                    "node at position {idx} carries id {}",
                    node.id
                )));
            }
            if node.elements.radius_km != radius {
                return Err(Error::InvalidConfig(
                    "all satellites must share one orbit radius".into(),
                ));
            }
            if node.capacities.iter().any(|c| !(*c >= 0.0)) {
                return Err(Error::InvalidConfig(format!(
                    "satellite {idx} has a negative capacity"
                )));
            }
            if node.capacities.len() != nodes[0].capacities.len() {
                return Err(Error::InvalidConfig(
                    "satellites disagree on the number of resource types".into(),
                ));
            }
            if !(node.compute_speed > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "satellite {idx} compute speed must be positive"
                )));
            }
        }

        let mut edges = BTreeSet::new();
        for id in 0..count {
            let (p, s) = (id / per_plane, id % per_plane);
            let intra = [
                p * per_plane + (s + 1) % per_plane,
                p * per_plane + (s + per_plane - 1) % per_plane,
            ];
            let inter = [
                ((p + 1) % planes) * per_plane + s,
                ((p + planes - 1) % planes) * per_plane + s,
            ];
            for n in intra.into_iter().chain(inter) {
                if n != id {
                    edges.insert(edge_key(id, n));
                }
            }
        }
        let link_rates = edges.iter().map(|&e| (e, link_rate)).collect();
        let mut adjacency = vec![Vec::new(); count];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let routes = all_pairs_routes(&adjacency);
        Ok(Self {
            planes,
            per_plane,
            nodes,
            edges,
            link_rates,
            adjacency,
            routes,
        })
    }

    pub fn planes(&self) -> usize {
        self.planes
    }

    pub fn per_plane(&self) -> usize {
        self.per_plane
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[SatelliteNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> Result<&SatelliteNode> {
        self.nodes.get(id).ok_or(Error::NodeOutOfRange {
            id,
            count: self.nodes.len(),
        })
    }

    pub fn resource_types(&self) -> usize {
        self.nodes[0].capacities.len()
    }

    pub fn radius_km(&self) -> f64 {
        self.nodes[0].elements.radius_km
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn neighbors(&self, id: usize) -> &[usize] {
        &self.adjacency[id]
    }

    pub fn link_rate(&self, a: usize, b: usize) -> Option<f64> {
        self.link_rates.get(&edge_key(a, b)).copied()
    }

    pub fn set_link_rate(&mut self, a: usize, b: usize, rate: f64) -> Result<()> {
        if !(rate > 0.0) {
            return Err(Error::InvalidConfig("link rate must be positive".into()));
        }
        match self.link_rates.get_mut(&edge_key(a, b)) {
            Some(r) => {
                *r = rate;
                Ok(())
            }
            None => Err(Error::InvalidConfig(format!("no ISL between {a} and {b}"))),
        }
    }

    pub fn position(&self, id: usize, t_ms: f64) -> Result<GeoPosition> {
        Ok(self.node(id)?.position(t_ms))
    }

    /// Straight-line distance between two satellites at `t_ms`, km.
    pub fn distance(&self, u: usize, v: usize, t_ms: f64) -> Result<f64> {
        let pu = self.position(u, t_ms)?;
        let pv = self.position(v, t_ms)?;
        if u == v {
            return Ok(0.0);
        }
        Ok(chord_distance(self.radius_km(), pu, pv))
    }

    /// `(plane, slot)` of a node in the mesh.
    pub fn grid_coord(&self, id: usize) -> Result<(usize, usize)> {
        self.node(id)?;
        Ok((id / self.per_plane, id % self.per_plane))
    }

    pub fn node_at(&self, plane: usize, slot: usize) -> Result<usize> {
        if plane >= self.planes || slot >= self.per_plane {
            return Err(Error::NodeOutOfRange {
                id: plane * self.per_plane + slot,
                count: self.len(),
            });
        }
        Ok(plane * self.per_plane + slot)
    }

    /// Euclidean distance between mesh coordinates (no wrap-around).
    pub fn grid_distance(&self, a: usize, b: usize) -> f64 {
        let (pa, sa) = (a / self.per_plane, a % self.per_plane);
        let (pb, sb) = (b / self.per_plane, b % self.per_plane);
        let dp = pa as f64 - pb as f64;
        let ds = sa as f64 - sb as f64;
        (dp * dp + ds * ds).sqrt()
    }

    /// Shortest-hop route, lexicographically smallest among ties.
    pub fn route(&self, src: usize, dst: usize) -> Result<&[usize]> {
        self.node(src)?;
        self.node(dst)?;
        Ok(&self.routes[src * self.len() + dst])
    }

    pub fn path_metrics(&self, src: usize, dst: usize, t_ms: f64) -> Result<PathMetrics> {
        let route = self.route(src, dst)?;
        let mut metrics = PathMetrics {
            distance_km: 0.0,
            rate_bits_per_ms: f64::INFINITY,
            hops: route.len() - 1,
        };
        for hop in route.windows(2) {
            metrics.distance_km += self.distance(hop[0], hop[1], t_ms)?;
            let rate = self
                .link_rate(hop[0], hop[1])
                .expect("routes only traverse ISL edges");
            metrics.rate_bits_per_ms = metrics.rate_bits_per_ms.min(rate);
        }
        Ok(metrics)
    }
}

fn bfs_depths(adjacency: &[Vec<usize>], root: usize) -> Vec<usize> {
    let mut depth = vec![usize::MAX; adjacency.len()];
    depth[root] = 0;
    let mut queue = VecDeque::from([root]);
    while let Some(n) = queue.pop_front() {
        for &m in &adjacency[n] {
            if depth[m] == usize::MAX {
                depth[m] = depth[n] + 1;
                queue.push_back(m);
            }
        }
    }
    depth
}

fn all_pairs_routes(adjacency: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let count = adjacency.len();
    let depths: Vec<Vec<usize>> = (0..count).map(|d| bfs_depths(adjacency, d)).collect();
    let mut routes = Vec::with_capacity(count * count);
    for src in 0..count {
        for dst in 0..count {
            let to_dst = &depths[dst];
            let mut route = vec![src];
            let mut cur = src;
            // Walk forward choosing the smallest neighbour that stays on a
            // shortest path; adjacency lists are sorted.
            while cur != dst && to_dst[cur] != usize::MAX {
                cur = *adjacency[cur]
                    .iter()
                    .find(|&&n| to_dst[n] + 1 == to_dst[cur])
                    .expect("BFS depth has a predecessor");
                route.push(cur);
            }
            routes.push(route);
        }
    }
    routes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(planes: usize, per_plane: usize) -> ConstellationSpec {
        ConstellationSpec {
            planes,
            per_plane,
            altitude_km: 550.0,
            inclination_deg: 86.4,
            angular_velocity_deg_per_ms: None,
            capacities: default_capacities(),
            node_capacities: None,
            compute_speed: 1.0e6,
            node_compute_speed: None,
            link_rate: 1.0e6,
            link_overrides: vec![],
        }
    }

    fn elements(inc: f64, node: f64, phase: f64) -> OrbitalElements {
        OrbitalElements::new(6921.0, inc, node, 6.0e-5, phase).unwrap()
    }

    #[test]
    fn polar_orbit_at_epoch_sits_on_the_node() {
        let p = elements(90.0, 0.0, 0.0).position(0.0);
        assert_eq!(p.lat_deg, 0.0);
        assert_eq!(p.lon_deg, 0.0);
    }

    #[test]
    fn quarter_phase_polar_orbit_is_at_the_pole() {
        let p = elements(90.0, 0.0, 90.0).position(0.0);
        assert!((p.lat_deg - 90.0).abs() < 1e-12);
    }

    #[test]
    fn antipodal_equatorial_points_are_a_diameter_apart() {
        let a = GeoPosition { lat_deg: 0.0, lon_deg: 0.0 };
        let b = GeoPosition { lat_deg: 0.0, lon_deg: 180.0 };
        assert!((chord_distance(7000.0, a, b) - 14000.0).abs() < 1e-9);
        assert_eq!(chord_distance(7000.0, a, a), 0.0);
    }

    #[test]
    fn half_angle_form_matches_the_direct_expression() {
        let r = 6921.0;
        let samples: [((f64, f64), (f64, f64)); 2] = [((10.0, 20.0), (-35.0, 140.0)), ((80.0, -170.0), (-5.0, 3.0))];
        for (a, b) in samples {
            let pa = GeoPosition { lat_deg: a.0, lon_deg: a.1 };
            let pb = GeoPosition { lat_deg: b.0, lon_deg: b.1 };
            let (la, lb) = (a.0.to_radians(), b.0.to_radians());
            let dl = (a.1 - b.1).to_radians();
            let direct =
                (2.0 * r * r * (1.0 - la.cos() * lb.cos() * dl.cos() - la.sin() * lb.sin())).sqrt();
            let got = chord_distance(r, pa, pb);
            assert!((got - direct).abs() / direct < 1e-12);
        }
    }

    #[test]
    fn longitude_normalization() {
        assert_eq!(normalize_longitude(180.0), 180.0);
        assert_eq!(normalize_longitude(-180.0), 180.0);
        assert_eq!(normalize_longitude(190.0), -170.0);
        assert_eq!(normalize_longitude(-540.0), 180.0);
    }

    #[test]
    fn grid_coordinates() {
        let g = spec(2, 3).build().unwrap();
        assert_eq!(g.grid_coord(0).unwrap(), (0, 0));
        assert_eq!(g.grid_coord(5).unwrap(), (1, 2));
        for id in 0..g.len() {
            let (p, s) = g.grid_coord(id).unwrap();
            assert_eq!(g.node_at(p, s).unwrap(), id);
        }
        assert!(matches!(g.grid_coord(6), Err(Error::NodeOutOfRange { .. })));
    }

    #[test]
    fn every_node_has_four_links_on_large_grids() {
        let g = spec(4, 5).build().unwrap();
        for id in 0..g.len() {
            assert_eq!(g.neighbors(id).len(), 4);
        }
        assert_eq!(g.edges().count(), 2 * g.len());
    }

    #[test]
    fn narrow_grids_collapse_duplicate_links() {
        let g = spec(2, 3).build().unwrap();
        for id in 0..g.len() {
            assert_eq!(g.neighbors(id).len(), 3);
        }
        let g = spec(2, 2).build().unwrap();
        for id in 0..g.len() {
            assert_eq!(g.neighbors(id).len(), 2);
        }
    }

    #[test]
    fn path_metrics_single_hop_and_self() {
        let g = spec(3, 3).build().unwrap();
        let same = g.path_metrics(4, 4, 10.0).unwrap();
        assert_eq!(same.distance_km, 0.0);
        assert_eq!(same.hops, 0);
        assert!(same.rate_bits_per_ms.is_infinite());

        let hop = g.path_metrics(0, 1, 10.0).unwrap();
        assert_eq!(hop.hops, 1);
        assert_eq!(hop.distance_km, g.distance(0, 1, 10.0).unwrap());
        assert_eq!(hop.rate_bits_per_ms, 1.0e6);
    }

    #[test]
    fn link_override_changes_bottleneck() {
        let mut s = spec(3, 3);
        s.link_overrides.push(LinkOverride { a: 1, b: 0, rate: 10.0 });
        let g = s.build().unwrap();
        assert_eq!(g.link_rate(0, 1), Some(10.0));
        assert_eq!(g.path_metrics(0, 1, 0.0).unwrap().rate_bits_per_ms, 10.0);
        let mut bad = spec(3, 3);
        bad.link_overrides.push(LinkOverride { a: 0, b: 4, rate: 1.0 });
        assert!(bad.build().is_err());
    }

    #[test]
    fn mixed_radii_are_rejected() {
        let g = spec(2, 2).build().unwrap();
        let mut nodes = g.nodes().to_vec();
        nodes[3].elements.radius_km += 10.0;
        assert!(ConstellationGraph::new(2, 2, nodes, 1.0).is_err());
    }

    #[test]
    fn elements_validation() {
        assert!(OrbitalElements::new(6000.0, 50.0, 0.0, 1e-5, 0.0).is_err());
        assert!(OrbitalElements::new(7000.0, 190.0, 0.0, 1e-5, 0.0).is_err());
        assert!(OrbitalElements::new(7000.0, 50.0, 0.0, 0.0, 0.0).is_err());
    }
}
