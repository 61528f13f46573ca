//! The +Grid ISL topology: satellites, ground stations, and one core node,
//! with delay-weighted shortest paths used to cost signaling messages.
//!
//! Each satellite keeps two intra-plane links (preceding/succeeding index)
//! and two inter-plane links (same index in the adjacent planes). Ground
//! stations link to every satellite currently above their minimum elevation;
//! the core node hangs behind its home ground station(s) with a fixed
//! terrestrial lag.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{self, GeodeticPoint, Vec3, SPEED_OF_LIGHT_KM_S};
use crate::orbit::{SatId, SatelliteState};

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("node {0} is not part of the graph")]
    UnknownNode(String),
    #[error("no path between {src} and {dst}")]
    NoPath { src: String, dst: String },
    #[error("no reachable {0} anchor")]
    NoAnchor(&'static str),
    #[error("malformed ground station file: {0}")]
    GsParse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ground-station identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GsId(pub String);

impl fmt::Display for GsId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundStation {
    pub gs_id: GsId,
    pub location: GeodeticPoint,
    pub attached_to_core: bool,
}

#[derive(Debug, Deserialize)]
struct GsRow {
    gs_id: String,
    lat_deg: f64,
    lon_deg: f64,
    attached_to_core: bool,
}

/// Load a ground-station list from CSV with columns
/// `gs_id, lat_deg, lon_deg, attached_to_core`.
pub fn load_ground_stations<R: Read>(reader: R) -> Result<Vec<GroundStation>, TopologyError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<GsRow>() {
        let row = row.map_err(|e| TopologyError::GsParse(e.to_string()))?;
        out.push(GroundStation {
            gs_id: GsId(row.gs_id),
            location: GeodeticPoint::ground(row.lat_deg, row.lon_deg),
            attached_to_core: row.attached_to_core,
        });
    }
    Ok(out)
}

pub fn load_ground_stations_path<P: AsRef<Path>>(
    path: P,
) -> Result<Vec<GroundStation>, TopologyError> {
    load_ground_stations(std::fs::File::open(path)?)
}

/// Graph node. The derived ordering (satellites, then ground stations, then
/// the core) is the tie-break order for equal-delay paths.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeId {
    Sat(SatId),
    Gs(GsId),
    Core,
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Sat(s) => write!(f, "{s}"),
            NodeId::Gs(g) => write!(f, "gs:{g}"),
            NodeId::Core => write!(f, "core"),
        }
    }
}

/// Anchor kind for [`IslGraph::core_attachment_path`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttachmentScheme {
    /// The fixed core node behind its home ground station.
    Ntn,
    /// Nearest reachable ground station.
    NtnGs,
    /// Nearest core-hosting satellite.
    NtnSmn,
}

#[derive(Debug, Clone)]
pub struct TopologyParams {
    /// Minimum elevation for ground-station uplinks, degrees.
    pub gs_min_elevation_deg: f64,
    /// Terrestrial lag between a core-attached ground station and the core
    /// node, ms.
    pub gs_core_lag_ms: f64,
    /// Disable the inter-plane wrap edges between the last and first plane.
    pub seam_open: bool,
    /// Per-plane in-plane indices of satellites that host a core instance
    /// (NTN-SMN anchors).
    pub smn_host_indices: Vec<u32>,
}

impl Default for TopologyParams {
    fn default() -> Self {
        Self {
            gs_min_elevation_deg: 40.0,
            gs_core_lag_ms: 2.0,
            seam_open: false,
            smn_host_indices: vec![0],
        }
    }
}

/// One-way propagation delay between two points, ms.
pub fn propagation_delay_ms(a: Vec3, b: Vec3) -> f64 {
    geo::distance_km(a, b) / SPEED_OF_LIGHT_KM_S * 1000.0
}

#[derive(Debug, Clone)]
pub struct PathResult {
    pub nodes: Vec<NodeId>,
    pub total_ms: f64,
}

impl PathResult {
    pub fn hops(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }
}

/// Delay-weighted snapshot of the network at one epoch.
#[derive(Debug, Clone)]
pub struct IslGraph {
    node_ids: Vec<NodeId>,
    index: BTreeMap<NodeId, usize>,
    adj: Vec<Vec<(usize, f64)>>,
    positions: Vec<Vec3>,
    core_host_sats: Vec<usize>,
    gs_nodes: Vec<usize>,
    core_node: Option<usize>,
    epoch_t: f64,
}

/// Build the epoch graph from propagated satellite states.
///
/// `shape` is (num_planes, sats_per_plane) and must match the state set.
/// Intra-plane edges wrap modulo sats_per_plane; inter-plane edges wrap
/// modulo num_planes unless `params.seam_open`. Degenerate shapes (a single
/// plane, or one satellite per plane) get only the edges that exist.
pub fn build_isl_grid(
    states: &[SatelliteState],
    shape: (u32, u32),
    ground_stations: &[GroundStation],
    params: &TopologyParams,
    t: f64,
) -> IslGraph {
    let (planes, spp) = shape;
    let n_sats = states.len();
    debug_assert_eq!(n_sats as u32, planes * spp);

    let mut node_ids: Vec<NodeId> = states.iter().map(|s| NodeId::Sat(s.sat_id)).collect();
    let mut positions: Vec<Vec3> = states.iter().map(|s| s.position_ecef_km).collect();

    let mut gs_sorted: Vec<&GroundStation> = ground_stations.iter().collect();
    gs_sorted.sort_by(|a, b| a.gs_id.cmp(&b.gs_id));
    let mut gs_nodes = Vec::with_capacity(gs_sorted.len());
    for gs in &gs_sorted {
        gs_nodes.push(node_ids.len());
        node_ids.push(NodeId::Gs(gs.gs_id.clone()));
        positions.push(gs.location.to_ecef_km());
    }
    let has_core = gs_sorted.iter().any(|g| g.attached_to_core);
    let core_node = if has_core {
        let idx = node_ids.len();
        node_ids.push(NodeId::Core);
        // The core sits at its first home ground station.
        let home = gs_sorted.iter().position(|g| g.attached_to_core).unwrap();
        positions.push(positions[gs_nodes[home]]);
        Some(idx)
    } else {
        None
    };

    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); node_ids.len()];
    let add_edge = |adj: &mut Vec<Vec<(usize, f64)>>, a: usize, b: usize, w: f64| {
        adj[a].push((b, w));
        adj[b].push((a, w));
    };

    let sat_at = |p: u32, k: u32| (p * spp + k) as usize;
    for p in 0..planes {
        for k in 0..spp {
            let a = sat_at(p, k);
            // Intra-plane link to the succeeding satellite.
            if spp > 1 {
                let k2 = (k + 1) % spp;
                // Avoid a duplicate edge on the two-satellite ring.
                if !(spp == 2 && k == 1) {
                    let b = sat_at(p, k2);
                    add_edge(&mut adj, a, b, propagation_delay_ms(positions[a], positions[b]));
                }
            }
            // Inter-plane link to the next plane, same index.
            if planes > 1 {
                let wrap = p + 1 == planes;
                if !wrap || (!params.seam_open && planes > 2) {
                    let p2 = (p + 1) % planes;
                    let b = sat_at(p2, k);
                    add_edge(&mut adj, a, b, propagation_delay_ms(positions[a], positions[b]));
                }
            }
        }
    }

    for (gi, gs) in gs_sorted.iter().enumerate() {
        let g = gs_nodes[gi];
        for (si, s) in states.iter().enumerate() {
            if geo::elevation_deg(&gs.location, s.position_ecef_km)
                >= params.gs_min_elevation_deg
            {
                add_edge(&mut adj, g, si, propagation_delay_ms(positions[g], positions[si]));
            }
        }
        if gs.attached_to_core {
            if let Some(core) = core_node {
                add_edge(&mut adj, g, core, params.gs_core_lag_ms);
            }
        }
    }

    let core_host_sats = states
        .iter()
        .enumerate()
        .filter(|(_, s)| params.smn_host_indices.contains(&s.index_in_plane))
        .map(|(i, _)| i)
        .collect();

    let index = node_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i))
        .collect();

    IslGraph {
        node_ids,
        index,
        adj,
        positions,
        core_host_sats,
        gs_nodes,
        core_node,
        epoch_t: t,
    }
}

impl IslGraph {
    /// Build a graph from an explicit node/edge list (tests and trace-driven
    /// topologies). Node order defines the tie-break order.
    pub fn from_edges(
        nodes: Vec<(NodeId, Vec3)>,
        edges: &[(usize, usize, f64)],
    ) -> IslGraph {
        let node_ids: Vec<NodeId> = nodes.iter().map(|(id, _)| id.clone()).collect();
        let positions: Vec<Vec3> = nodes.iter().map(|(_, p)| *p).collect();
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); node_ids.len()];
        for &(a, b, w) in edges {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        let gs_nodes = node_ids
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n, NodeId::Gs(_)))
            .map(|(i, _)| i)
            .collect();
        let core_node = node_ids.iter().position(|n| matches!(n, NodeId::Core));
        let index = node_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        IslGraph {
            node_ids,
            index,
            adj,
            positions,
            core_host_sats: Vec::new(),
            gs_nodes,
            core_node,
            epoch_t: 0.0,
        }
    }

    pub fn epoch_t(&self) -> f64 {
        self.epoch_t
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn degree(&self, node: &NodeId) -> Option<usize> {
        self.index.get(node).map(|&i| self.adj[i].len())
    }

    pub fn isl_edge_count(&self) -> usize {
        let mut n = 0;
        for (i, nbrs) in self.adj.iter().enumerate() {
            if !matches!(self.node_ids[i], NodeId::Sat(_)) {
                continue;
            }
            for &(j, _) in nbrs {
                if j > i && matches!(self.node_ids[j], NodeId::Sat(_)) {
                    n += 1;
                }
            }
        }
        n
    }

    pub fn position_of(&self, node: &NodeId) -> Option<Vec3> {
        self.index.get(node).map(|&i| self.positions[i])
    }

    pub fn contains(&self, node: &NodeId) -> bool {
        self.index.contains_key(node)
    }

    fn dijkstra(&self, from: usize, sats_only: bool) -> Vec<f64> {
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;

        let mut dist = vec![f64::INFINITY; self.adj.len()];
        dist[from] = 0.0;
        let mut heap: BinaryHeap<Reverse<(ordered::F64, usize)>> = BinaryHeap::new();
        heap.push(Reverse((ordered::F64(0.0), from)));
        while let Some(Reverse((ordered::F64(d), u))) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, w) in &self.adj[u] {
                if sats_only && !matches!(self.node_ids[v], NodeId::Sat(_)) {
                    continue;
                }
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Reverse((ordered::F64(nd), v)));
                }
            }
        }
        dist
    }

    /// Minimal-total-delay path from `src` to `dst`. Ties between equal-delay
    /// paths resolve to the lexicographically smallest node sequence.
    pub fn min_delay_path(&self, src: &NodeId, dst: &NodeId) -> Result<PathResult, TopologyError> {
        let s = *self
            .index
            .get(src)
            .ok_or_else(|| TopologyError::UnknownNode(src.to_string()))?;
        let d = *self
            .index
            .get(dst)
            .ok_or_else(|| TopologyError::UnknownNode(dst.to_string()))?;
        self.path_by_index(s, d, false)
    }

    /// Inter-gNB (Xn) path: the min-delay route that stays on the ISL mesh.
    /// Ground stations never relay RAN-to-RAN signaling.
    pub fn isl_path(&self, src: SatId, dst: SatId) -> Result<PathResult, TopologyError> {
        let s = *self
            .index
            .get(&NodeId::Sat(src))
            .ok_or_else(|| TopologyError::UnknownNode(NodeId::Sat(src).to_string()))?;
        let d = *self
            .index
            .get(&NodeId::Sat(dst))
            .ok_or_else(|| TopologyError::UnknownNode(NodeId::Sat(dst).to_string()))?;
        self.path_by_index(s, d, true)
    }

    fn path_by_index(
        &self,
        s: usize,
        d: usize,
        sats_only: bool,
    ) -> Result<PathResult, TopologyError> {
        if s == d {
            return Ok(PathResult {
                nodes: vec![self.node_ids[s].clone()],
                total_ms: 0.0,
            });
        }
        let dist_to_dst = self.dijkstra(d, sats_only);
        if !dist_to_dst[s].is_finite() {
            return Err(TopologyError::NoPath {
                src: self.node_ids[s].to_string(),
                dst: self.node_ids[d].to_string(),
            });
        }
        // Greedy forward walk: among neighbors that preserve the shortest
        // distance, take the smallest node index. Node indices are laid out
        // in NodeId order, so this yields the lexicographically smallest
        // shortest path.
        let mut nodes = vec![self.node_ids[s].clone()];
        let mut total = 0.0;
        let mut u = s;
        while u != d {
            let mut next: Option<(usize, f64)> = None;
            for &(v, w) in &self.adj[u] {
                if sats_only && v != d && !matches!(self.node_ids[v], NodeId::Sat(_)) {
                    continue;
                }
                if rel_eq(w + dist_to_dst[v], dist_to_dst[u]) {
                    match next {
                        Some((bv, _)) if v >= bv => {}
                        _ => next = Some((v, w)),
                    }
                }
            }
            let (v, w) = next.expect("finite distance implies a shortest-path successor");
            total += w;
            nodes.push(self.node_ids[v].clone());
            u = v;
        }
        Ok(PathResult { nodes, total_ms: total })
    }

    /// Path from a satellite to the anchor a given scheme talks to.
    pub fn core_attachment_path(
        &self,
        sat: SatId,
        scheme: AttachmentScheme,
    ) -> Result<PathResult, TopologyError> {
        let src_id = NodeId::Sat(sat);
        let s = *self
            .index
            .get(&src_id)
            .ok_or_else(|| TopologyError::UnknownNode(src_id.to_string()))?;
        match scheme {
            AttachmentScheme::Ntn => {
                let core = self.core_node.ok_or(TopologyError::NoAnchor("core"))?;
                self.path_by_index(s, core, false)
            }
            AttachmentScheme::NtnGs => {
                let d = self.nearest_of(s, &self.gs_nodes, false, "ground station")?;
                self.path_by_index(s, d, false)
            }
            AttachmentScheme::NtnSmn => {
                if self.core_host_sats.contains(&s) {
                    return Ok(PathResult {
                        nodes: vec![self.node_ids[s].clone()],
                        total_ms: 0.0,
                    });
                }
                // The space-borne core stays reachable over ISLs alone.
                let d =
                    self.nearest_of(s, &self.core_host_sats, true, "core-hosting satellite")?;
                self.path_by_index(s, d, true)
            }
        }
    }

    fn nearest_of(
        &self,
        from: usize,
        candidates: &[usize],
        sats_only: bool,
        kind: &'static str,
    ) -> Result<usize, TopologyError> {
        let dist = self.dijkstra(from, sats_only);
        let mut best: Option<(f64, usize)> = None;
        for &c in candidates {
            if !dist[c].is_finite() {
                continue;
            }
            match best {
                Some((bd, bc)) if dist[c] > bd || (rel_eq(dist[c], bd) && c >= bc) => {}
                _ => best = Some((dist[c], c)),
            }
        }
        best.map(|(_, c)| c).ok_or(TopologyError::NoAnchor(kind))
    }
}

fn rel_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

mod ordered {
    /// Total-ordered f64 for the Dijkstra heap (delays are finite, non-NaN).
    #[derive(PartialEq, PartialOrd)]
    pub struct F64(pub f64);
    impl Eq for F64 {}
    #[allow(clippy::derive_ord_xor_partial_ord)]
    impl Ord for F64 {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&other.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbit::{build_walker_constellation, ConstellationConfig};

    fn starlink_graph(t: f64, gs: &[GroundStation], params: &TopologyParams) -> IslGraph {
        let c = build_walker_constellation(&ConstellationConfig::starlink()).unwrap();
        let states = c.propagate_all(t).unwrap();
        build_isl_grid(&states, c.grid_shape(), gs, params, t)
    }

    #[test]
    fn grid_degrees_and_edge_count() {
        let g = starlink_graph(0.0, &[], &TopologyParams::default());
        for i in 0..1584u32 {
            assert_eq!(g.degree(&NodeId::Sat(SatId(i))), Some(4));
        }
        assert_eq!(g.isl_edge_count(), 2 * 1584);
    }

    #[test]
    fn single_plane_ring_degree_two() {
        let cfg = ConstellationConfig {
            name: "ring".into(),
            altitude_km: 550.0,
            inclination_deg: 53.0,
            num_planes: 1,
            sats_per_plane: 4,
            phasing_factor: 0,
            min_elevation_deg: 40.0,
            raan_spread_deg: 360.0,
        };
        let c = build_walker_constellation(&cfg).unwrap();
        let states = c.propagate_all(0.0).unwrap();
        let g = build_isl_grid(&states, c.grid_shape(), &[], &TopologyParams::default(), 0.0);
        for i in 0..4u32 {
            assert_eq!(g.degree(&NodeId::Sat(SatId(i))), Some(2));
        }
    }

    #[test]
    fn gs_without_visible_satellite_is_isolated() {
        // One satellite over the equator; a polar ground station sees nothing.
        let cfg = ConstellationConfig {
            name: "one".into(),
            altitude_km: 550.0,
            inclination_deg: 0.0,
            num_planes: 1,
            sats_per_plane: 1,
            phasing_factor: 0,
            min_elevation_deg: 40.0,
            raan_spread_deg: 360.0,
        };
        let c = build_walker_constellation(&cfg).unwrap();
        let states = c.propagate_all(0.0).unwrap();
        let gs = vec![GroundStation {
            gs_id: GsId("polar".into()),
            location: GeodeticPoint::ground(89.0, 0.0),
            attached_to_core: false,
        }];
        let g = build_isl_grid(&states, c.grid_shape(), &gs, &TopologyParams::default(), 0.0);
        assert_eq!(g.degree(&NodeId::Gs(GsId("polar".into()))), Some(0));
    }

    #[test]
    fn propagation_delay_reference_values() {
        assert!((propagation_delay_ms([0.0; 3], [299.792458, 0.0, 0.0]) - 1.0).abs() < 1e-12);
        assert_eq!(propagation_delay_ms([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]), 0.0);
        let d = propagation_delay_ms([0.0; 3], [9000.0, 0.0, 0.0]);
        assert!((d - 30.0207).abs() < 0.001);
    }

    #[test]
    fn path_trivial_cases() {
        let g = starlink_graph(0.0, &[], &TopologyParams::default());
        let p = g
            .min_delay_path(&NodeId::Sat(SatId(5)), &NodeId::Sat(SatId(5)))
            .unwrap();
        assert_eq!(p.nodes.len(), 1);
        assert_eq!(p.total_ms, 0.0);
        // Adjacent intra-plane satellites take the direct ISL.
        let p = g
            .min_delay_path(&NodeId::Sat(SatId(0)), &NodeId::Sat(SatId(1)))
            .unwrap();
        assert_eq!(p.nodes.len(), 2);
        let a = g.position_of(&NodeId::Sat(SatId(0))).unwrap();
        let b = g.position_of(&NodeId::Sat(SatId(1))).unwrap();
        assert!((p.total_ms - propagation_delay_ms(a, b)).abs() < 1e-12);
    }

    #[test]
    fn unreachable_destination_reports_no_path() {
        let nodes = vec![
            (NodeId::Sat(SatId(0)), [7000.0, 0.0, 0.0]),
            (NodeId::Sat(SatId(1)), [0.0, 7000.0, 0.0]),
        ];
        let g = IslGraph::from_edges(nodes, &[]);
        assert!(matches!(
            g.min_delay_path(&NodeId::Sat(SatId(0)), &NodeId::Sat(SatId(1))),
            Err(TopologyError::NoPath { .. })
        ));
    }

    #[test]
    fn seam_open_drops_wrap_edges() {
        let c = build_walker_constellation(&ConstellationConfig::starlink()).unwrap();
        let states = c.propagate_all(0.0).unwrap();
        let params = TopologyParams {
            seam_open: true,
            ..TopologyParams::default()
        };
        let g = build_isl_grid(&states, c.grid_shape(), &[], &params, 0.0);
        // Plane 0 / plane 71 satellites lose one inter-plane edge.
        assert_eq!(g.degree(&NodeId::Sat(SatId(0))), Some(3));
        assert_eq!(g.degree(&NodeId::Sat(SatId(71 * 22))), Some(3));
        assert_eq!(g.degree(&NodeId::Sat(SatId(22))), Some(4));
    }

    #[test]
    fn lexicographic_tie_break() {
        // Two equal-cost routes 0->1->3 and 0->2->3; the smaller middle node wins.
        let nodes = vec![
            (NodeId::Sat(SatId(0)), [0.0; 3]),
            (NodeId::Sat(SatId(1)), [0.0; 3]),
            (NodeId::Sat(SatId(2)), [0.0; 3]),
            (NodeId::Sat(SatId(3)), [0.0; 3]),
        ];
        let edges = [(0, 1, 1.0), (0, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)];
        let g = IslGraph::from_edges(nodes, &edges);
        let p = g
            .min_delay_path(&NodeId::Sat(SatId(0)), &NodeId::Sat(SatId(3)))
            .unwrap();
        assert_eq!(
            p.nodes,
            vec![
                NodeId::Sat(SatId(0)),
                NodeId::Sat(SatId(1)),
                NodeId::Sat(SatId(3))
            ]
        );
    }
}
