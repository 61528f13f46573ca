//! Shortest-path properties: brute-force equivalence on a small instance,
//! triangle inequality, path-sum exactness, core reachability, and the
//! cross-direction path penalty.

use leosim_core::geo::GeodeticPoint;
use leosim_core::orbit::{
    build_walker_constellation, ConstellationConfig, Direction, SatId,
};
use leosim_core::topology::{
    build_isl_grid, AttachmentScheme, GroundStation, GsId, IslGraph, NodeId, TopologyParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exhaustive simple-path enumeration for the oracle.
fn brute_force_min_path(
    n: usize,
    edges: &[(usize, usize, f64)],
    src: usize,
    dst: usize,
) -> Option<(Vec<usize>, f64)> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b, w) in edges {
        adj[a].push((b, w));
        adj[b].push((a, w));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut stack = vec![src];
    let mut visited = vec![false; n];
    visited[src] = true;
    fn dfs(
        u: usize,
        dst: usize,
        cost: f64,
        adj: &[Vec<(usize, f64)>],
        visited: &mut Vec<bool>,
        stack: &mut Vec<usize>,
        best: &mut Option<(Vec<usize>, f64)>,
    ) {
        if u == dst {
            let better = match best {
                None => true,
                Some((path, c)) => {
                    cost < *c - 1e-12
                        || ((cost - *c).abs() <= 1e-12 && stack.as_slice() < path.as_slice())
                }
            };
            if better {
                *best = Some((stack.clone(), cost));
            }
            return;
        }
        for &(v, w) in &adj[u] {
            if !visited[v] {
                visited[v] = true;
                stack.push(v);
                dfs(v, dst, cost + w, adj, visited, stack, best);
                stack.pop();
                visited[v] = false;
            }
        }
    }
    dfs(src, dst, 0.0, &adj, &mut visited, &mut stack, &mut best);
    best
}

#[test]
fn min_delay_path_matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..40 {
        // 3x3 grid with random positive weights.
        let n = 9;
        let mut edges = Vec::new();
        for r in 0..3usize {
            for c in 0..3usize {
                let u = r * 3 + c;
                if c + 1 < 3 {
                    edges.push((u, u + 1, rng.random_range(1.0..10.0)));
                }
                if r + 1 < 3 {
                    edges.push((u, u + 3, rng.random_range(1.0..10.0)));
                }
            }
        }
        let nodes: Vec<(NodeId, [f64; 3])> = (0..n)
            .map(|i| (NodeId::Sat(SatId(i as u32)), [0.0; 3]))
            .collect();
        let g = IslGraph::from_edges(nodes, &edges);
        let src = rng.random_range(0..n);
        let dst = rng.random_range(0..n);
        let got = g
            .min_delay_path(&NodeId::Sat(SatId(src as u32)), &NodeId::Sat(SatId(dst as u32)))
            .unwrap();
        let (expected_path, expected_cost) =
            brute_force_min_path(n, &edges, src, dst).unwrap();
        assert!((got.total_ms - expected_cost).abs() < 1e-9);
        let got_indices: Vec<usize> = got
            .nodes
            .iter()
            .map(|node| match node {
                NodeId::Sat(s) => s.0 as usize,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(got_indices, expected_path);
    }
}

fn starlink_graph(t: f64, gs: &[GroundStation]) -> IslGraph {
    let c = build_walker_constellation(&ConstellationConfig::starlink()).unwrap();
    let states = c.propagate_all(t).unwrap();
    build_isl_grid(&states, c.grid_shape(), gs, &TopologyParams::default(), t)
}

#[test]
fn path_total_is_the_sum_of_its_edges() {
    let g = starlink_graph(100.0, &[]);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..50 {
        let a = NodeId::Sat(SatId(rng.random_range(0..1584)));
        let b = NodeId::Sat(SatId(rng.random_range(0..1584)));
        let p = g.min_delay_path(&a, &b).unwrap();
        let mut total = 0.0;
        for pair in p.nodes.windows(2) {
            let pa = g.position_of(&pair[0]).unwrap();
            let pb = g.position_of(&pair[1]).unwrap();
            total += leosim_core::topology::propagation_delay_ms(pa, pb);
        }
        assert!((total - p.total_ms).abs() < 1e-9);
    }
}

#[test]
fn triangle_inequality_on_sampled_triples() {
    let g = starlink_graph(500.0, &[]);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..30 {
        let a = NodeId::Sat(SatId(rng.random_range(0..1584)));
        let b = NodeId::Sat(SatId(rng.random_range(0..1584)));
        let c = NodeId::Sat(SatId(rng.random_range(0..1584)));
        let ab = g.min_delay_path(&a, &b).unwrap().total_ms;
        let bc = g.min_delay_path(&b, &c).unwrap().total_ms;
        let ac = g.min_delay_path(&a, &c).unwrap().total_ms;
        assert!(ac <= ab + bc + 1e-9);
    }
}

#[test]
fn every_satellite_reaches_the_core_at_random_epochs() {
    let gs = vec![
        GroundStation {
            gs_id: GsId("core-gw".into()),
            location: GeodeticPoint::ground(38.0, 105.0),
            attached_to_core: true,
        },
    ];
    let c = build_walker_constellation(&ConstellationConfig::starlink()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..100 {
        let t: f64 = rng.random_range(0.0..86_400.0);
        let states = c.propagate_all(t).unwrap();
        let g = build_isl_grid(&states, c.grid_shape(), &gs, &TopologyParams::default(), t);
        // One sweep from the core settles reachability for all satellites.
        let sample = SatId(rng.random_range(0..1584));
        assert!(g.min_delay_path(&NodeId::Sat(sample), &NodeId::Core).is_ok());
        for i in [0u32, 500, 1000, 1583] {
            assert!(g.min_delay_path(&NodeId::Sat(SatId(i)), &NodeId::Core).is_ok());
        }
    }
}

#[test]
fn ntn_gs_beats_distant_core_from_local_station() {
    // A satellite with a nearby ground station but a core gateway far away:
    // the nearest-GS anchor is strictly cheaper than the core path.
    let c = build_walker_constellation(&ConstellationConfig::starlink()).unwrap();
    let states = c.propagate_all(0.0).unwrap();
    let sub = states[100].subpoint;
    let gs = vec![
        GroundStation {
            gs_id: GsId("local".into()),
            location: GeodeticPoint::ground(sub.lat_deg, sub.lon_deg),
            attached_to_core: false,
        },
        GroundStation {
            gs_id: GsId("core-gw".into()),
            location: GeodeticPoint::ground(-sub.lat_deg, sub.lon_deg + 80.0),
            attached_to_core: true,
        },
    ];
    let g = build_isl_grid(&states, c.grid_shape(), &gs, &TopologyParams::default(), 0.0);
    let via_gs = g
        .core_attachment_path(SatId(100), AttachmentScheme::NtnGs)
        .unwrap();
    let via_core = g
        .core_attachment_path(SatId(100), AttachmentScheme::Ntn)
        .unwrap();
    assert!(via_gs.total_ms < via_core.total_ms);
    assert!(matches!(via_gs.nodes.last(), Some(NodeId::Gs(_))));
    assert!(matches!(via_core.nodes.last(), Some(NodeId::Core)));
}

#[test]
fn cross_direction_paths_cost_more_than_neighbor_paths() {
    // At mid-latitudes, an ascending/descending pair over the same spot is
    // far apart on the grid even though it is close in space.
    let c = build_walker_constellation(&ConstellationConfig::starlink()).unwrap();
    let states = c.propagate_all(777.0).unwrap();
    let g = build_isl_grid(&states, c.grid_shape(), &[], &TopologyParams::default(), 777.0);

    let mut checked = 0;
    for s in &states {
        if s.direction != Direction::Ascending
            || !(20.0..35.0).contains(&s.subpoint.lat_deg)
        {
            continue;
        }
        // Closest opposite-direction satellite in space.
        let other = states
            .iter()
            .filter(|o| o.direction == Direction::Descending)
            .min_by(|a, b| {
                let da = leosim_core::geo::distance_km(a.position_ecef_km, s.position_ecef_km);
                let db = leosim_core::geo::distance_km(b.position_ecef_km, s.position_ecef_km);
                da.total_cmp(&db)
            })
            .unwrap();
        let cross = g
            .min_delay_path(&NodeId::Sat(s.sat_id), &NodeId::Sat(other.sat_id))
            .unwrap()
            .total_ms;
        // Same-direction neighbor: the next satellite in the same plane.
        let neighbor = SatId(s.plane_index * 22 + (s.index_in_plane + 1) % 22);
        let same = g
            .min_delay_path(&NodeId::Sat(s.sat_id), &NodeId::Sat(neighbor))
            .unwrap()
            .total_ms;
        assert!(
            cross > same,
            "cross-direction path {cross} not above neighbor path {same}"
        );
        checked += 1;
        if checked >= 25 {
            break;
        }
    }
    assert!(checked >= 10, "not enough mid-latitude pairs sampled");
}
