//! Oracle checks for the fast access prediction: block containment, brute
//! force equivalence, and the strategy-level handover-count properties.

use leosim_core::geo::{self, GeodeticPoint};
use leosim_core::orbit::{
    build_walker_constellation, coverage_radius_deg, coverage_radius_km, ConstellationConfig,
    SatelliteState, SatelliteView, SatId,
};
use leosim_core::prediction::{
    build_block_index, predict_access_map, select_access_satellite, AccessMap, AccessStrategy,
    StrategyKind, UeId, UserSnapshot, WeatherMask,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Brute-force version of the per-UE resolution: selection over the whole
/// satellite set, no blocks.
fn brute_force_map(
    current: &AccessMap,
    users: &[UserSnapshot],
    t_prime: f64,
    states: &[SatelliteState],
    min_elev: f64,
    mask: &WeatherMask,
) -> AccessMap {
    let mut next = AccessMap::new(t_prime);
    for u in users {
        let prev = current.get(u.id).unwrap();
        if u.strategy.kind == StrategyKind::Consistent {
            if let Some(p) = prev {
                if let Some(s) = states.iter().find(|s| s.sat_id == p) {
                    if mask.is_available(p)
                        && geo::elevation_deg(&u.position, s.position_ecef_km) >= min_elev
                    {
                        next.map.insert(u.id, Some(p));
                        continue;
                    }
                }
            }
        }
        let prev_dir = prev.and_then(|p| {
            states.iter().find(|s| s.sat_id == p).map(|s| s.direction)
        });
        let chosen = select_access_satellite(
            &u.position, states, u.strategy, prev, prev_dir, min_elev, mask,
        );
        next.map.insert(u.id, chosen);
    }
    next
}

#[test]
fn block_neighborhood_contains_every_in_range_satellite() {
    let cfg = ConstellationConfig::starlink();
    let c = build_walker_constellation(&cfg).unwrap();
    let radius_km = coverage_radius_km(cfg.altitude_km, cfg.min_elevation_deg);
    let radius_deg = coverage_radius_deg(cfg.altitude_km, cfg.min_elevation_deg);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..20 {
        let t: f64 = rng.random_range(0.0..20_000.0);
        let states = c.propagate_all(t).unwrap();
        for _ in 0..40 {
            let lat: f64 = rng.random_range(-70.0..70.0);
            let lon: f64 = rng.random_range(-180.0..180.0);
            let ue = GeodeticPoint::ground(lat, lon);
            // Precondition: block size at least the service radius in
            // degrees at this latitude.
            let block = radius_deg / lat.to_radians().cos().max(0.2) + 0.01;
            let idx = build_block_index(&states, block, t).unwrap();
            let candidates = idx.candidates_for(&ue);
            for s in &states {
                if ue.surface_distance_km(&s.subpoint) <= radius_km {
                    assert!(
                        candidates.contains(&s.sat_id),
                        "satellite {} within range missing from block gather at ({lat},{lon})",
                        s.sat_id
                    );
                }
            }
        }
    }
}

struct FixedView(Vec<SatelliteState>, f64);

impl SatelliteView for FixedView {
    fn sat_ids(&self) -> Vec<SatId> {
        self.0.iter().map(|s| s.sat_id).collect()
    }
    fn state_of(&self, sat: SatId, _t: f64) -> Result<SatelliteState, leosim_core::orbit::OrbitError> {
        self.0
            .iter()
            .find(|s| s.sat_id == sat)
            .cloned()
            .ok_or(leosim_core::orbit::OrbitError::UnknownSatellite(sat))
    }
}

#[test]
fn predict_matches_brute_force_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for case in 0..40 {
        let planes = rng.random_range(4..12);
        let spp = rng.random_range(4..14);
        let cfg = ConstellationConfig {
            name: format!("rand{case}"),
            altitude_km: rng.random_range(400.0..1400.0),
            inclination_deg: rng.random_range(40.0..98.0),
            num_planes: planes,
            sats_per_plane: spp,
            phasing_factor: rng.random_range(0..planes),
            min_elevation_deg: rng.random_range(15.0..45.0),
            raan_spread_deg: 360.0,
        };
        let c = build_walker_constellation(&cfg).unwrap();
        let t0: f64 = rng.random_range(0.0..5000.0);
        let t1 = t0 + 5.0;
        let states0 = c.propagate_all(t0).unwrap();
        let states1 = c.propagate_all(t1).unwrap();
        let mask = if rng.random_bool(0.3) {
            WeatherMask::with_unavailable(
                (0..cfg.total_sats() / 10).map(|_| SatId(rng.random_range(0..cfg.total_sats()))),
            )
        } else {
            WeatherMask::all_available()
        };

        let n_ues = rng.random_range(5..60);
        let mut users = Vec::new();
        let mut current = AccessMap::new(t0);
        for i in 0..n_ues {
            let strategy = AccessStrategy {
                kind: if rng.random_bool(0.5) {
                    StrategyKind::Consistent
                } else {
                    StrategyKind::Flexible
                },
                direction_constrained: rng.random_bool(0.5),
            };
            let pos = GeodeticPoint::ground(
                rng.random_range(-60.0..60.0),
                rng.random_range(-180.0..180.0),
            );
            let prev_dir = None;
            let initial = select_access_satellite(
                &pos,
                &states0,
                strategy,
                None,
                prev_dir,
                cfg.min_elevation_deg,
                &mask,
            );
            current.map.insert(UeId(i), initial);
            users.push(UserSnapshot {
                id: UeId(i),
                position: pos,
                strategy,
            });
        }

        let radius_deg = coverage_radius_deg(cfg.altitude_km, cfg.min_elevation_deg);
        let block = radius_deg / 60f64.to_radians().cos() + 0.01;
        let view = FixedView(states1.clone(), t1);
        let got = predict_access_map(
            &current,
            &users,
            t1,
            &view,
            cfg.min_elevation_deg,
            &mask,
            block,
        )
        .unwrap();
        let expected = brute_force_map(
            &current,
            &users,
            t1,
            &states1,
            cfg.min_elevation_deg,
            &mask,
        );
        assert_eq!(got.map, expected.map, "case {case} diverged from brute force");
    }
}

/// Chain RAN-style selection over a stretch of time and collect the access
/// values per epoch.
fn chain(
    c: &leosim_core::orbit::Constellation,
    ue: &GeodeticPoint,
    strategy: AccessStrategy,
    duration_s: u32,
) -> Vec<Option<SatId>> {
    let mask = WeatherMask::all_available();
    let min_elev = c.config().min_elevation_deg;
    let mut serving: Option<SatId> = None;
    let mut out = Vec::new();
    for e in 0..duration_s {
        let states = c.propagate_all(e as f64).unwrap();
        let prev_dir =
            serving.and_then(|p| states.iter().find(|s| s.sat_id == p).map(|s| s.direction));
        serving =
            select_access_satellite(ue, &states, strategy, serving, prev_dir, min_elev, &mask);
        out.push(serving);
    }
    out
}

fn count_changes(chain: &[Option<SatId>]) -> usize {
    chain
        .windows(2)
        .filter(|w| w[0].is_some() && w[1].is_some() && w[0] != w[1])
        .count()
}

#[test]
fn consistent_strategy_never_leaves_coverage_early_and_flexible_switches_more() {
    let c = build_walker_constellation(&ConstellationConfig::starlink()).unwrap();
    let ue = GeodeticPoint::ground(25.0, 5.0);
    let consistent = chain(&c, &ue, AccessStrategy::consistent(false), 1800);
    let flexible = chain(&c, &ue, AccessStrategy::flexible(false), 1800);

    // Consistent: at most one handover per satellite pass means the serving
    // satellite never repeats between consecutive distinct runs... checked
    // here as: a switch only happens when the previous satellite dropped
    // below the threshold.
    let states_cache: Vec<_> = (0..1800).map(|e| c.propagate_all(e as f64).unwrap()).collect();
    for e in 1..1800usize {
        let (prev, cur) = (consistent[e - 1], consistent[e]);
        if let (Some(p), Some(cu)) = (prev, cur) {
            if p != cu {
                let el = geo::elevation_deg(&ue, states_cache[e][p.0 as usize].position_ecef_km);
                assert!(
                    el < c.config().min_elevation_deg,
                    "consistent switched at epoch {e} while {p} was still visible (elevation {el})"
                );
            }
        }
    }
    assert!(count_changes(&flexible) >= count_changes(&consistent));
    assert!(count_changes(&consistent) >= 1);
}

#[test]
fn direction_constraint_keeps_same_direction_when_possible() {
    let c = build_walker_constellation(&ConstellationConfig::starlink()).unwrap();
    let ue = GeodeticPoint::ground(28.0, 12.0);
    let strategy = AccessStrategy::flexible(true);
    let mask = WeatherMask::all_available();
    let mut serving: Option<SatId> = None;
    for e in 0..1800 {
        let states = c.propagate_all(e as f64).unwrap();
        let prev_dir =
            serving.and_then(|p| states.iter().find(|s| s.sat_id == p).map(|s| s.direction));
        let next =
            select_access_satellite(&ue, &states, strategy, serving, prev_dir, 40.0, &mask);
        if let (Some(p), Some(n)) = (serving, next) {
            if p != n {
                let p_dir = states[p.0 as usize].direction;
                let n_dir = states[n.0 as usize].direction;
                // A cross-direction switch is only allowed when no
                // same-direction candidate existed.
                if p_dir != n_dir {
                    let any_same = states.iter().any(|s| {
                        s.direction == p_dir
                            && geo::elevation_deg(&ue, s.position_ecef_km) >= 40.0
                    });
                    assert!(!any_same, "cross-direction switch despite candidates");
                }
            }
        }
        serving = next;
    }
}
