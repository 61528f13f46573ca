//! The deterministic scenario loop.
//!
//! Each 1 s epoch: advance UE positions, propagate the constellation,
//! rebuild the topology snapshot, run RAN-side selection per UE on true
//! geometry, execute handovers for every configured scheme, then run the
//! core-side table ticks (periodic updates on its own cadence, position
//! reports riding on uplinks). The core sees the world through a possibly
//! perturbed ephemeris view and through last-reported UE positions, which is
//! exactly where abnormal handovers come from.
//!
//! Everything is driven by one seeded RNG, so a config plus seed fixes the
//! full output byte-for-byte.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use leosim_core::geo;
use leosim_core::handover::{self, HandoverRecord, Scheme};
use leosim_core::orbit::{
    build_walker_constellation, coverage_radius_deg, Constellation, OrbitError, SatId,
    SatelliteState, SatelliteView,
};
use leosim_core::prediction::{
    build_block_index, select_access_satellite, AccessStrategy, BlockIndex, UeId, WeatherMask,
};
use leosim_core::sync::{transition_on_grid, SyncConfig, SyncError, SyncTable, UeEvent};
use leosim_core::topology::{build_isl_grid, AttachmentScheme, IslGraph, TopologyParams};
use leosim_core::GeodeticPoint;

use crate::config::{MobilitySpec, ScenarioConfig};
use crate::metrics::{self, MetricsReport};
use crate::mobility::{step_mobility, Mobility, UeState};
use crate::HarnessError;

/// Constellation view with a fixed along-track offset per satellite,
/// modeling stale ephemeris on the core side.
pub struct PerturbedView<'a> {
    constellation: &'a Constellation,
    offsets_km: Vec<f64>,
}

impl<'a> PerturbedView<'a> {
    pub fn new(constellation: &'a Constellation, offsets_km: Vec<f64>) -> Self {
        Self {
            constellation,
            offsets_km,
        }
    }

    pub fn exact(constellation: &'a Constellation) -> Self {
        Self::new(constellation, Vec::new())
    }
}

impl SatelliteView for PerturbedView<'_> {
    fn sat_ids(&self) -> Vec<SatId> {
        self.constellation.sat_ids()
    }

    fn state_of(&self, sat: SatId, t: f64) -> Result<SatelliteState, OrbitError> {
        let mut s = self.constellation.propagate(sat, t)?;
        if let Some(&off) = self.offsets_km.get(sat.0 as usize) {
            if off != 0.0 {
                let vn = geo::norm(s.velocity_kms);
                s.position_ecef_km =
                    geo::add(s.position_ecef_km, geo::scale(s.velocity_kms, off / vn));
                s.subpoint = GeodeticPoint::from_ecef_km(s.position_ecef_km);
            }
        }
        Ok(s)
    }
}

struct UeSim {
    st: UeState,
    prev_pos: GeodeticPoint,
    serving: Option<SatId>,
    last_transition_t: f64,
    last_uplink_t: f64,
    core_known_pos: GeodeticPoint,
}

impl UeSim {
    /// True position at a fractional time within the current epoch
    /// (`epoch_start` is the epoch the last step began from).
    fn position_at(&self, tau: f64, epoch_start: f64) -> GeodeticPoint {
        match self.st.mobility {
            Mobility::Stationary => self.st.position,
            m => step_mobility(&self.prev_pos, &m, (tau - epoch_start).max(0.0)),
        }
    }
}

pub struct ScenarioOutput {
    pub records: Vec<HandoverRecord>,
    /// Ping-stall per record (latency + one post-attachment round trip);
    /// absent without a core node.
    pub stalls: Vec<Option<f64>>,
    pub report: MetricsReport,
    /// Set together with `report.partial` when the run aborted mid-way.
    pub run_error: Option<String>,
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn gather_candidates(idx: &BlockIndex, pos: &GeodeticPoint, extra: Option<SatId>) -> Vec<SatId> {
    let mut ids = idx.candidates_for(pos);
    if let Some(p) = extra {
        if !ids.contains(&p) {
            ids.push(p);
            ids.sort_unstable();
        }
    }
    ids
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutput, HarnessError> {
    cfg.validate()?;
    if cfg.delta_t_s.fract() != 0.0 {
        return Err(HarnessError::InvalidConfig(
            "delta_t must be a whole number of 1 s epochs".into(),
        ));
    }
    let ccfg = cfg.constellation_config()?;
    let constellation = build_walker_constellation(&ccfg)?;
    let ground_stations = cfg.ground_station_list()?;
    let has_core = ground_stations.iter().any(|g| g.attached_to_core);
    if (cfg.schemes.contains(&Scheme::Ntn) || cfg.schemes.contains(&Scheme::Proposed)) && !has_core
    {
        return Err(HarnessError::InvalidConfig(
            "NTN and the proposed scheme's fallback need a core-attached ground station".into(),
        ));
    }
    if cfg.schemes.contains(&Scheme::NtnGs) && ground_stations.is_empty() {
        return Err(HarnessError::InvalidConfig(
            "NTN-GS needs at least one ground station".into(),
        ));
    }

    let topo_params = TopologyParams {
        gs_min_elevation_deg: cfg
            .topology
            .gs_min_elevation_deg
            .unwrap_or(ccfg.min_elevation_deg),
        gs_core_lag_ms: cfg.params.gs_core_lag_ms,
        seam_open: cfg.topology.seam_open,
        smn_host_indices: cfg.topology.smn_host_indices.clone(),
    };

    // Block size: service radius in longitude degrees at the highest
    // latitude the population can reach.
    let radius_deg = coverage_radius_deg(ccfg.altitude_km, ccfg.min_elevation_deg);
    let lat_bound = cfg.max_reachable_lat_deg().min(65.0);
    let block_size = cfg
        .block_size_deg
        .unwrap_or(radius_deg / lat_bound.to_radians().cos() + 0.01)
        .max(radius_deg + 0.01);

    let mask = WeatherMask::with_unavailable(cfg.weather_unavailable.iter().map(|&i| SatId(i)));
    let min_elev = ccfg.min_elevation_deg;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sigma_km = cfg.ephemeris_error.sigma_km();
    let offsets: Vec<f64> = if sigma_km > 0.0 {
        (0..constellation.num_sats())
            .map(|_| sigma_km * standard_normal(&mut rng))
            .collect()
    } else {
        Vec::new()
    };
    let core_view = PerturbedView::new(&constellation, offsets);

    // UE population, ids assigned in group order.
    let mut ues: Vec<UeSim> = Vec::with_capacity(cfg.total_ues() as usize);
    for group in &cfg.ue_groups {
        for _ in 0..group.count {
            let lat = rng.random_range(group.region.lat_min..=group.region.lat_max);
            let lon = rng.random_range(group.region.lon_min..=group.region.lon_max);
            let heading = match &group.mobility {
                MobilitySpec::GreatCircle { heading_deg: None, .. } => {
                    rng.random_range(0.0..360.0)
                }
                _ => 0.0,
            };
            let position = GeodeticPoint::ground(lat, lon);
            let id = UeId(ues.len() as u32);
            ues.push(UeSim {
                st: UeState {
                    ue_id: id,
                    position,
                    mobility: Mobility::from_spec(&group.mobility, heading),
                    strategy: AccessStrategy {
                        kind: group.strategy,
                        direction_constrained: group.direction_constrained,
                    },
                    active: group.active,
                    uplink_period_s: group.uplink_period_s,
                },
                prev_pos: position,
                serving: None,
                last_transition_t: -f64::INFINITY,
                last_uplink_t: 0.0,
                core_known_pos: position,
            });
        }
    }

    let sync_cfg = SyncConfig {
        delta_t_s: cfg.delta_t_s,
        iterations: cfg.binary_search_iterations,
        min_elev_deg: min_elev,
        block_size_deg: block_size,
    };
    let mut table = SyncTable::new(0.0, sync_cfg);
    let registrations: Vec<(UeId, UeEvent)> = ues
        .iter()
        .map(|u| {
            (
                u.st.ue_id,
                UeEvent::Register {
                    position: u.st.position,
                    strategy: u.st.strategy,
                },
            )
        })
        .collect();
    table
        .apply_events(&registrations, 0.0, &core_view, &mask)
        .map_err(|e| HarnessError::Sync(e.to_string()))?;

    let epochs = cfg.duration_s.ceil() as u32;
    let delta_epochs = cfg.delta_t_s as u32;

    let mut records: Vec<HandoverRecord> = Vec::new();
    let mut stalls: Vec<Option<f64>> = Vec::new();
    let mut handover_events = 0u64;
    let mut abnormal_count = 0u64;
    let mut service_gap_epochs = 0u64;
    let mut acquisitions = 0u64;
    let mut sync_mismatch_epochs = 0u64;
    let mut sync_invariant_violations = 0u64;
    let mut failed_handovers = 0u64;
    let mut wall_samples: Vec<f64> = Vec::new();
    let run_error: Option<String> = None;

    let mut prev_idx: Option<BlockIndex> = None;

    for e in 0..=epochs {
        let t = e as f64;
        let epoch_start = (e.saturating_sub(1)) as f64;
        if e > 0 {
            for ue in &mut ues {
                ue.prev_pos = ue.st.position;
                ue.st.position = step_mobility(&ue.st.position, &ue.st.mobility, 1.0);
            }
        }
        let states = constellation
            .propagate_all(t)
            .map_err(HarnessError::from)?;
        let idx = build_block_index(&states, block_size, t)?;
        let graph = build_isl_grid(
            &states,
            constellation.grid_shape(),
            &ground_stations,
            &topo_params,
            t,
        );

        for i in 0..ues.len() {
            let (serving, pos, strategy) =
                (ues[i].serving, ues[i].st.position, ues[i].st.strategy);
            let cand_ids = gather_candidates(&idx, &pos, serving);
            let cand_states: Vec<SatelliteState> = cand_ids
                .iter()
                .map(|id| states[id.0 as usize].clone())
                .collect();
            let raw = select_access_satellite(
                &pos,
                &cand_states,
                strategy,
                serving,
                None,
                min_elev,
                &mask,
            );
            match (serving, raw) {
                (None, Some(s)) => {
                    ues[i].serving = Some(s);
                    ues[i].last_transition_t = t;
                    acquisitions += 1;
                }
                (Some(_), None) => {
                    ues[i].serving = None;
                    ues[i].last_transition_t = t;
                    service_gap_epochs += 1;
                }
                (Some(cur), Some(new)) if new != cur => {
                    // Bracket the change inside this epoch and land on the
                    // canonical grid instant the table also uses.
                    let mut search_ids = match &prev_idx {
                        Some(p) => gather_candidates(p, &ues[i].prev_pos, Some(cur)),
                        None => cand_ids.clone(),
                    };
                    search_ids.extend(cand_ids.iter().copied());
                    search_ids.sort_unstable();
                    search_ids.dedup();
                    let ue_ref = &ues[i];
                    let eval = |tau: f64| -> Result<Option<SatId>, SyncError> {
                        let p = ue_ref.position_at(tau, epoch_start);
                        let mut sts = Vec::with_capacity(search_ids.len());
                        for id in &search_ids {
                            sts.push(constellation.propagate(*id, tau)?);
                        }
                        Ok(select_access_satellite(
                            &p, &sts, strategy, Some(cur), None, min_elev, &mask,
                        ))
                    };
                    let transition = transition_on_grid(eval, epoch_start, t)
                        .map_err(|e| HarnessError::Sync(e.to_string()))?;
                    match transition {
                        None | Some((_, None)) => {
                            // Dropped to a gap first; treat the new satellite
                            // as a re-acquisition, not a handover.
                            ues[i].serving = Some(new);
                            ues[i].last_transition_t = t;
                            service_gap_epochs += 1;
                            acquisitions += 1;
                        }
                        Some((t_star, Some(target))) => {
                            handover_events += 1;
                            let predicted = table.row(ues[i].st.ue_id).and_then(|r| {
                                if r.t_p != 0.0 {
                                    r.next_access_sat
                                } else {
                                    None
                                }
                            });
                            let abnormal = handover::detect_abnormal(predicted, target);
                            if abnormal {
                                abnormal_count += 1;
                            }
                            let stall_rtt = post_attach_rtt(&graph, &pos, target, cfg);
                            for scheme in &cfg.schemes {
                                match handover::execute_handover(
                                    *scheme,
                                    ues[i].st.ue_id,
                                    &pos,
                                    cur,
                                    target,
                                    &graph,
                                    &cfg.params,
                                    t_star,
                                    *scheme == Scheme::Proposed && abnormal,
                                ) {
                                    Ok(rec) => {
                                        stalls.push(stall_rtt.map(|rtt| rec.latency_ms + rtt));
                                        records.push(rec);
                                    }
                                    // Unreachable anchor this epoch: a failed
                                    // handover, counted but not costed.
                                    Err(_) => failed_handovers += 1,
                                }
                            }
                            if abnormal {
                                // The NTN fallback teaches the core the true
                                // satellite and position.
                                table
                                    .notify_fallback(
                                        ues[i].st.ue_id,
                                        target,
                                        pos,
                                        t_star,
                                        &core_view,
                                        &mask,
                                    )
                                    .map_err(|e| HarnessError::Sync(e.to_string()))?;
                                ues[i].core_known_pos = pos;
                            }
                            ues[i].serving = Some(target);
                            ues[i].last_transition_t = t;
                        }
                    }
                }
                _ => {}
            }
        }

        // Routing-consistency probe: outside a one-epoch grace window around
        // transitions, the table must point at the true serving satellite.
        for ue in &ues {
            if let Some(serving) = ue.serving {
                if t - ue.last_transition_t <= 1.0 + 1e-9 {
                    continue;
                }
                match table.route_downlink(ue.st.ue_id, t) {
                    Ok((routed, _)) if routed == serving => {}
                    _ => sync_mismatch_epochs += 1,
                }
            }
        }

        if e > 0 && e % delta_epochs == 0 {
            let t0 = Instant::now();
            // A failed prediction leaves the table intact and is counted.
            let _ = table.periodic_update(t, &core_view, &mask);
            if cfg.record_timing {
                wall_samples.push(t0.elapsed().as_secs_f64() * 1000.0);
            }
            if table.self_check().is_err() {
                sync_invariant_violations += 1;
            }
        }

        // Position reports ride on uplink traffic.
        let mut moves: Vec<(UeId, UeEvent)> = Vec::new();
        for ue in &mut ues {
            if t - ue.last_uplink_t >= ue.st.uplink_period_s - 1e-9 {
                ue.last_uplink_t = t;
                if ue.st.position != ue.core_known_pos {
                    moves.push((
                        ue.st.ue_id,
                        UeEvent::Move {
                            position: ue.st.position,
                        },
                    ));
                    ue.core_known_pos = ue.st.position;
                }
            }
        }
        if !moves.is_empty() {
            table
                .apply_events(&moves, t, &core_view, &mask)
                .map_err(|e| HarnessError::Sync(e.to_string()))?;
            if table.self_check().is_err() {
                sync_invariant_violations += 1;
            }
        }

        prev_idx = Some(idx);
    }

    let per_scheme = metrics::scheme_stats(&records, &stalls);
    let report = MetricsReport {
        scenario: cfg.name.clone(),
        seed: cfg.seed,
        duration_s: cfg.duration_s,
        ue_count: cfg.total_ues(),
        handover_events,
        abnormal_count,
        abnormal_rate: if handover_events == 0 {
            0.0
        } else {
            abnormal_count as f64 / handover_events as f64
        },
        service_gap_epochs,
        acquisitions,
        sync_mismatch_epochs,
        sync_invariant_violations,
        failed_handovers,
        failed_periodic_updates: table.failed_updates(),
        partial: run_error.is_some(),
        per_scheme,
        prediction_wall_ms_per_update: if cfg.record_timing && !wall_samples.is_empty() {
            Some(wall_samples.iter().sum::<f64>() / wall_samples.len() as f64)
        } else {
            None
        },
    };
    Ok(ScenarioOutput {
        records,
        stalls,
        report,
        run_error,
    })
}

/// One post-attachment UE-server round trip through the core, ms.
fn post_attach_rtt(
    graph: &IslGraph,
    ue_pos: &GeodeticPoint,
    target: SatId,
    cfg: &ScenarioConfig,
) -> Option<f64> {
    let path = graph
        .core_attachment_path(target, AttachmentScheme::Ntn)
        .ok()?;
    let core_ms = handover::message_cost_ms(&path, &cfg.params);
    let tgt_pos = graph.position_of(&leosim_core::topology::NodeId::Sat(target))?;
    let ue_leg =
        leosim_core::topology::propagation_delay_ms(tgt_pos, ue_pos.to_ecef_km())
            + cfg.params.d_proc_ms;
    Some(2.0 * (ue_leg + core_ms))
}

/// Mean duration of complete coverage passes seen by stationary observers.
///
/// Passes clipped by the window edges are discarded.
pub fn measure_mean_pass_duration(
    ccfg: &leosim_core::orbit::ConstellationConfig,
    observers: &[GeodeticPoint],
    duration_s: u32,
) -> Result<f64, HarnessError> {
    use std::collections::BTreeMap;

    let c = build_walker_constellation(ccfg)?;
    let block = coverage_radius_deg(ccfg.altitude_km, ccfg.min_elevation_deg) * 2.2;
    // Per observer: satellite -> epoch its current pass began.
    let mut in_view: Vec<BTreeMap<SatId, u32>> = vec![BTreeMap::new(); observers.len()];
    let mut durations: Vec<u32> = Vec::new();
    for e in 0..=duration_s {
        let t = e as f64;
        let states = c.propagate_all(t)?;
        let idx = build_block_index(&states, block, t)?;
        for (oi, obs) in observers.iter().enumerate() {
            let visible: Vec<SatId> = idx
                .candidates_for(obs)
                .into_iter()
                .filter(|id| {
                    geo::elevation_deg(obs, states[id.0 as usize].position_ecef_km)
                        >= ccfg.min_elevation_deg
                })
                .collect();
            let ended: Vec<SatId> = in_view[oi]
                .keys()
                .filter(|id| !visible.contains(id))
                .copied()
                .collect();
            for id in ended {
                let started = in_view[oi].remove(&id).unwrap();
                // Passes that began at the window edge are clipped.
                if started > 0 {
                    durations.push(e - started);
                }
            }
            for id in visible {
                in_view[oi].entry(id).or_insert(e);
            }
        }
    }
    if durations.is_empty() {
        return Err(HarnessError::InvalidConfig(
            "no complete passes observed".into(),
        ));
    }
    Ok(durations.iter().map(|&d| d as f64).sum::<f64>() / durations.len() as f64)
}
