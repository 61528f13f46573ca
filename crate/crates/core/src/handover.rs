//! Handover execution: each scheme is a fixed message sequence costed over
//! the epoch's topology snapshot.
//!
//! All schemes share the RAN-side exchange: the source informs the target of
//! the handover decision, the target confirms, then the radio-side switch
//! (handover command to the UE followed by RRC setup with the target) runs in
//! parallel with the SN-status transfer between the base stations. The
//! proposed scheme stops there; the baseline schemes append a path-switch
//! request and acknowledgment to their respective anchors: the fixed core
//! (NTN), the nearest ground station (NTN-GS), or the nearest core-hosting
//! satellite (NTN-SMN).
//!
//! A message over a path costs its propagation delay plus a per-node
//! processing delay at every node after the sender.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeodeticPoint;
use crate::orbit::SatId;
use crate::prediction::UeId;
use crate::topology::{AttachmentScheme, IslGraph, NodeId, PathResult, TopologyError};

#[derive(Debug, Error)]
pub enum HandoverError {
    #[error("source and target must differ")]
    SameSourceAndTarget,
    #[error("handover failed: {0}")]
    Unroutable(#[from] TopologyError),
}

/// Handover signaling scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Proposed,
    Ntn,
    NtnGs,
    NtnSmn,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Ntn => "ntn",
            Scheme::NtnGs => "ntn-gs",
            Scheme::NtnSmn => "ntn-smn",
        }
    }

    pub const ALL: [Scheme; 4] = [Scheme::Proposed, Scheme::Ntn, Scheme::NtnGs, Scheme::NtnSmn];
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Calibration knobs for the message-cost model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SchemeParams {
    /// Processing delay at every forwarding node, ms.
    pub d_proc_ms: f64,
    /// Radio-side cost of the UE's RRC switch to the target (command
    /// reception excluded, random access and setup included), ms.
    pub rrc_setup_ms: f64,
    /// Terrestrial lag between a core-attached ground station and the core
    /// node, ms. Applied as the graph edge weight; kept here so one struct
    /// carries the full calibration.
    pub gs_core_lag_ms: f64,
}

impl Default for SchemeParams {
    fn default() -> Self {
        // Calibrated so the proposed scheme averages near 20 ms and the
        // NTN baseline lands in the 150-350 ms range on the 550 km preset.
        Self {
            d_proc_ms: 1.0,
            rrc_setup_ms: 10.0,
            gs_core_lag_ms: 25.0,
        }
    }
}

/// Per-phase latency decomposition: UE to RAN, RAN to RAN, RAN to core.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Breakdown {
    pub ue_ran_ms: f64,
    pub ran_ran_ms: f64,
    pub ran_core_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HandoverRecord {
    pub scheme: Scheme,
    pub ue_id: UeId,
    pub source_sat: SatId,
    pub target_sat: SatId,
    pub t_trigger_s: f64,
    pub latency_ms: f64,
    pub breakdown: Breakdown,
    pub abnormal: bool,
}

/// true iff the RAN's actual target differs from the core's prediction
/// (a missing prediction is a mismatch by definition).
pub fn detect_abnormal(predicted_target: Option<SatId>, actual_target: SatId) -> bool {
    predicted_target != Some(actual_target)
}

/// Cost of one message along a path: propagation plus processing at every
/// node after the sender.
pub fn message_cost_ms(path: &PathResult, params: &SchemeParams) -> f64 {
    path.total_ms + params.d_proc_ms * path.hops() as f64
}

/// Execute one handover under `scheme` and produce its record.
///
/// `abnormal` marks a proposed-scheme handover whose target was mispredicted;
/// it falls back to the standard NTN exchange and is costed accordingly.
pub fn execute_handover(
    scheme: Scheme,
    ue_id: UeId,
    ue_position: &GeodeticPoint,
    source: SatId,
    target: SatId,
    graph: &IslGraph,
    params: &SchemeParams,
    t_trigger_s: f64,
    abnormal: bool,
) -> Result<HandoverRecord, HandoverError> {
    if source == target {
        return Err(HandoverError::SameSourceAndTarget);
    }
    let src = NodeId::Sat(source);
    let ran_ran_path = graph.isl_path(source, target)?;
    let inter_gnb_ms = message_cost_ms(&ran_ran_path, params);

    let ue_ecef = ue_position.to_ecef_km();
    let src_pos = graph
        .position_of(&src)
        .ok_or_else(|| TopologyError::UnknownNode(src.to_string()))?;
    // Handover command down to the UE, then the radio switch to the target.
    let command_ms =
        crate::topology::propagation_delay_ms(src_pos, ue_ecef) + params.d_proc_ms;
    let ue_ran_ms = command_ms + params.rrc_setup_ms;

    // Step 1 decision + step 2 confirmation, then the parallel pair:
    // radio switch (3.a) against SN-status transfer (3.b).
    let ran_side_ms = 2.0 * inter_gnb_ms + ue_ran_ms.max(inter_gnb_ms);

    let core_leg = match scheme {
        Scheme::Proposed if !abnormal => None,
        Scheme::Proposed | Scheme::Ntn => Some(AttachmentScheme::Ntn),
        Scheme::NtnGs => Some(AttachmentScheme::NtnGs),
        Scheme::NtnSmn => Some(AttachmentScheme::NtnSmn),
    };
    // Path-switch request plus acknowledgment over the anchor path. A
    // co-located core function (NTN-SMN on its host satellite) still
    // processes each message once.
    let ran_core_ms = match core_leg {
        None => 0.0,
        Some(kind) => {
            let path = graph.core_attachment_path(target, kind)?;
            2.0 * message_cost_ms(&path, params).max(params.d_proc_ms)
        }
    };

    let latency_ms = ran_side_ms + ran_core_ms;
    Ok(HandoverRecord {
        scheme,
        ue_id,
        source_sat: source,
        target_sat: target,
        t_trigger_s,
        latency_ms,
        breakdown: Breakdown {
            ue_ran_ms,
            ran_ran_ms: ran_side_ms - ue_ran_ms,
            ran_core_ms,
        },
        abnormal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbit::{build_walker_constellation, ConstellationConfig};
    use crate::topology::{build_isl_grid, GroundStation, GsId, TopologyParams};

    fn record_sums(r: &HandoverRecord) -> f64 {
        r.breakdown.ue_ran_ms + r.breakdown.ran_ran_ms + r.breakdown.ran_core_ms
    }

    #[test]
    fn detect_abnormal_cases() {
        assert!(!detect_abnormal(Some(SatId(3)), SatId(3)));
        assert!(detect_abnormal(Some(SatId(3)), SatId(4)));
        assert!(detect_abnormal(None, SatId(3)));
    }

    #[test]
    fn proposed_latency_in_band_for_close_neighbors() {
        // 72 satellites per plane at 550 km put intra-plane neighbors about
        // 604 km apart.
        let cfg = ConstellationConfig {
            name: "dense".into(),
            altitude_km: 550.0,
            inclination_deg: 53.0,
            num_planes: 3,
            sats_per_plane: 72,
            phasing_factor: 0,
            min_elevation_deg: 40.0,
            raan_spread_deg: 360.0,
        };
        let c = build_walker_constellation(&cfg).unwrap();
        let states = c.propagate_all(0.0).unwrap();
        let g = build_isl_grid(&states, c.grid_shape(), &[], &TopologyParams::default(), 0.0);
        let ue = states[0].subpoint;
        let r = execute_handover(
            Scheme::Proposed,
            UeId(0),
            &GeodeticPoint::ground(ue.lat_deg, ue.lon_deg),
            SatId(0),
            SatId(1),
            &g,
            &SchemeParams::default(),
            10.0,
            false,
        )
        .unwrap();
        assert!(
            r.latency_ms > 15.0 && r.latency_ms < 30.0,
            "proposed latency {} outside band",
            r.latency_ms
        );
        assert_eq!(r.breakdown.ran_core_ms, 0.0);
        assert!((record_sums(&r) - r.latency_ms).abs() < 1e-9);
    }

    #[test]
    fn abnormal_proposed_costs_like_ntn() {
        let c = build_walker_constellation(&ConstellationConfig::starlink()).unwrap();
        let states = c.propagate_all(0.0).unwrap();
        let sub = states[40].subpoint;
        let gs = vec![
            GroundStation {
                gs_id: GsId("core-gw".into()),
                location: GeodeticPoint::ground(-sub.lat_deg, sub.lon_deg + 80.0),
                attached_to_core: true,
            },
        ];
        let g = build_isl_grid(&states, c.grid_shape(), &gs, &TopologyParams::default(), 0.0);
        let ue = GeodeticPoint::ground(sub.lat_deg, sub.lon_deg);
        let normal = execute_handover(
            Scheme::Proposed, UeId(1), &ue, SatId(40), SatId(41), &g,
            &SchemeParams::default(), 5.0, false,
        )
        .unwrap();
        let fallback = execute_handover(
            Scheme::Proposed, UeId(1), &ue, SatId(40), SatId(41), &g,
            &SchemeParams::default(), 5.0, true,
        )
        .unwrap();
        let ntn = execute_handover(
            Scheme::Ntn, UeId(1), &ue, SatId(40), SatId(41), &g,
            &SchemeParams::default(), 5.0, false,
        )
        .unwrap();
        assert!(fallback.abnormal);
        assert_eq!(fallback.latency_ms, ntn.latency_ms);
        assert!(fallback.breakdown.ran_core_ms > 0.0);
        assert_eq!(normal.breakdown.ran_core_ms, 0.0);
    }

    #[test]
    fn rejects_equal_endpoints() {
        let c = build_walker_constellation(&ConstellationConfig::starlink()).unwrap();
        let states = c.propagate_all(0.0).unwrap();
        let g = build_isl_grid(&states, c.grid_shape(), &[], &TopologyParams::default(), 0.0);
        let r = execute_handover(
            Scheme::Proposed,
            UeId(0),
            &GeodeticPoint::ground(0.0, 0.0),
            SatId(1),
            SatId(1),
            &g,
            &SchemeParams::default(),
            0.0,
            false,
        );
        assert!(matches!(r, Err(HandoverError::SameSourceAndTarget)));
    }

    #[test]
    fn ntn_without_core_is_a_failure() {
        let c = build_walker_constellation(&ConstellationConfig::starlink()).unwrap();
        let states = c.propagate_all(0.0).unwrap();
        let g = build_isl_grid(&states, c.grid_shape(), &[], &TopologyParams::default(), 0.0);
        let r = execute_handover(
            Scheme::Ntn,
            UeId(0),
            &GeodeticPoint::ground(0.0, 0.0),
            SatId(0),
            SatId(1),
            &g,
            &SchemeParams::default(),
            0.0,
            false,
        );
        assert!(matches!(r, Err(HandoverError::Unroutable(_))));
    }

    #[test]
    fn smn_on_host_satellite_uses_no_isl_hops() {
        let c = build_walker_constellation(&ConstellationConfig::starlink()).unwrap();
        let states = c.propagate_all(0.0).unwrap();
        let g = build_isl_grid(&states, c.grid_shape(), &[], &TopologyParams::default(), 0.0);
        // Satellite 0 hosts a core instance (index 0 in plane 0); a handover
        // targeting it crosses zero ISLs, leaving only the onboard core's
        // processing.
        let path = g
            .core_attachment_path(SatId(0), crate::topology::AttachmentScheme::NtnSmn)
            .unwrap();
        assert_eq!(path.hops(), 0);
        assert_eq!(path.total_ms, 0.0);
        let sub = states[0].subpoint;
        let ue = GeodeticPoint::ground(sub.lat_deg, sub.lon_deg);
        let params = SchemeParams::default();
        let r = execute_handover(
            Scheme::NtnSmn, UeId(0), &ue, SatId(1), SatId(0), &g, &params, 0.0, false,
        )
        .unwrap();
        assert_eq!(r.breakdown.ran_core_ms, 2.0 * params.d_proc_ms);
    }
}
