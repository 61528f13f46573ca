//! The UPF-side synchronized table: per-UE access satellite, next-access
//! satellite, and predicted trigger time, maintained without any control
//! signaling from the RAN.
//!
//! The table advances in fixed windows of `delta_t` (default 5 s). A periodic
//! update takes the current access relation from the stored next-access
//! column, predicts the relation one window ahead, and pinpoints the trigger
//! time of every predicted change by bisecting the window. Downlink routing
//! reads flip to the next-access satellite once the predicted trigger time
//! passes.
//!
//! Updates are computed against a [`SatelliteView`], so the table can run on
//! exact ephemeris, perturbed ephemeris, or replayed traces.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::geo::GeodeticPoint;
use crate::orbit::{OrbitError, SatId, SatelliteView};
use crate::prediction::{
    self, AccessMap, AccessStrategy, PredictionError, UeId, UserSnapshot,
    WeatherMask,
};

/// Canonical grid on which access transitions are timestamped: 1 ms.
pub const TRANSITION_GRID_S: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum SyncError {
    #[error("periodic update expected at t={expected}, got t={got}")]
    PeriodicTimeMismatch { expected: f64, got: f64 },
    #[error("user {0} already registered")]
    DuplicateUe(UeId),
    #[error("user {0} not registered")]
    UnknownUe(UeId),
    #[error("user {0} has no serving satellite")]
    NoService(UeId),
    #[error("binary search requires differing endpoint access values")]
    EqualEndpoints,
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Prediction(#[from] PredictionError),
}

/// Opaque per-satellite tunnel identifier carried in the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TunnelRef(pub u64);

impl TunnelRef {
    pub fn for_sat(sat: SatId) -> Self {
        TunnelRef(0x5A70_0000_0000 | sat.0 as u64)
    }
}

/// One row of the table.
#[derive(Debug, Clone, Serialize)]
pub struct SyncEntry {
    pub ue: UeId,
    pub known_position: GeodeticPoint,
    /// When `known_position` was reported.
    pub reported_at: f64,
    /// Motion estimate dead-reckoned from the last two position reports.
    pub motion: Option<MotionEstimate>,
    pub strategy: AccessStrategy,
    /// Access satellite for the current window.
    pub access_sat: Option<SatId>,
    /// Access satellite after the predicted trigger; equals `access_sat`
    /// when no change is predicted.
    pub next_access_sat: Option<SatId>,
    /// Predicted trigger time, seconds; 0 when no change is predicted.
    pub t_p: f64,
    /// Tunnel identifier of the satellite currently routed to.
    pub tunnel_ref: Option<TunnelRef>,
}

/// Ground velocity inferred from consecutive uplink position reports; lets
/// the table extrapolate a moving UE between reports.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MotionEstimate {
    pub heading_deg: f64,
    pub speed_mps: f64,
}

impl SyncEntry {
    /// Best-known UE position at `tau` (dead-reckoned when moving).
    pub fn position_at(&self, tau: f64) -> GeodeticPoint {
        extrapolate(&self.known_position, self.reported_at, self.motion, tau)
    }

    fn invariant_ok(&self, t_window: f64, delta_t: f64) -> bool {
        let same = self.access_sat == self.next_access_sat;
        if same != (self.t_p == 0.0) {
            return false;
        }
        if self.t_p != 0.0 {
            let eps = 1e-6;
            if self.t_p < t_window - eps || self.t_p > t_window + delta_t + eps {
                return false;
            }
        }
        true
    }
}

fn extrapolate(
    position: &GeodeticPoint,
    reported_at: f64,
    motion: Option<MotionEstimate>,
    tau: f64,
) -> GeodeticPoint {
    match motion {
        Some(m) if m.speed_mps > 0.0 => {
            position.great_circle_step(m.heading_deg, m.speed_mps * (tau - reported_at) / 1000.0)
        }
        _ => *position,
    }
}

fn estimate_motion(
    old_position: &GeodeticPoint,
    old_reported_at: f64,
    position: &GeodeticPoint,
    reported_at: f64,
) -> Option<MotionEstimate> {
    let dt = reported_at - old_reported_at;
    if dt <= 0.0 {
        return None;
    }
    let dist_km = old_position.surface_distance_km(position);
    if dist_km <= 1e-9 {
        return None;
    }
    Some(MotionEstimate {
        heading_deg: old_position.initial_bearing_deg(position),
        speed_mps: dist_km * 1000.0 / dt,
    })
}

#[derive(Debug, Clone)]
pub struct SyncConfig {
    /// Periodic update interval, seconds.
    pub delta_t_s: f64,
    /// Bisection iteration count for the trigger-time search.
    pub iterations: u32,
    /// Elevation threshold for access, degrees.
    pub min_elev_deg: f64,
    /// Block size for the fast prediction, degrees.
    pub block_size_deg: f64,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            delta_t_s: 5.0,
            iterations: 9,
            min_elev_deg: 40.0,
            block_size_deg: 10.5,
        }
    }
}

/// Registration / deregistration / movement events that trigger a
/// single-row update.
#[derive(Debug, Clone)]
pub enum UeEvent {
    Register {
        position: GeodeticPoint,
        strategy: AccessStrategy,
    },
    Deregister,
    Move {
        position: GeodeticPoint,
    },
}

/// Midpoint of the bracket after `iterations` halvings of `[t0, t1]`,
/// bisecting on "access value differs from the value at `t0`".
///
/// With `t1 - t0 = 5 s` and 9 iterations the final bracket is
/// 5000/512 ~ 9.77 ms wide, so the returned midpoint is within 10 ms of the
/// true trigger. The window must contain at most one access change.
pub fn binary_search_trigger<E>(
    mut eval: E,
    t0: f64,
    t1: f64,
    iterations: u32,
) -> Result<f64, SyncError>
where
    E: FnMut(f64) -> Result<Option<SatId>, SyncError>,
{
    let baseline = eval(t0)?;
    if eval(t1)? == baseline {
        return Err(SyncError::EqualEndpoints);
    }
    let (mut lo, mut hi) = (t0, t1);
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if eval(mid)? == baseline {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// First instant on the 1 ms grid, strictly after `t0` and at most `t1`,
/// where the access value departs from its value at `t0`; paired with the
/// value observed there. `None` when the endpoints agree.
///
/// Both the table and a RAN-side caller that bracket the same change land on
/// the same grid instant and therefore the same target value, which is what
/// keeps core prediction and RAN behavior aligned.
pub fn transition_on_grid<E>(
    mut eval: E,
    t0: f64,
    t1: f64,
) -> Result<Option<(f64, Option<SatId>)>, SyncError>
where
    E: FnMut(f64) -> Result<Option<SatId>, SyncError>,
{
    let baseline = eval(t0)?;
    let at_t1 = eval(t1)?;
    if at_t1 == baseline {
        return Ok(None);
    }
    let (mut lo, mut hi) = (t0, t1);
    while hi - lo > TRANSITION_GRID_S {
        let mid = 0.5 * (lo + hi);
        if eval(mid)? == baseline {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut k = (lo / TRANSITION_GRID_S).floor() as i64;
    for _ in 0..4 {
        k += 1;
        let g = k as f64 * TRANSITION_GRID_S;
        if g <= t0 {
            continue;
        }
        if g >= t1 {
            break;
        }
        let v = eval(g)?;
        if v != baseline {
            return Ok(Some((g, v)));
        }
    }
    Ok(Some((t1, at_t1)))
}

/// Access value of one UE at time `t`: propagate the candidate satellites and
/// apply the selection rule. This is the single evaluation path shared by the
/// core table and any RAN-side caller.
pub fn access_at<V: SatelliteView>(
    view: &V,
    t: f64,
    position: &GeodeticPoint,
    candidate_ids: &[SatId],
    prev: Option<SatId>,
    strategy: AccessStrategy,
    min_elev_deg: f64,
    mask: &WeatherMask,
) -> Result<Option<SatId>, SyncError> {
    let mut states = Vec::with_capacity(candidate_ids.len());
    for &id in candidate_ids {
        states.push(view.state_of(id, t)?);
    }
    Ok(prediction::select_access_satellite(
        position,
        &states,
        strategy,
        prev,
        None,
        min_elev_deg,
        mask,
    ))
}

/// The table R.
#[derive(Debug, Clone)]
pub struct SyncTable {
    t_last: f64,
    cfg: SyncConfig,
    rows: BTreeMap<UeId, SyncEntry>,
    last_update_failed: bool,
    failed_updates: u64,
}

#[derive(Serialize)]
struct TableSnapshot<'a> {
    t_last: f64,
    delta_t_s: f64,
    rows: Vec<&'a SyncEntry>,
}

impl SyncTable {
    pub fn new(t0: f64, cfg: SyncConfig) -> Self {
        Self {
            t_last: t0,
            cfg,
            rows: BTreeMap::new(),
            last_update_failed: false,
            failed_updates: 0,
        }
    }

    pub fn t_last(&self) -> f64 {
        self.t_last
    }

    pub fn delta_t(&self) -> f64 {
        self.cfg.delta_t_s
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, ue: UeId) -> Option<&SyncEntry> {
        self.rows.get(&ue)
    }

    pub fn rows(&self) -> impl Iterator<Item = &SyncEntry> {
        self.rows.values()
    }

    pub fn last_update_failed(&self) -> bool {
        self.last_update_failed
    }

    pub fn failed_updates(&self) -> u64 {
        self.failed_updates
    }

    /// The access relation of the current window.
    pub fn access_map(&self) -> AccessMap {
        AccessMap {
            t: self.t_last,
            map: self
                .rows
                .iter()
                .map(|(ue, r)| (*ue, r.access_sat))
                .collect(),
        }
    }

    /// JSON snapshot for inspection.
    pub fn snapshot_json(&self) -> String {
        let snap = TableSnapshot {
            t_last: self.t_last,
            delta_t_s: self.cfg.delta_t_s,
            rows: self.rows.values().collect(),
        };
        serde_json::to_string_pretty(&snap).expect("table serializes")
    }

    /// Periodic update at `t = T + delta_t`.
    ///
    /// The access relation at `t` comes from the stored next-access column;
    /// the relation at `t + delta_t` is predicted with the block-indexed fast
    /// algorithm; rows whose values differ get a bisected trigger time. The
    /// new rows replace the old ones atomically: on any error the previous
    /// table stays intact and the epoch is flagged.
    pub fn periodic_update<V: SatelliteView>(
        &mut self,
        t: f64,
        view: &V,
        mask: &WeatherMask,
    ) -> Result<(), SyncError> {
        let expected = self.t_last + self.cfg.delta_t_s;
        if (t - expected).abs() > 1e-6 {
            return Err(SyncError::PeriodicTimeMismatch { expected, got: t });
        }
        match self.compute_rows(t, view, mask) {
            Ok(rows) => {
                self.rows = rows;
                self.t_last = t;
                self.last_update_failed = false;
                Ok(())
            }
            Err(e) => {
                self.last_update_failed = true;
                self.failed_updates += 1;
                Err(e)
            }
        }
    }

    fn compute_rows<V: SatelliteView>(
        &self,
        t: f64,
        view: &V,
        mask: &WeatherMask,
    ) -> Result<BTreeMap<UeId, SyncEntry>, SyncError> {
        let t1 = t + self.cfg.delta_t_s;
        // A_t from the stored next-access column.
        let a_t = AccessMap {
            t,
            map: self
                .rows
                .iter()
                .map(|(ue, r)| (*ue, r.next_access_sat))
                .collect(),
        };
        // The prediction step sees each UE where it is expected at t1.
        let users: Vec<UserSnapshot> = self
            .rows
            .values()
            .map(|r| UserSnapshot {
                id: r.ue,
                position: r.position_at(t1),
                strategy: r.strategy,
            })
            .collect();
        // One propagation per window endpoint serves both the prediction and
        // the in-window candidate pools.
        let states_t1 = view.all_states(t1)?;
        let idx_t1 = prediction::build_block_index(&states_t1, self.cfg.block_size_deg, t1)?;
        let a_t1 = prediction::predict_access_map_with(
            &a_t,
            &users,
            t1,
            &states_t1,
            &idx_t1,
            self.cfg.min_elev_deg,
            mask,
        )?;
        let idx_t = prediction::build_block_index(&view.all_states(t)?, self.cfg.block_size_deg, t)?;

        let mut rows = BTreeMap::new();
        for row in self.rows.values() {
            let geom = RowGeom::of(row);
            let prev = a_t.get(row.ue).expect("map covers its own users");
            let predicted = a_t1.get(row.ue).expect("predicted map covers users");
            let entry = if predicted == prev {
                self.settled_entry(row.ue, &geom, row.strategy, prev)
            } else {
                self.changed_entry(
                    row.ue,
                    &geom,
                    row.strategy,
                    prev,
                    t,
                    t1,
                    &idx_t,
                    &idx_t1,
                    view,
                    mask,
                )?
            };
            rows.insert(row.ue, entry);
        }
        Ok(rows)
    }

    fn settled_entry(
        &self,
        ue: UeId,
        geom: &RowGeom,
        strategy: AccessStrategy,
        value: Option<SatId>,
    ) -> SyncEntry {
        SyncEntry {
            ue,
            known_position: geom.position,
            reported_at: geom.reported_at,
            motion: geom.motion,
            strategy,
            access_sat: value,
            next_access_sat: value,
            t_p: 0.0,
            tunnel_ref: value.map(TunnelRef::for_sat),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn changed_entry<V: SatelliteView>(
        &self,
        ue: UeId,
        geom: &RowGeom,
        strategy: AccessStrategy,
        prev: Option<SatId>,
        t: f64,
        t1: f64,
        idx_t: &prediction::BlockIndex,
        idx_t1: &prediction::BlockIndex,
        view: &V,
        mask: &WeatherMask,
    ) -> Result<SyncEntry, SyncError> {
        let candidates = window_candidates(geom, prev, t, t1, idx_t, idx_t1);
        let eval = |tau: f64| {
            access_at(
                view,
                tau,
                &geom.at(tau),
                &candidates,
                prev,
                strategy,
                self.cfg.min_elev_deg,
                mask,
            )
        };
        let (next, t_p) = match transition_on_grid(&eval, t, t1)? {
            Some((_, target)) => {
                let t_p = binary_search_trigger(&eval, t, t1, self.cfg.iterations)?;
                (target, t_p)
            }
            // The full-constellation prediction saw a change but the
            // candidate evaluation does not (availability flapped exactly at
            // the endpoint); keep the row settled.
            None => (prev, 0.0),
        };
        Ok(SyncEntry {
            ue,
            known_position: geom.position,
            reported_at: geom.reported_at,
            motion: geom.motion,
            strategy,
            access_sat: prev,
            next_access_sat: next,
            t_p,
            tunnel_ref: prev.map(TunnelRef::for_sat),
        })
    }

    /// Single-row update for registration, deregistration, or movement
    /// arriving at time `t`. The row is recomputed for the table's current
    /// window.
    pub fn on_ue_event<V: SatelliteView>(
        &mut self,
        ue: UeId,
        event: UeEvent,
        t: f64,
        view: &V,
        mask: &WeatherMask,
    ) -> Result<(), SyncError> {
        self.apply_events(std::slice::from_ref(&(ue, event)), t, view, mask)
    }

    /// Apply a batch of UE events arriving at time `t` against one pair of
    /// block indexes. Events are processed in order; the first failing event
    /// aborts the rest.
    pub fn apply_events<V: SatelliteView>(
        &mut self,
        events: &[(UeId, UeEvent)],
        t: f64,
        view: &V,
        mask: &WeatherMask,
    ) -> Result<(), SyncError> {
        let needs_geometry = events
            .iter()
            .any(|(_, e)| !matches!(e, UeEvent::Deregister));
        let indexes = if needs_geometry {
            let t0 = self.t_last;
            let t1 = t0 + self.cfg.delta_t_s;
            let idx_t =
                prediction::build_block_index(&view.all_states(t0)?, self.cfg.block_size_deg, t0)?;
            let idx_t1 =
                prediction::build_block_index(&view.all_states(t1)?, self.cfg.block_size_deg, t1)?;
            Some((idx_t, idx_t1))
        } else {
            None
        };
        for (ue, event) in events {
            match event {
                UeEvent::Register { position, strategy } => {
                    if self.rows.contains_key(ue) {
                        return Err(SyncError::DuplicateUe(*ue));
                    }
                    let geom = RowGeom {
                        position: *position,
                        reported_at: t,
                        motion: None,
                    };
                    let (idx_t, idx_t1) = indexes.as_ref().expect("geometry prepared");
                    let entry =
                        self.recompute_row(*ue, &geom, *strategy, None, idx_t, idx_t1, view, mask)?;
                    self.rows.insert(*ue, entry);
                }
                UeEvent::Deregister => {
                    self.rows.remove(ue).ok_or(SyncError::UnknownUe(*ue))?;
                }
                UeEvent::Move { position } => {
                    let row = self.rows.get(ue).ok_or(SyncError::UnknownUe(*ue))?;
                    let (strategy, prev) = (row.strategy, row.access_sat);
                    let geom = RowGeom {
                        position: *position,
                        reported_at: t,
                        motion: estimate_motion(
                            &row.known_position,
                            row.reported_at,
                            position,
                            t,
                        ),
                    };
                    let (idx_t, idx_t1) = indexes.as_ref().expect("geometry prepared");
                    let entry =
                        self.recompute_row(*ue, &geom, strategy, prev, idx_t, idx_t1, view, mask)?;
                    self.rows.insert(*ue, entry);
                }
            }
        }
        Ok(())
    }

    /// Recompute one row at the current window (A_T, A_{T+delta_t}, t_p).
    #[allow(clippy::too_many_arguments)]
    fn recompute_row<V: SatelliteView>(
        &self,
        ue: UeId,
        geom: &RowGeom,
        strategy: AccessStrategy,
        chain_prev: Option<SatId>,
        idx_t: &prediction::BlockIndex,
        idx_t1: &prediction::BlockIndex,
        view: &V,
        mask: &WeatherMask,
    ) -> Result<SyncEntry, SyncError> {
        let t = self.t_last;
        let t1 = t + self.cfg.delta_t_s;
        let seed_candidates = window_candidates(geom, chain_prev, t, t1, idx_t, idx_t1);
        let access = access_at(
            view,
            t,
            &geom.at(t),
            &seed_candidates,
            chain_prev,
            strategy,
            self.cfg.min_elev_deg,
            mask,
        )?;
        let candidates = window_candidates(geom, access, t, t1, idx_t, idx_t1);
        let at_end = access_at(
            view,
            t1,
            &geom.at(t1),
            &candidates,
            access,
            strategy,
            self.cfg.min_elev_deg,
            mask,
        )?;
        if at_end == access {
            return Ok(self.settled_entry(ue, geom, strategy, access));
        }
        self.changed_entry(ue, geom, strategy, access, t, t1, idx_t, idx_t1, view, mask)
    }

    /// Downlink routing lookup: the next-access satellite once the predicted
    /// trigger has passed, the access satellite before that.
    pub fn route_downlink(&self, ue: UeId, now: f64) -> Result<(SatId, TunnelRef), SyncError> {
        let row = self.rows.get(&ue).ok_or(SyncError::UnknownUe(ue))?;
        let sel = if row.t_p != 0.0 && now >= row.t_p {
            row.next_access_sat
        } else {
            row.access_sat
        };
        let sat = sel.ok_or(SyncError::NoService(ue))?;
        Ok((sat, TunnelRef::for_sat(sat)))
    }

    /// Row refresh after an abnormal handover resolved through the standard
    /// NTN procedure: the core learns the true serving satellite (and the
    /// UE position carried by the fallback signaling) at `now`.
    pub fn notify_fallback<V: SatelliteView>(
        &mut self,
        ue: UeId,
        actual: SatId,
        position: GeodeticPoint,
        now: f64,
        view: &V,
        mask: &WeatherMask,
    ) -> Result<(), SyncError> {
        let row = self.rows.get(&ue).ok_or(SyncError::UnknownUe(ue))?;
        let strategy = row.strategy;
        let geom = RowGeom {
            position,
            reported_at: now,
            motion: estimate_motion(&row.known_position, row.reported_at, &position, now),
        };
        let t1 = self.t_last + self.cfg.delta_t_s;
        let idx_t1 =
            prediction::build_block_index(&view.all_states(t1)?, self.cfg.block_size_deg, t1)?;
        let mut candidates = idx_t1.candidates_for(&geom.at(t1));
        candidates.extend(idx_t1.candidates_for(&position));
        push_unique(&mut candidates, actual);
        let at_end = access_at(
            view,
            t1,
            &geom.at(t1),
            &candidates,
            Some(actual),
            strategy,
            self.cfg.min_elev_deg,
            mask,
        )?;
        let entry = if at_end == Some(actual) || now >= t1 {
            self.settled_entry(ue, &geom, strategy, Some(actual))
        } else {
            let eval = |tau: f64| {
                access_at(
                    view,
                    tau,
                    &geom.at(tau),
                    &candidates,
                    Some(actual),
                    strategy,
                    self.cfg.min_elev_deg,
                    mask,
                )
            };
            match transition_on_grid(eval, now, t1)? {
                Some((g, target)) => SyncEntry {
                    ue,
                    known_position: geom.position,
                    reported_at: geom.reported_at,
                    motion: geom.motion,
                    strategy,
                    access_sat: Some(actual),
                    next_access_sat: target,
                    t_p: g,
                    tunnel_ref: Some(TunnelRef::for_sat(actual)),
                },
                None => self.settled_entry(ue, &geom, strategy, Some(actual)),
            }
        };
        self.rows.insert(ue, entry);
        Ok(())
    }

    /// Check the row invariants: `t_p = 0` iff access equals next-access, and
    /// nonzero trigger times lie within the current window.
    pub fn self_check(&self) -> Result<(), String> {
        for row in self.rows.values() {
            if !row.invariant_ok(self.t_last, self.cfg.delta_t_s) {
                return Err(format!(
                    "row {} violates the table invariant: access={:?} next={:?} t_p={}",
                    row.ue, row.access_sat, row.next_access_sat, row.t_p
                ));
            }
        }
        Ok(())
    }
}

/// Geometry of one row: last report plus motion estimate.
struct RowGeom {
    position: GeodeticPoint,
    reported_at: f64,
    motion: Option<MotionEstimate>,
}

impl RowGeom {
    fn of(row: &SyncEntry) -> Self {
        Self {
            position: row.known_position,
            reported_at: row.reported_at,
            motion: row.motion,
        }
    }

    fn at(&self, tau: f64) -> GeodeticPoint {
        extrapolate(&self.position, self.reported_at, self.motion, tau)
    }
}

fn window_candidates(
    geom: &RowGeom,
    prev: Option<SatId>,
    t: f64,
    t1: f64,
    idx_t: &prediction::BlockIndex,
    idx_t1: &prediction::BlockIndex,
) -> Vec<SatId> {
    let mut ids = idx_t.candidates_for(&geom.at(t));
    ids.extend(idx_t1.candidates_for(&geom.at(t1)));
    if let Some(p) = prev {
        ids.push(p);
    }
    ids.sort_unstable();
    ids.dedup();
    ids
}

fn push_unique(ids: &mut Vec<SatId>, id: SatId) {
    if !ids.contains(&id) {
        ids.push(id);
        ids.sort_unstable();
    }
}
