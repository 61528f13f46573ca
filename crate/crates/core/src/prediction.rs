//! Access-satellite selection and the block-indexed fast prediction of the
//! access map.
//!
//! Two strategies exist: *consistent* keeps the current satellite until it
//! leaves coverage, *flexible* always takes the best candidate. "Best" is
//! concretized as maximum elevation, optionally restricted to satellites
//! travelling in the same direction as the previous one.
//!
//! The bulk prediction divides the Earth into rectangular latitude/longitude
//! blocks, buckets satellites by subpoint, and resolves each candidate UE
//! against its block and the 8 neighbors instead of the whole constellation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{self, GeodeticPoint};
use crate::orbit::{Direction, OrbitError, SatId, SatelliteState, SatelliteView};

/// User-terminal identifier.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct UeId(pub u32);

impl fmt::Display for UeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ue{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum PredictionError {
    #[error("block size must be positive, got {0}")]
    BadBlockSize(f64),
    #[error("access map is missing user {0}")]
    MissingUser(UeId),
    #[error("prediction target time {t_prime} not after map time {t}")]
    NonMonotonicTime { t: f64, t_prime: f64 },
    #[error(transparent)]
    Orbit(#[from] OrbitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Consistent,
    Flexible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessStrategy {
    pub kind: StrategyKind,
    pub direction_constrained: bool,
}

impl AccessStrategy {
    pub fn consistent(direction_constrained: bool) -> Self {
        Self {
            kind: StrategyKind::Consistent,
            direction_constrained,
        }
    }

    pub fn flexible(direction_constrained: bool) -> Self {
        Self {
            kind: StrategyKind::Flexible,
            direction_constrained,
        }
    }
}

/// Per-satellite availability mask (weather). Default: everything available.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct WeatherMask {
    unavailable: HashSet<SatId>,
}

impl WeatherMask {
    pub fn all_available() -> Self {
        Self::default()
    }

    pub fn with_unavailable(ids: impl IntoIterator<Item = SatId>) -> Self {
        Self {
            unavailable: ids.into_iter().collect(),
        }
    }

    pub fn is_available(&self, sat: SatId) -> bool {
        !self.unavailable.contains(&sat)
    }
}

/// The access relation for a set of users, stamped with its evaluation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessMap {
    pub t: f64,
    pub map: BTreeMap<UeId, Option<SatId>>,
}

impl AccessMap {
    pub fn new(t: f64) -> Self {
        Self {
            t,
            map: BTreeMap::new(),
        }
    }

    pub fn get(&self, ue: UeId) -> Option<Option<SatId>> {
        self.map.get(&ue).copied()
    }
}

/// Minimal user view the prediction needs: identity, last-known position,
/// and access strategy.
#[derive(Debug, Clone)]
pub struct UserSnapshot {
    pub id: UeId,
    pub position: GeodeticPoint,
    pub strategy: AccessStrategy,
}

/// Is `sat` usable for an observer at `ue` (mask plus elevation threshold)?
pub fn is_available(
    ue: &GeodeticPoint,
    sat: &SatelliteState,
    min_elev_deg: f64,
    mask: &WeatherMask,
) -> bool {
    mask.is_available(sat.sat_id)
        && geo::elevation_deg(ue, sat.position_ecef_km) >= min_elev_deg
}

/// Pick an access satellite among `candidates` for a UE at `ue`.
///
/// `prev` is the currently connected satellite, if any; its travel direction
/// is taken from the candidate states when present, else from `prev_direction`
/// (the last direction the caller observed for it).
///
/// Consistent keeps `prev` while it is still usable. Otherwise the best
/// candidate wins: maximum elevation among candidates sharing the previous
/// direction when the strategy is direction-constrained and such candidates
/// exist, else maximum elevation overall; ties break to the smallest id.
/// Returns `None` when nothing is usable (service gap).
pub fn select_access_satellite(
    ue: &GeodeticPoint,
    candidates: &[SatelliteState],
    strategy: AccessStrategy,
    prev: Option<SatId>,
    prev_direction: Option<Direction>,
    min_elev_deg: f64,
    mask: &WeatherMask,
) -> Option<SatId> {
    let mut usable: Vec<(&SatelliteState, f64)> = Vec::new();
    for s in candidates {
        if !mask.is_available(s.sat_id) {
            continue;
        }
        let el = geo::elevation_deg(ue, s.position_ecef_km);
        if el >= min_elev_deg {
            usable.push((s, el));
        }
    }
    if usable.is_empty() {
        return None;
    }

    if strategy.kind == StrategyKind::Consistent {
        if let Some(p) = prev {
            if usable.iter().any(|(s, _)| s.sat_id == p) {
                return Some(p);
            }
        }
    }

    let prev_dir = match prev {
        Some(p) => candidates
            .iter()
            .find(|s| s.sat_id == p)
            .map(|s| s.direction)
            .or(prev_direction),
        None => prev_direction,
    };

    let argmax = |items: &[(&SatelliteState, f64)]| -> SatId {
        let mut best = &items[0];
        for it in &items[1..] {
            if it.1 > best.1 || (it.1 == best.1 && it.0.sat_id < best.0.sat_id) {
                best = it;
            }
        }
        best.0.sat_id
    };

    if strategy.direction_constrained {
        if let Some(dir) = prev_dir {
            let same: Vec<(&SatelliteState, f64)> = usable
                .iter()
                .filter(|(s, _)| s.direction == dir)
                .copied()
                .collect();
            if !same.is_empty() {
                return Some(argmax(&same));
            }
        }
    }
    Some(argmax(&usable))
}

const POLAR_CAP_LAT_DEG: f64 = 80.0;

/// Satellites bucketed into latitude/longitude blocks by subpoint.
///
/// Latitude bands above the polar cap limit collapse into two cap sets.
#[derive(Debug, Clone)]
pub struct BlockIndex {
    pub block_size_deg: f64,
    pub t: f64,
    blocks: HashMap<(i32, i32), Vec<SatId>>,
    north_cap: Vec<SatId>,
    south_cap: Vec<SatId>,
    lon_bands: i32,
    /// Longitude bands tile the full circle uniformly, so their width is
    /// 360 / lon_bands, which is at least `block_size_deg`.
    lon_width_deg: f64,
}

/// Bucket every satellite into the block of its subpoint.
///
/// Blocks are floor-indexed: latitude band `floor(lat / size)`, longitude
/// band `floor(lon / size)` on the [0, 360) circle so that bands wrap at the
/// antimeridian.
pub fn build_block_index(
    states: &[SatelliteState],
    block_size_deg: f64,
    t: f64,
) -> Result<BlockIndex, PredictionError> {
    if !(block_size_deg > 0.0) {
        return Err(PredictionError::BadBlockSize(block_size_deg));
    }
    let lon_bands = ((360.0 / block_size_deg).floor() as i32).max(1);
    let mut index = BlockIndex {
        block_size_deg,
        t,
        blocks: HashMap::new(),
        north_cap: Vec::new(),
        south_cap: Vec::new(),
        lon_bands,
        lon_width_deg: 360.0 / lon_bands as f64,
    };
    for s in states {
        let lat = s.subpoint.lat_deg;
        if lat > POLAR_CAP_LAT_DEG {
            index.north_cap.push(s.sat_id);
        } else if lat < -POLAR_CAP_LAT_DEG {
            index.south_cap.push(s.sat_id);
        } else {
            let key = index.block_of(&s.subpoint);
            index.blocks.entry(key).or_default().push(s.sat_id);
        }
    }
    Ok(index)
}

impl BlockIndex {
    /// Block key (lat_band, lon_band) of a point.
    pub fn block_of(&self, p: &GeodeticPoint) -> (i32, i32) {
        let lat_band = (p.lat_deg / self.block_size_deg).floor() as i32;
        let lon360 = p.lon_deg.rem_euclid(360.0);
        let lon_band = ((lon360 / self.lon_width_deg).floor() as i32).min(self.lon_bands - 1);
        (lat_band, lon_band)
    }

    pub fn block_contents(&self, key: (i32, i32)) -> &[SatId] {
        self.blocks.get(&key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty() && self.north_cap.is_empty() && self.south_cap.is_empty()
    }

    pub fn satellite_count(&self) -> usize {
        self.blocks.values().map(Vec::len).sum::<usize>()
            + self.north_cap.len()
            + self.south_cap.len()
    }

    /// Candidate satellites for a UE: its block plus the 8 neighbors, the
    /// polar caps when the neighborhood touches them. UEs inside a cap scan
    /// everything (longitude bands degenerate there).
    pub fn candidates_for(&self, ue: &GeodeticPoint) -> Vec<SatId> {
        let mut out = Vec::new();
        if ue.lat_deg.abs() > POLAR_CAP_LAT_DEG {
            for ids in self.blocks.values() {
                out.extend_from_slice(ids);
            }
            out.extend_from_slice(&self.north_cap);
            out.extend_from_slice(&self.south_cap);
            out.sort_unstable();
            return out;
        }
        let (bl, bo) = self.block_of(ue);
        let cap_band = (POLAR_CAP_LAT_DEG / self.block_size_deg).floor() as i32;
        for dl in -1..=1 {
            let lat_band = bl + dl;
            if lat_band > cap_band {
                out.extend_from_slice(&self.north_cap);
                continue;
            }
            if lat_band < -cap_band - 1 {
                out.extend_from_slice(&self.south_cap);
                continue;
            }
            for dlon in -1..=1 {
                let lon_band = (bo + dlon).rem_euclid(self.lon_bands);
                out.extend_from_slice(self.block_contents((lat_band, lon_band)));
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Predict the access map at `t_prime` from the map at an earlier time.
///
/// Consistent users whose satellite is still available keep their entry and
/// never enter the candidate set; everyone else is re-resolved against the
/// satellites found in their block and its 8 neighbors.
pub fn predict_access_map<V: SatelliteView>(
    current: &AccessMap,
    users: &[UserSnapshot],
    t_prime: f64,
    view: &V,
    min_elev_deg: f64,
    mask: &WeatherMask,
    block_size_deg: f64,
) -> Result<AccessMap, PredictionError> {
    let states = view.all_states(t_prime)?;
    let index = build_block_index(&states, block_size_deg, t_prime)?;
    predict_access_map_with(current, users, t_prime, &states, &index, min_elev_deg, mask)
}

/// [`predict_access_map`] against already-propagated states and their index.
pub fn predict_access_map_with(
    current: &AccessMap,
    users: &[UserSnapshot],
    t_prime: f64,
    states: &[SatelliteState],
    index: &BlockIndex,
    min_elev_deg: f64,
    mask: &WeatherMask,
) -> Result<AccessMap, PredictionError> {
    if t_prime <= current.t {
        return Err(PredictionError::NonMonotonicTime {
            t: current.t,
            t_prime,
        });
    }
    let by_id: BTreeMap<SatId, &SatelliteState> =
        states.iter().map(|s| (s.sat_id, s)).collect();

    let mut next = AccessMap::new(t_prime);
    for ue in users {
        let prev = current
            .get(ue.id)
            .ok_or(PredictionError::MissingUser(ue.id))?;
        // Candidate-set construction: consistent users stay out while their
        // satellite remains available.
        if ue.strategy.kind == StrategyKind::Consistent {
            if let Some(p) = prev {
                if let Some(state) = by_id.get(&p) {
                    if is_available(&ue.position, state, min_elev_deg, mask) {
                        next.map.insert(ue.id, Some(p));
                        continue;
                    }
                }
            }
        }
        let candidate_ids = index.candidates_for(&ue.position);
        let candidates: Vec<SatelliteState> = candidate_ids
            .iter()
            .filter_map(|id| by_id.get(id).map(|s| (*s).clone()))
            .collect();
        let prev_dir = prev.and_then(|p| by_id.get(&p).map(|s| s.direction));
        let chosen = select_access_satellite(
            &ue.position,
            &candidates,
            ue.strategy,
            prev,
            prev_dir,
            min_elev_deg,
            mask,
        );
        next.map.insert(ue.id, chosen);
    }
    Ok(next)
}

/// Number of users Alg-2 would re-resolve (the candidate set size).
pub fn candidate_count<V: SatelliteView>(
    current: &AccessMap,
    users: &[UserSnapshot],
    t_prime: f64,
    view: &V,
    min_elev_deg: f64,
    mask: &WeatherMask,
) -> Result<usize, PredictionError> {
    let states = view.all_states(t_prime)?;
    let by_id: BTreeMap<SatId, &SatelliteState> =
        states.iter().map(|s| (s.sat_id, s)).collect();
    let mut n = 0;
    for ue in users {
        let prev = current
            .get(ue.id)
            .ok_or(PredictionError::MissingUser(ue.id))?;
        let keep = ue.strategy.kind == StrategyKind::Consistent
            && prev
                .and_then(|p| by_id.get(&p))
                .is_some_and(|s| is_available(&ue.position, s, min_elev_deg, mask));
        if !keep {
            n += 1;
        }
    }
    Ok(n)
}
