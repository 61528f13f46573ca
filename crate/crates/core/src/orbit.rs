//! Walker-style constellation generation, circular-orbit propagation, and
//! visibility geometry.
//!
//! Positions come either from the analytic circular-orbit model or from a
//! replayed ephemeris trace; both implement [`SatelliteView`] so the rest of
//! the stack does not care which one drives it.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{
    self, GeodeticPoint, Vec3, EARTH_RADIUS_KM, EARTH_ROTATION_RAD_S, MU_EARTH,
};

/// Satellite identifier. For Walker constellations ids are assigned as
/// `plane * sats_per_plane + index_in_plane`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SatId(pub u32);

impl fmt::Display for SatId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sat{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum OrbitError {
    #[error("invalid constellation config: {0}")]
    InvalidConfig(String),
    #[error("unknown satellite id {0}")]
    UnknownSatellite(SatId),
    #[error("ephemeris trace has no samples covering t={t} for {sat}")]
    TraceOutOfRange { sat: SatId, t: f64 },
    #[error("malformed ephemeris trace: {0}")]
    TraceParse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// North/south travel direction of a satellite.
///
/// At the exact orbit apex (argument of latitude 90 deg) the direction
/// resolves to the immediately following motion, i.e. `Descending`; at the
/// nadir (270 deg) to `Ascending`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Ascending,
    Descending,
}

/// Shell parameters for one Walker-style constellation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstellationConfig {
    pub name: String,
    pub altitude_km: f64,
    pub inclination_deg: f64,
    pub num_planes: u32,
    pub sats_per_plane: u32,
    #[serde(default)]
    pub phasing_factor: u32,
    pub min_elevation_deg: f64,
    #[serde(default = "default_raan_spread")]
    pub raan_spread_deg: f64,
}

fn default_raan_spread() -> f64 {
    360.0
}

impl ConstellationConfig {
    /// 550 km / 53 deg shell, 72 x 22, 40 deg minimum elevation.
    /// Altitude and elevation follow published Starlink figures; plane
    /// counts are configurable defaults.
    pub fn starlink() -> Self {
        Self {
            name: "starlink".into(),
            altitude_km: 550.0,
            inclination_deg: 53.0,
            num_planes: 72,
            sats_per_plane: 22,
            phasing_factor: 11,
            min_elevation_deg: 40.0,
            raan_spread_deg: 360.0,
        }
    }

    /// 630 km / 51.9 deg shell, 34 x 34, 35 deg minimum elevation.
    pub fn kuiper() -> Self {
        Self {
            name: "kuiper".into(),
            altitude_km: 630.0,
            inclination_deg: 51.9,
            num_planes: 34,
            sats_per_plane: 34,
            phasing_factor: 17,
            min_elevation_deg: 35.0,
            raan_spread_deg: 360.0,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "starlink" => Some(Self::starlink()),
            "kuiper" => Some(Self::kuiper()),
            _ => None,
        }
    }

    pub fn total_sats(&self) -> u32 {
        self.num_planes * self.sats_per_plane
    }

    pub fn semi_major_axis_km(&self) -> f64 {
        EARTH_RADIUS_KM + self.altitude_km
    }

    pub fn validate(&self) -> Result<(), OrbitError> {
        if self.altitude_km <= 0.0 {
            return Err(OrbitError::InvalidConfig("altitude must be positive".into()));
        }
        if !(0.0..=180.0).contains(&self.inclination_deg) {
            return Err(OrbitError::InvalidConfig(
                "inclination must lie in [0, 180]".into(),
            ));
        }
        if self.num_planes == 0 || self.sats_per_plane == 0 {
            return Err(OrbitError::InvalidConfig(
                "need at least one plane and one satellite per plane".into(),
            ));
        }
        if !(0.0..90.0).contains(&self.min_elevation_deg) {
            return Err(OrbitError::InvalidConfig(
                "minimum elevation must lie in [0, 90)".into(),
            ));
        }
        if !(self.raan_spread_deg > 0.0 && self.raan_spread_deg <= 360.0) {
            return Err(OrbitError::InvalidConfig(
                "raan spread must lie in (0, 360]".into(),
            ));
        }
        Ok(())
    }
}

/// Kinematic state of one satellite at a given instant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SatelliteState {
    pub sat_id: SatId,
    pub plane_index: u32,
    pub index_in_plane: u32,
    /// Earth-fixed position, km.
    pub position_ecef_km: Vec3,
    /// Inertial velocity expressed in Earth-fixed axes, km/s.
    pub velocity_kms: Vec3,
    pub subpoint: GeodeticPoint,
    pub direction: Direction,
}

/// A provider of satellite states at arbitrary times.
///
/// Implemented by the analytic [`Constellation`] and by [`EphemerisTrace`];
/// the prediction and sync layers are written against this trait only.
pub trait SatelliteView {
    fn sat_ids(&self) -> Vec<SatId>;
    fn state_of(&self, sat: SatId, t: f64) -> Result<SatelliteState, OrbitError>;

    fn all_states(&self, t: f64) -> Result<Vec<SatelliteState>, OrbitError> {
        self.sat_ids()
            .into_iter()
            .map(|id| self.state_of(id, t))
            .collect()
    }
}

#[derive(Debug, Clone)]
struct OrbitalElements {
    raan_deg: f64,
    arg_lat0_deg: f64,
    plane: u32,
    index: u32,
}

/// A propagated Walker constellation.
#[derive(Debug, Clone)]
pub struct Constellation {
    cfg: ConstellationConfig,
    elements: Vec<OrbitalElements>,
}

/// Build a Walker constellation from `cfg`.
///
/// Plane `p` gets RAAN `p * raan_spread / num_planes`; satellite `k` of plane
/// `p` starts at argument of latitude
/// `k * 360 / sats_per_plane + p * phasing_factor * 360 / total_sats`.
pub fn build_walker_constellation(
    cfg: &ConstellationConfig,
) -> Result<Constellation, OrbitError> {
    cfg.validate()?;
    let total = cfg.total_sats();
    let mut elements = Vec::with_capacity(total as usize);
    for p in 0..cfg.num_planes {
        let raan = p as f64 * cfg.raan_spread_deg / cfg.num_planes as f64;
        for k in 0..cfg.sats_per_plane {
            let u0 = k as f64 * 360.0 / cfg.sats_per_plane as f64
                + p as f64 * cfg.phasing_factor as f64 * 360.0 / total as f64;
            elements.push(OrbitalElements {
                raan_deg: raan,
                arg_lat0_deg: u0,
                plane: p,
                index: k,
            });
        }
    }
    Ok(Constellation {
        cfg: cfg.clone(),
        elements,
    })
}

impl Constellation {
    pub fn config(&self) -> &ConstellationConfig {
        &self.cfg
    }

    pub fn num_sats(&self) -> usize {
        self.elements.len()
    }

    pub fn grid_shape(&self) -> (u32, u32) {
        (self.cfg.num_planes, self.cfg.sats_per_plane)
    }

    /// Mean motion, rad/s.
    pub fn mean_motion(&self) -> f64 {
        let a = self.cfg.semi_major_axis_km();
        (MU_EARTH / (a * a * a)).sqrt()
    }

    /// Orbital period, s.
    pub fn period_s(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.mean_motion()
    }

    /// Circular orbital speed, km/s.
    pub fn orbital_speed_kms(&self) -> f64 {
        (MU_EARTH / self.cfg.semi_major_axis_km()).sqrt()
    }

    fn elements_of(&self, sat: SatId) -> Result<&OrbitalElements, OrbitError> {
        self.elements
            .get(sat.0 as usize)
            .ok_or(OrbitError::UnknownSatellite(sat))
    }

    /// Inertial-frame position at time t (before Earth rotation is applied).
    pub fn eci_position_km(&self, sat: SatId, t: f64) -> Result<Vec3, OrbitError> {
        let el = self.elements_of(sat)?;
        Ok(self.eci_state(el, t).0)
    }

    fn eci_state(&self, el: &OrbitalElements, t: f64) -> (Vec3, Vec3, f64) {
        let a = self.cfg.semi_major_axis_km();
        let n = self.mean_motion();
        let u = el.arg_lat0_deg.to_radians() + n * t;
        let raan = el.raan_deg.to_radians();
        let inc = self.cfg.inclination_deg.to_radians();
        let (sin_u, cos_u) = u.sin_cos();
        let (sin_o, cos_o) = raan.sin_cos();
        let (sin_i, cos_i) = inc.sin_cos();
        let pos = [
            a * (cos_o * cos_u - sin_o * sin_u * cos_i),
            a * (sin_o * cos_u + cos_o * sin_u * cos_i),
            a * sin_u * sin_i,
        ];
        let v = a * n;
        let vel = [
            v * (-cos_o * sin_u - sin_o * cos_u * cos_i),
            v * (-sin_o * sin_u + cos_o * cos_u * cos_i),
            v * cos_u * sin_i,
        ];
        (pos, vel, u)
    }

    /// State of `sat` at time `t` seconds, in the Earth-fixed frame.
    pub fn propagate(&self, sat: SatId, t: f64) -> Result<SatelliteState, OrbitError> {
        if t < 0.0 {
            return Err(OrbitError::InvalidConfig(format!(
                "propagation time must be nonnegative, got {t}"
            )));
        }
        let el = self.elements_of(sat)?;
        let (pos_eci, vel_eci, u) = self.eci_state(el, t);
        let theta = EARTH_ROTATION_RAD_S * t;
        let (sin_t, cos_t) = theta.sin_cos();
        let rot = |p: Vec3| -> Vec3 {
            [
                cos_t * p[0] + sin_t * p[1],
                -sin_t * p[0] + cos_t * p[1],
                p[2],
            ]
        };
        let position = rot(pos_eci);
        let velocity = rot(vel_eci);
        Ok(SatelliteState {
            sat_id: sat,
            plane_index: el.plane,
            index_in_plane: el.index,
            position_ecef_km: position,
            velocity_kms: velocity,
            subpoint: GeodeticPoint::from_ecef_km(position),
            direction: direction_from_arg_lat(u),
        })
    }

    pub fn propagate_all(&self, t: f64) -> Result<Vec<SatelliteState>, OrbitError> {
        (0..self.elements.len() as u32)
            .map(|i| self.propagate(SatId(i), t))
            .collect()
    }
}

impl SatelliteView for Constellation {
    fn sat_ids(&self) -> Vec<SatId> {
        (0..self.elements.len() as u32).map(SatId).collect()
    }

    fn state_of(&self, sat: SatId, t: f64) -> Result<SatelliteState, OrbitError> {
        self.propagate(sat, t)
    }
}

fn direction_from_arg_lat(u_rad: f64) -> Direction {
    let u = u_rad.to_degrees().rem_euclid(360.0);
    if (90.0..270.0).contains(&u) {
        Direction::Descending
    } else {
        Direction::Ascending
    }
}

/// Travel direction of a propagated state.
pub fn travel_direction(state: &SatelliteState) -> Direction {
    state.direction
}

/// Ground-range radius within which a satellite at `altitude_km` is seen at
/// or above `min_elevation_deg`:
/// `Rg = Re * (acos((Re/(Re+h)) * cos e) - e)`.
pub fn coverage_radius_km(altitude_km: f64, min_elevation_deg: f64) -> f64 {
    let e = min_elevation_deg.to_radians();
    let ratio = EARTH_RADIUS_KM / (EARTH_RADIUS_KM + altitude_km);
    EARTH_RADIUS_KM * ((ratio * e.cos()).acos() - e)
}

/// Coverage radius expressed in degrees of arc at the Earth's surface.
pub fn coverage_radius_deg(altitude_km: f64, min_elevation_deg: f64) -> f64 {
    (coverage_radius_km(altitude_km, min_elevation_deg) / EARTH_RADIUS_KM).to_degrees()
}

/// All satellites whose elevation at `ue` is at or above `min_elev_deg`
/// (boundary inclusive).
pub fn visible_satellites(
    ue: &GeodeticPoint,
    states: &[SatelliteState],
    min_elev_deg: f64,
) -> Vec<SatId> {
    states
        .iter()
        .filter(|s| geo::elevation_deg(ue, s.position_ecef_km) >= min_elev_deg)
        .map(|s| s.sat_id)
        .collect()
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    sat_id: u32,
    t_seconds: f64,
    x_km: f64,
    y_km: f64,
    z_km: f64,
}

/// Time-stamped position samples replayed through the same interfaces as
/// analytic propagation. Positions between samples are linearly interpolated;
/// velocity is the segment slope.
#[derive(Debug, Clone)]
pub struct EphemerisTrace {
    samples: BTreeMap<SatId, Vec<(f64, Vec3)>>,
    /// Optional (num_planes, sats_per_plane) used to derive grid indices
    /// from satellite ids.
    grid_shape: Option<(u32, u32)>,
}

impl EphemerisTrace {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, OrbitError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut samples: BTreeMap<SatId, Vec<(f64, Vec3)>> = BTreeMap::new();
        for row in rdr.deserialize::<TraceRow>() {
            let row = row.map_err(|e| OrbitError::TraceParse(e.to_string()))?;
            samples
                .entry(SatId(row.sat_id))
                .or_default()
                .push((row.t_seconds, [row.x_km, row.y_km, row.z_km]));
        }
        if samples.is_empty() {
            return Err(OrbitError::TraceParse("trace contains no rows".into()));
        }
        for series in samples.values_mut() {
            series.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        Ok(Self {
            samples,
            grid_shape: None,
        })
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self, OrbitError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn with_grid_shape(mut self, num_planes: u32, sats_per_plane: u32) -> Self {
        self.grid_shape = Some((num_planes, sats_per_plane));
        self
    }
}

impl SatelliteView for EphemerisTrace {
    fn sat_ids(&self) -> Vec<SatId> {
        self.samples.keys().copied().collect()
    }

    fn state_of(&self, sat: SatId, t: f64) -> Result<SatelliteState, OrbitError> {
        let series = self
            .samples
            .get(&sat)
            .ok_or(OrbitError::UnknownSatellite(sat))?;
        let first = series.first().expect("non-empty series");
        let last = series.last().expect("non-empty series");
        if t < first.0 || t > last.0 {
            return Err(OrbitError::TraceOutOfRange { sat, t });
        }
        let idx = series.partition_point(|(ts, _)| *ts <= t);
        let (position, velocity) = if idx == series.len() {
            let (t0, p0) = series[series.len() - 2];
            let (t1, p1) = series[series.len() - 1];
            (p1, segment_velocity(t0, p0, t1, p1))
        } else if idx == 0 {
            // t equals the first sample exactly.
            if series.len() >= 2 {
                let (t0, p0) = series[0];
                let (t1, p1) = series[1];
                (p0, segment_velocity(t0, p0, t1, p1))
            } else {
                (series[0].1, [0.0, 0.0, 0.0])
            }
        } else {
            let (t0, p0) = series[idx - 1];
            let (t1, p1) = series[idx];
            let vel = segment_velocity(t0, p0, t1, p1);
            let f = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
            (geo::add(p0, geo::scale(geo::sub(p1, p0), f)), vel)
        };
        let (plane, index) = match self.grid_shape {
            Some((_, spp)) if spp > 0 => (sat.0 / spp, sat.0 % spp),
            _ => (0, sat.0),
        };
        Ok(SatelliteState {
            sat_id: sat,
            plane_index: plane,
            index_in_plane: index,
            position_ecef_km: position,
            velocity_kms: velocity,
            subpoint: GeodeticPoint::from_ecef_km(position),
            direction: trace_direction(position, velocity),
        })
    }
}

fn segment_velocity(t0: f64, p0: Vec3, t1: f64, p1: Vec3) -> Vec3 {
    if t1 > t0 {
        geo::scale(geo::sub(p1, p0), 1.0 / (t1 - t0))
    } else {
        [0.0, 0.0, 0.0]
    }
}

fn trace_direction(position: Vec3, velocity: Vec3) -> Direction {
    if velocity[2] > 0.0 {
        Direction::Ascending
    } else if velocity[2] < 0.0 {
        Direction::Descending
    } else if position[2] >= 0.0 {
        // Northern apex: the following motion heads south.
        Direction::Descending
    } else {
        Direction::Ascending
    }
}
