//! Spherical-Earth geometry primitives shared by the other modules.
//!
//! The model deliberately uses a spherical Earth and circular orbits; the
//! constants below are the single source of truth for every module.

use serde::{Deserialize, Serialize};

/// Mean Earth radius in km (spherical model).
pub const EARTH_RADIUS_KM: f64 = 6371.0;
/// Gravitational parameter of Earth, km^3/s^2.
pub const MU_EARTH: f64 = 398600.4418;
/// Earth rotation rate, rad/s.
pub const EARTH_ROTATION_RAD_S: f64 = 7.2921159e-5;
/// Speed of light, km/s.
pub const SPEED_OF_LIGHT_KM_S: f64 = 299792.458;

pub type Vec3 = [f64; 3];

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn distance_km(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

/// A point on (or above) the spherical Earth.
///
/// Longitude is kept in the half-open interval [-180, 180).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodeticPoint {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub alt_km: f64,
}

impl GeodeticPoint {
    pub fn new(lat_deg: f64, lon_deg: f64, alt_km: f64) -> Self {
        Self {
            lat_deg,
            lon_deg: normalize_lon_deg(lon_deg),
            alt_km,
        }
    }

    /// Ground point at zero altitude.
    pub fn ground(lat_deg: f64, lon_deg: f64) -> Self {
        Self::new(lat_deg, lon_deg, 0.0)
    }

    pub fn to_ecef_km(&self) -> Vec3 {
        let r = EARTH_RADIUS_KM + self.alt_km;
        let lat = self.lat_deg.to_radians();
        let lon = self.lon_deg.to_radians();
        [
            r * lat.cos() * lon.cos(),
            r * lat.cos() * lon.sin(),
            r * lat.sin(),
        ]
    }

    pub fn from_ecef_km(p: Vec3) -> Self {
        let r = norm(p);
        let lat = (p[2] / r).asin().to_degrees();
        let lon = p[1].atan2(p[0]).to_degrees();
        Self::new(lat, lon, r - EARTH_RADIUS_KM)
    }

    /// Great-circle surface distance to another point, km.
    pub fn surface_distance_km(&self, other: &GeodeticPoint) -> f64 {
        let a = self.to_unit();
        let b = other.to_unit();
        let c = dot(a, b).clamp(-1.0, 1.0);
        EARTH_RADIUS_KM * c.acos()
    }

    /// Advance along the great circle with initial bearing `heading_deg`
    /// (clockwise from north) by `distance_km` of surface distance.
    pub fn great_circle_step(&self, heading_deg: f64, distance_km: f64) -> GeodeticPoint {
        let d = distance_km / EARTH_RADIUS_KM;
        let theta = heading_deg.to_radians();
        let lat1 = self.lat_deg.to_radians();
        let lon1 = self.lon_deg.to_radians();
        let lat2 = (lat1.sin() * d.cos() + lat1.cos() * d.sin() * theta.cos()).asin();
        let lon2 = lon1
            + (theta.sin() * d.sin() * lat1.cos()).atan2(d.cos() - lat1.sin() * lat2.sin());
        GeodeticPoint::new(lat2.to_degrees(), lon2.to_degrees(), self.alt_km)
    }

    /// Initial bearing (clockwise from north) of the great circle towards
    /// `other`, degrees in [0, 360).
    pub fn initial_bearing_deg(&self, other: &GeodeticPoint) -> f64 {
        let p1 = self.lat_deg.to_radians();
        let p2 = other.lat_deg.to_radians();
        let dl = (other.lon_deg - self.lon_deg).to_radians();
        let y = dl.sin() * p2.cos();
        let x = p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos();
        y.atan2(x).to_degrees().rem_euclid(360.0)
    }

    fn to_unit(&self) -> Vec3 {
        let lat = self.lat_deg.to_radians();
        let lon = self.lon_deg.to_radians();
        [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
    }
}

/// Normalize a longitude into [-180, 180). In-range values pass through
/// unchanged to keep them bit-exact.
pub fn normalize_lon_deg(lon: f64) -> f64 {
    if (-180.0..180.0).contains(&lon) {
        return lon;
    }
    let mut l = (lon + 180.0) % 360.0;
    if l < 0.0 {
        l += 360.0;
    }
    l - 180.0
}

/// Elevation angle in degrees of a satellite at `sat_ecef` as seen from `obs`.
///
/// Negative below the local horizon.
pub fn elevation_deg(obs: &GeodeticPoint, sat_ecef: Vec3) -> f64 {
    let o = obs.to_ecef_km();
    let up = scale(o, 1.0 / norm(o));
    let range = sub(sat_ecef, o);
    let r = norm(range);
    if r == 0.0 {
        return 90.0;
    }
    (dot(range, up) / r).clamp(-1.0, 1.0).asin().to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lon_normalization() {
        assert_eq!(normalize_lon_deg(180.0), -180.0);
        assert_eq!(normalize_lon_deg(-180.0), -180.0);
        assert_eq!(normalize_lon_deg(190.0), -170.0);
        assert_eq!(normalize_lon_deg(-190.0), 170.0);
        assert_eq!(normalize_lon_deg(540.0), -180.0);
        assert_eq!(normalize_lon_deg(20.3), 20.3);
    }

    #[test]
    fn elevation_at_zenith_and_antipode() {
        let ue = GeodeticPoint::ground(10.0, 20.0);
        let zenith = GeodeticPoint::new(10.0, 20.0, 550.0).to_ecef_km();
        assert!((elevation_deg(&ue, zenith) - 90.0).abs() < 1e-9);
        let antipode = GeodeticPoint::new(-10.0, -160.0, 550.0).to_ecef_km();
        assert!(elevation_deg(&ue, antipode) < 0.0);
    }

    #[test]
    fn great_circle_step_matches_surface_distance() {
        let p = GeodeticPoint::ground(25.0, 5.0);
        let q = p.great_circle_step(37.0, 150.0);
        assert!((p.surface_distance_km(&q) - 150.0).abs() < 1e-6);
    }

    #[test]
    fn great_circle_step_wraps_longitude() {
        let p = GeodeticPoint::ground(0.0, 179.5);
        let q = p.great_circle_step(90.0, 200.0);
        assert!(q.lon_deg < -178.0 && q.lon_deg >= -180.0);
    }
}
