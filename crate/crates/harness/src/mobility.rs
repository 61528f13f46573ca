//! UE state and the great-circle mobility model.

use leosim_core::prediction::{AccessStrategy, UeId};
use leosim_core::GeodeticPoint;

use crate::config::MobilitySpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mobility {
    Stationary,
    GreatCircle { speed_mps: f64, heading_deg: f64 },
}

impl Mobility {
    pub fn from_spec(spec: &MobilitySpec, drawn_heading_deg: f64) -> Self {
        match spec {
            MobilitySpec::Stationary => Mobility::Stationary,
            MobilitySpec::GreatCircle { speed_mps, heading_deg } => Mobility::GreatCircle {
                speed_mps: *speed_mps,
                heading_deg: heading_deg.unwrap_or(drawn_heading_deg),
            },
        }
    }

    pub fn speed_mps(&self) -> f64 {
        match self {
            Mobility::Stationary => 0.0,
            Mobility::GreatCircle { speed_mps, .. } => *speed_mps,
        }
    }
}

/// One simulated terminal.
#[derive(Debug, Clone)]
pub struct UeState {
    pub ue_id: UeId,
    pub position: GeodeticPoint,
    pub mobility: Mobility,
    pub strategy: AccessStrategy,
    pub active: bool,
    pub uplink_period_s: f64,
}

/// Advance a position along the great circle defined by its current heading.
/// The heading is held fixed over the step.
pub fn step_mobility(position: &GeodeticPoint, mobility: &Mobility, dt_s: f64) -> GeodeticPoint {
    match mobility {
        Mobility::Stationary => *position,
        Mobility::GreatCircle { speed_mps, heading_deg } => {
            if *speed_mps == 0.0 {
                return *position;
            }
            position.great_circle_step(*heading_deg, speed_mps * dt_s / 1000.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_speed_is_identity() {
        let p = GeodeticPoint::ground(12.0, 34.0);
        let m = Mobility::GreatCircle { speed_mps: 0.0, heading_deg: 90.0 };
        assert_eq!(step_mobility(&p, &m, 600.0), p);
        assert_eq!(step_mobility(&p, &Mobility::Stationary, 600.0), p);
    }

    #[test]
    fn airplane_covers_150_km_in_ten_minutes() {
        let p = GeodeticPoint::ground(25.0, 5.0);
        let m = Mobility::GreatCircle { speed_mps: 250.0, heading_deg: 63.0 };
        let q = step_mobility(&p, &m, 600.0);
        assert!((p.surface_distance_km(&q) - 150.0).abs() < 1e-6);
    }

    #[test]
    fn longitude_wraps_across_the_antimeridian() {
        let p = GeodeticPoint::ground(10.0, 179.95);
        let m = Mobility::GreatCircle { speed_mps: 250.0, heading_deg: 90.0 };
        let q = step_mobility(&p, &m, 600.0);
        assert!(q.lon_deg >= -180.0 && q.lon_deg < -178.0);
    }
}
