//! Wall-time measurement of one periodic table update over a synthetic
//! population.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use leosim_core::orbit::{build_walker_constellation, coverage_radius_deg, ConstellationConfig};
use leosim_core::prediction::{AccessStrategy, StrategyKind, UeId, WeatherMask};
use leosim_core::sync::{SyncConfig, SyncTable, UeEvent};
use leosim_core::GeodeticPoint;

use crate::HarnessError;

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub preset: String,
    pub strategy: StrategyKind,
    pub users: u32,
    pub updates_timed: u32,
    /// Mean wall time of one periodic update (prediction plus trigger
    /// searches), ms.
    pub wall_ms_per_update: f64,
    pub registration_ms: f64,
}

/// Time `updates` periodic updates of a table serving `users` synthetic UEs.
pub fn predict_bench(
    users: u32,
    strategy: StrategyKind,
    preset: &ConstellationConfig,
    seed: u64,
    updates: u32,
) -> Result<BenchReport, HarnessError> {
    if users == 0 {
        return Err(HarnessError::InvalidConfig("need at least one user".into()));
    }
    let constellation = build_walker_constellation(preset)?;
    let mask = WeatherMask::all_available();
    let radius_deg = coverage_radius_deg(preset.altitude_km, preset.min_elevation_deg);
    let block = radius_deg / 55f64.to_radians().cos() + 0.01;
    let cfg = SyncConfig {
        delta_t_s: 5.0,
        iterations: 9,
        min_elev_deg: preset.min_elevation_deg,
        block_size_deg: block,
    };
    let mut table = SyncTable::new(0.0, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let events: Vec<(UeId, UeEvent)> = (0..users)
        .map(|i| {
            let position = GeodeticPoint::ground(
                rng.random_range(-55.0..55.0),
                rng.random_range(-180.0..180.0),
            );
            (
                UeId(i),
                UeEvent::Register {
                    position,
                    strategy: AccessStrategy {
                        kind: strategy,
                        direction_constrained: false,
                    },
                },
            )
        })
        .collect();
    let reg_start = Instant::now();
    table
        .apply_events(&events, 0.0, &constellation, &mask)
        .map_err(|e| HarnessError::Sync(e.to_string()))?;
    let registration_ms = reg_start.elapsed().as_secs_f64() * 1000.0;

    let mut total_ms = 0.0;
    for k in 1..=updates {
        let t = k as f64 * 5.0;
        let start = Instant::now();
        table
            .periodic_update(t, &constellation, &mask)
            .map_err(|e| HarnessError::Sync(e.to_string()))?;
        total_ms += start.elapsed().as_secs_f64() * 1000.0;
    }
    Ok(BenchReport {
        preset: preset.name.clone(),
        strategy,
        users,
        updates_timed: updates,
        wall_ms_per_update: total_ms / updates as f64,
        registration_ms,
    })
}
