//! Scenario harness: configuration, the deterministic event loop, UE
//! mobility, metric aggregation, and the prediction benchmark.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub mod bench;
pub mod config;
pub mod engine;
pub mod metrics;
pub mod mobility;

pub use bench::{predict_bench, BenchReport};
pub use config::ScenarioConfig;
pub use engine::{measure_mean_pass_duration, run_scenario, ScenarioOutput};
pub use metrics::MetricsReport;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("sync layer error: {0}")]
    Sync(String),
    #[error(transparent)]
    Orbit(#[from] leosim_core::orbit::OrbitError),
    #[error(transparent)]
    Topology(#[from] leosim_core::topology::TopologyError),
    #[error(transparent)]
    Prediction(#[from] leosim_core::prediction::PredictionError),
    #[error(transparent)]
    Handover(#[from] leosim_core::handover::HandoverError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Write `records.csv` and `metrics.json` for a finished run; returns the
/// two paths.
pub fn write_outputs(
    dir: &Path,
    output: &ScenarioOutput,
) -> Result<(PathBuf, PathBuf), HarnessError> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join("records.csv");
    let json_path = dir.join("metrics.json");
    std::fs::write(&csv_path, metrics::records_to_csv(&output.records))?;
    let mut json = metrics::report_to_json(&output.report);
    json.push('\n');
    std::fs::write(&json_path, json)?;
    Ok((csv_path, json_path))
}
