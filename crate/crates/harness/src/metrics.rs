//! Metric aggregation and the CSV/JSON output formats.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use leosim_core::handover::{HandoverRecord, Scheme};

/// Latency statistics for one scheme.
#[derive(Debug, Clone, Serialize)]
pub struct SchemeStats {
    pub count: u64,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p99_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub mean_ue_ran_ms: f64,
    pub mean_ran_ran_ms: f64,
    pub mean_ran_core_ms: f64,
    pub max_ran_ran_ms: f64,
    /// Mean ping-stall time: handover latency plus one post-attachment
    /// UE-server round trip. Absent when the scenario has no core node.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_stall_ms: Option<f64>,
    /// Latency at percentiles 1..=100.
    pub cdf_ms: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub seed: u64,
    pub duration_s: f64,
    pub ue_count: u32,
    /// Distinct handover events (each costed under every scheme).
    pub handover_events: u64,
    pub abnormal_count: u64,
    pub abnormal_rate: f64,
    pub service_gap_epochs: u64,
    pub acquisitions: u64,
    /// Epochs where the table's routing target disagreed with the RAN
    /// serving satellite outside a handover's grace window.
    pub sync_mismatch_epochs: u64,
    pub sync_invariant_violations: u64,
    /// (event, scheme) pairs skipped because no path existed that epoch.
    pub failed_handovers: u64,
    pub failed_periodic_updates: u64,
    /// Set when the run aborted early; metrics cover the completed part.
    pub partial: bool,
    pub per_scheme: BTreeMap<String, SchemeStats>,
    /// Mean wall time of one periodic update, ms. Only recorded when the
    /// scenario asks for timing (wall clocks are not reproducible).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction_wall_ms_per_update: Option<f64>,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((q / 100.0) * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0u64;
    for v in values {
        sum += v;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Aggregate per-scheme statistics from the record stream. `stalls` runs
/// parallel to `records`.
pub fn scheme_stats(
    records: &[HandoverRecord],
    stalls: &[Option<f64>],
) -> BTreeMap<String, SchemeStats> {
    let mut per: BTreeMap<Scheme, Vec<(usize, &HandoverRecord)>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        per.entry(r.scheme).or_default().push((i, r));
    }
    let mut out = BTreeMap::new();
    for (scheme, indexed) in per {
        let recs: Vec<&HandoverRecord> = indexed.iter().map(|(_, r)| *r).collect();
        let mut latencies: Vec<f64> = recs.iter().map(|r| r.latency_ms).collect();
        latencies.sort_by(|a, b| a.total_cmp(b));
        let cdf_ms = (1..=100).map(|p| percentile(&latencies, p as f64)).collect();
        let scheme_stalls: Vec<f64> = indexed
            .iter()
            .filter_map(|(i, _)| stalls.get(*i).copied().flatten())
            .collect();
        out.insert(
            scheme.name().to_string(),
            SchemeStats {
                count: recs.len() as u64,
                mean_ms: mean(recs.iter().map(|r| r.latency_ms)),
                median_ms: percentile(&latencies, 50.0),
                p99_ms: percentile(&latencies, 99.0),
                min_ms: latencies.first().copied().unwrap_or(f64::NAN),
                max_ms: latencies.last().copied().unwrap_or(f64::NAN),
                mean_ue_ran_ms: mean(recs.iter().map(|r| r.breakdown.ue_ran_ms)),
                mean_ran_ran_ms: mean(recs.iter().map(|r| r.breakdown.ran_ran_ms)),
                mean_ran_core_ms: mean(recs.iter().map(|r| r.breakdown.ran_core_ms)),
                max_ran_ran_ms: recs
                    .iter()
                    .map(|r| r.breakdown.ran_ran_ms)
                    .fold(f64::NEG_INFINITY, f64::max),
                mean_stall_ms: if scheme_stalls.is_empty() {
                    None
                } else {
                    Some(mean(scheme_stalls.iter().copied()))
                },
                cdf_ms,
            },
        );
    }
    out
}

/// CSV serialization of the record stream, one row per (event, scheme).
pub fn records_to_csv(records: &[HandoverRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 96 + 128);
    out.push_str(
        "scheme,ue_id,source_sat,target_sat,t_trigger_s,latency_ms,ue_ran_ms,ran_ran_ms,ran_core_ms,abnormal\n",
    );
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            r.scheme.name(),
            r.ue_id.0,
            r.source_sat.0,
            r.target_sat.0,
            r.t_trigger_s,
            r.latency_ms,
            r.breakdown.ue_ran_ms,
            r.breakdown.ran_ran_ms,
            r.breakdown.ran_core_ms,
            r.abnormal
        );
    }
    out
}

pub fn report_to_json(report: &MetricsReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}
