//! Scenario configuration: constellation source, ground stations, UE
//! population, schemes, calibration knobs, and error models. Loadable from
//! TOML or JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use leosim_core::handover::{Scheme, SchemeParams};
use leosim_core::orbit::ConstellationConfig;
use leosim_core::topology::{load_ground_stations_path, GroundStation, GsId};
use leosim_core::GeodeticPoint;

use crate::HarnessError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub duration_s: f64,
    #[serde(default = "default_delta_t")]
    pub delta_t_s: f64,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    pub constellation: ConstellationSource,
    /// Inline ground stations; alternative to `ground_stations_file`.
    #[serde(default)]
    pub ground_stations: Vec<GroundStationSpec>,
    /// CSV file with gs_id, lat_deg, lon_deg, attached_to_core.
    #[serde(default)]
    pub ground_stations_file: Option<PathBuf>,
    /// Ground station hosting the core; forces its attached flag.
    #[serde(default)]
    pub core_anchor: Option<String>,
    #[serde(default)]
    pub ue_groups: Vec<UeGroup>,
    #[serde(default)]
    pub params: SchemeParams,
    #[serde(default)]
    pub topology: TopologySpec,
    #[serde(default = "default_iterations")]
    pub binary_search_iterations: u32,
    /// Block size for the fast prediction; derived from the coverage
    /// geometry and the UE latitude span when absent.
    #[serde(default)]
    pub block_size_deg: Option<f64>,
    /// Satellites masked out (weather), by id.
    #[serde(default)]
    pub weather_unavailable: Vec<u32>,
    #[serde(default)]
    pub ephemeris_error: EphemerisErrorSpec,
    /// Record prediction wall time in the report. Off by default so reports
    /// stay byte-reproducible.
    #[serde(default)]
    pub record_timing: bool,
}

fn default_delta_t() -> f64 {
    5.0
}

fn default_iterations() -> u32 {
    9
}

fn default_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstellationSource {
    Preset { preset: String },
    File { file: PathBuf },
    Inline(ConstellationConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundStationSpec {
    pub gs_id: String,
    pub lat_deg: f64,
    pub lon_deg: f64,
    #[serde(default)]
    pub attached_to_core: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TopologySpec {
    /// Minimum elevation for ground-station links; constellation threshold
    /// when absent.
    #[serde(default)]
    pub gs_min_elevation_deg: Option<f64>,
    #[serde(default)]
    pub seam_open: bool,
    /// In-plane indices of core-hosting satellites (NTN-SMN anchors).
    #[serde(default = "default_smn_hosts")]
    pub smn_host_indices: Vec<u32>,
}

fn default_smn_hosts() -> Vec<u32> {
    vec![0]
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Region {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MobilitySpec {
    Stationary,
    GreatCircle {
        speed_mps: f64,
        /// Fixed initial bearing; drawn uniformly when absent.
        #[serde(default)]
        heading_deg: Option<f64>,
    },
}

impl Default for MobilitySpec {
    fn default() -> Self {
        MobilitySpec::Stationary
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UeGroup {
    pub count: u32,
    pub region: Region,
    #[serde(default = "default_strategy")]
    pub strategy: leosim_core::prediction::StrategyKind,
    #[serde(default)]
    pub direction_constrained: bool,
    #[serde(default)]
    pub mobility: MobilitySpec,
    /// Active UEs report their location on every uplink period; inactive
    /// ones stay silent for the whole inactivity window.
    #[serde(default = "default_active")]
    pub active: bool,
    #[serde(default = "default_uplink")]
    pub uplink_period_s: f64,
}

fn default_strategy() -> leosim_core::prediction::StrategyKind {
    leosim_core::prediction::StrategyKind::Flexible
}

fn default_active() -> bool {
    true
}

fn default_uplink() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EphemerisErrorSpec {
    #[default]
    None,
    /// Along-track error from daily-updated ephemeris, km sigma.
    Daily { sigma_km: f64 },
    /// Along-track error from minute-level ephemeris, meter sigma.
    Minute { sigma_m: f64 },
}

impl EphemerisErrorSpec {
    pub fn sigma_km(&self) -> f64 {
        match self {
            EphemerisErrorSpec::None => 0.0,
            EphemerisErrorSpec::Daily { sigma_km } => *sigma_km,
            EphemerisErrorSpec::Minute { sigma_m } => sigma_m / 1000.0,
        }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ScenarioConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)
                .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?,
            _ => toml::from_str(&text)
                .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn constellation_config(&self) -> Result<ConstellationConfig, HarnessError> {
        match &self.constellation {
            ConstellationSource::Preset { preset } => ConstellationConfig::preset(preset)
                .ok_or_else(|| {
                    HarnessError::InvalidConfig(format!("unknown constellation preset {preset:?}"))
                }),
            ConstellationSource::File { file } => {
                let text = std::fs::read_to_string(file)?;
                let cfg: ConstellationConfig =
                    match file.extension().and_then(|e| e.to_str()) {
                        Some("json") => serde_json::from_str(&text)
                            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?,
                        _ => toml::from_str(&text)
                            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?,
                    };
                Ok(cfg)
            }
            ConstellationSource::Inline(cfg) => Ok(cfg.clone()),
        }
    }

    pub fn ground_station_list(&self) -> Result<Vec<GroundStation>, HarnessError> {
        let mut list: Vec<GroundStation> = self
            .ground_stations
            .iter()
            .map(|g| GroundStation {
                gs_id: GsId(g.gs_id.clone()),
                location: GeodeticPoint::ground(g.lat_deg, g.lon_deg),
                attached_to_core: g.attached_to_core,
            })
            .collect();
        if let Some(path) = &self.ground_stations_file {
            list.extend(load_ground_stations_path(path)?);
        }
        if let Some(anchor) = &self.core_anchor {
            let gs = list
                .iter_mut()
                .find(|g| g.gs_id.0 == *anchor)
                .ok_or_else(|| {
                    HarnessError::InvalidConfig(format!(
                        "core anchor {anchor:?} is not in the ground station list"
                    ))
                })?;
            gs.attached_to_core = true;
        }
        Ok(list)
    }

    pub fn total_ues(&self) -> u32 {
        self.ue_groups.iter().map(|g| g.count).sum()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.duration_s <= 0.0 {
            return Err(HarnessError::InvalidConfig("duration must be positive".into()));
        }
        if self.delta_t_s <= 0.0 {
            return Err(HarnessError::InvalidConfig("delta_t must be positive".into()));
        }
        if self.schemes.is_empty() {
            return Err(HarnessError::InvalidConfig("schemes list is empty".into()));
        }
        if self.binary_search_iterations == 0 {
            return Err(HarnessError::InvalidConfig(
                "binary search needs at least one iteration".into(),
            ));
        }
        for g in &self.ue_groups {
            if g.region.lat_min > g.region.lat_max || g.region.lon_min > g.region.lon_max {
                return Err(HarnessError::InvalidConfig("degenerate UE region".into()));
            }
            if let MobilitySpec::GreatCircle { speed_mps, .. } = g.mobility {
                if speed_mps < 0.0 {
                    return Err(HarnessError::InvalidConfig("negative UE speed".into()));
                }
            }
            if g.uplink_period_s <= 0.0 {
                return Err(HarnessError::InvalidConfig(
                    "uplink period must be positive".into(),
                ));
            }
        }
        // The block-indexed prediction covers UEs up to 66 degrees of
        // latitude; reject populations that can wander beyond that.
        if self.max_reachable_lat_deg() > 66.0 {
            return Err(HarnessError::InvalidConfig(
                "UE population can exceed 66 degrees latitude; unsupported".into(),
            ));
        }
        Ok(())
    }

    /// Highest |latitude| any UE can reach over the run.
    pub fn max_reachable_lat_deg(&self) -> f64 {
        let mut max_lat: f64 = 0.0;
        for g in &self.ue_groups {
            let base = g.region.lat_min.abs().max(g.region.lat_max.abs());
            let drift = match g.mobility {
                MobilitySpec::Stationary => 0.0,
                MobilitySpec::GreatCircle { speed_mps, .. } => {
                    speed_mps * self.duration_s / 1000.0 / 111.19
                }
            };
            max_lat = max_lat.max(base + drift);
        }
        max_lat
    }
}
