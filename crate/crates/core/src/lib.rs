//! Core model for a regenerative-mode LEO mobile satellite network.
//!
//! The crate is organized around the pieces a handover study needs:
//!
//! - [`orbit`]: Walker-style constellations, circular-orbit propagation,
//!   ephemeris trace replay, and visibility geometry.
//! - [`topology`]: the +Grid ISL graph with ground stations and a core node,
//!   plus delay-weighted shortest paths.
//! - [`prediction`]: access-satellite selection strategies and the
//!   block-indexed fast access map prediction.
//! - [`sync`]: the UPF-side synchronized table with periodic updates,
//!   binary-search trigger prediction, and downlink routing lookups.
//! - [`handover`]: the four handover schemes as timed message sequences
//!   producing per-phase latency breakdowns.

pub mod geo;
pub mod handover;
pub mod orbit;
pub mod prediction;
pub mod sync;
pub mod topology;

pub use geo::GeodeticPoint;
pub use orbit::{
    build_walker_constellation, coverage_radius_km, visible_satellites, Constellation,
    ConstellationConfig, Direction, EphemerisTrace, SatId, SatelliteState, SatelliteView,
};
pub use prediction::{AccessMap, AccessStrategy, BlockIndex, StrategyKind, UeId, WeatherMask};
pub use sync::{SyncEntry, SyncTable, TunnelRef};
pub use topology::{build_isl_grid, propagation_delay_ms, GroundStation, GsId, IslGraph, NodeId};
