//! Analysis core for bike-sharing usage data.
//!
//! Everything here is pure computation over in-memory values and builds
//! without `std` (it needs `alloc`). Parsing, file formats and the command
//! line live in the companion `bikeshare` crate.
//!
//! - [`ingest`]: trip records and availability snapshots to per-minute usage events
//! - [`timeseries`]: time-of-day usage distributions per day and direction
//! - [`divergence`]: KL and Jensen-Shannon divergences, pairwise matrices
//! - [`jsdnet`] and [`louvain`]: inverse-JSD networks and community detection
//! - [`rankdist`]: station rank distributions and truncated power-law fits
//! - [`rankmodel`]: weekday/weekend rank correspondence and its occupancy model

#![no_std]

extern crate alloc;

pub mod calendar;
pub mod divergence;
pub mod ingest;
pub mod jsdnet;
pub mod lm;
pub mod louvain;
mod math;
pub mod rankdist;
pub mod rankmodel;
pub mod timeseries;

pub use calendar::{Calendar, Day, DayClass};
pub use divergence::{js_divergence, kl_divergence, JsdMatrix};
pub use ingest::{StationId, StationSnapshot, TripRecord, UsageEvent};
pub use jsdnet::JsdNetwork;
pub use rankdist::{RankDistribution, RankFit};
pub use rankmodel::{RankCorrespondence, RankModelFit};
pub use timeseries::{DayDistribution, DayKey, Direction};
