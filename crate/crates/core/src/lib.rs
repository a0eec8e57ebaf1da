//! Discrete-event simulator for social video propagation and social-aware
//! content delivery.
//!
//! Videos spread over a region-annotated friendship graph following an
//! extended SIR model (safe, susceptible, infected, immune, recovered,
//! infectious). The resulting propagation trees drive:
//!
//! * multi-level online popularity prediction ([`popularity`]),
//! * edge-server replication steered by the geographic influence index
//!   ([`delivery`]),
//! * mobility-aware device-to-device carrier selection ([`d2d`]),
//!
//! and [`analysis`] reproduces the propagation signatures (re-share lag law,
//! distance CDFs by popularity class, size vs. clustering correlation).
//! [`runner`] ties everything together behind a seeded scenario config.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod d2d;
pub mod delivery;
pub mod error;
pub mod graph;
pub mod logs;
pub mod popularity;
pub mod propagation;
pub mod runner;
pub mod seed;

pub use error::{Error, Result};

/// Simulation timeslot index. One slot is one hour.
pub type Slot = u64;
pub type UserId = u32;
pub type RegionId = u32;
pub type VideoId = u32;
