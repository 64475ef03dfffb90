//! Algorithmic core of a pelvic-fracture instance segmentation benchmark.
//!
//! The crate is `no_std` and needs only `alloc`. It covers
//!
//! - the two-level fragment taxonomy and its label containers ([`taxonomy`], [`volume`]),
//! - IoU / HD95 / ASSD on cell grids ([`metrics`]),
//! - per-case fragment matching, penalties and anatomy scores ([`evaluation`]),
//! - leaderboards, bootstrap stability and paired significance tests ([`ranking`]),
//! - spectral DRR synthesis with projected multi-label masks ([`drr`]),
//! - synthetic fractured-pelvis phantoms and degraded predictions ([`phantom`]).
//!
//! File formats and the command line live in the `fracbench` crate.

#![no_std]

extern crate alloc;

pub mod drr;
pub mod error;
pub mod evaluation;
pub mod metrics;
pub mod phantom;
pub mod ranking;
pub mod taxonomy;
pub mod volume;

pub use error::{Error, Result};
