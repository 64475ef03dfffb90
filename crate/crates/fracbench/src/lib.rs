//! File formats, result tables and command implementations for the
//! fracture segmentation benchmark.

pub mod commands;
pub mod error;
pub mod io;
pub mod results;
pub mod study;

pub use error::{Error, Result};
