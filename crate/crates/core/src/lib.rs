//! Semi-simulated infrared small-target satellite video toolkit.
//!
//! The generator renders moving-platform background sequences with Gaussian
//! targets and instance annotations; `stats` and `metrics` measure datasets
//! and score detectors; `rfrops` holds reference alignment and modulation
//! kernels with gradient checks.

pub mod cli;
pub mod compose;
pub mod dataset;
pub mod error;
pub mod imggeo;
pub mod metrics;
pub mod motion;
pub mod rfrops;
pub mod rng;
pub mod spec;
pub mod stats;
pub mod target;

pub use error::{Error, Result};
