//! Experiment runners, persistence and the command-line front end for
//! `fishnets-core`.
//!
//! A run is driven by an [`ExperimentConfig`] and writes everything under
//! one run directory: simulated datasets, checkpoints, loss histories,
//! residual and PIT blobs, and result tables. Each artifact records the
//! config hash and seed; rerunning a config reproduces it bit for bit.

pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod pipeline;
pub mod results;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
