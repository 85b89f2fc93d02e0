//! Experiment harness around `rtnet-core`: configuration files, dataset
//! and checkpoint persistence, CSV metrics, and the subcommand
//! implementations behind the `rtnet` binary.

pub mod checkpoint;
pub mod config;
pub mod dataset_io;
pub mod error;
pub mod metrics;
pub mod run;

pub use config::{ExperimentConfig, Overrides, SweepAxis};
pub use error::{CliError, Result};
