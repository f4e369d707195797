//! Experiment runner behind the `starris` binary: configuration, parallel
//! trial execution and CSV output.

pub mod config;
pub mod error;
pub mod run;

pub use config::{ExperimentConfig, Scheme};
pub use error::CliError;
