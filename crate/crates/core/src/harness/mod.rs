//! Experiment configuration, seeded sweeps, reports and state files.

pub mod config;
pub mod experiment;
pub mod io;

pub use config::{ConfigError, ExperimentConfig, OutputFormat};
pub use experiment::{run_experiment, run_trial, Aggregate, ExperimentError, ExperimentReport, TrialRecord};
