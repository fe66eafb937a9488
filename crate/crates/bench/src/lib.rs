//! Config-driven experiment runner for the linbreg solvers.

pub mod config;
pub mod experiment;
pub mod metrics;

pub use config::{ConfigError, ExperimentConfig};
pub use experiment::{build, grad_check, run_experiment, BenchError, RunLog, RunSummary};
