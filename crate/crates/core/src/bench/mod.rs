//! Multi-trial experiment harness.

pub mod config;
pub mod output;
pub mod runner;
pub mod seeds;
pub mod stats;

pub use config::{ExperimentConfig, RegimePoint, SketchDim, SplitRegime};
pub use runner::{run_experiment, run_experiment_on, run_trial, ExperimentResult, PreparedDataset, RunOptions, Sweep};
pub use stats::{ci95, SummaryStat};
