//! Monte-Carlo experiment runner and its outputs.

pub mod config;
pub mod emit;
pub mod report;
pub mod runner;
pub mod verify;

pub use config::{ExperimentConfig, PolicyEntry};
pub use emit::{emit_csv, emit_json, load_json};
pub use report::{gap_histogram, GapRow, PolicySummary, RegretReport};
pub use runner::{estimate_bayesian_regret, run_replicate, ExperimentResult, RegretTrace, RunOptions};
