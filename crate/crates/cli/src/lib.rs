//! Command-line front end: configuration parsing, the experiment runners
//! and their CSV/JSON artifacts.
//!
//! Every run leaves a `summary.json` matching [`summary::RESULT_SUMMARY_SCHEMA`]
//! next to its artifacts.

pub mod config;
pub mod error;
pub mod evaluate;
pub mod experiments;
pub mod output;
pub mod summary;
pub mod table1;

pub use config::{Experiment, ExperimentConfig};
pub use error::{exit, CliError, CliResult};
pub use summary::{Metrics, ResultSummary};
