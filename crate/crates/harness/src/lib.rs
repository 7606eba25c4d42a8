//! Experiment harness: configuration files, model generators, the
//! pipelines behind each CLI subcommand, and CSV/JSON reports.

pub mod config;
pub mod error;
pub mod experiments;
pub mod generate;
pub mod report;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{HarnessError, Result};
pub use experiments::{run_experiment, RunOutput};
pub use report::{emit_report, write_report, Check, Format, Record};
