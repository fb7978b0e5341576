//! Monte-Carlo campaigns over the slot controller, with CSV/JSON export and a CLI.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod export;
pub mod instances;
pub mod summary;

pub use experiment::{run_experiment, run_experiment_serial, ExperimentOutput, SimError};
pub use summary::{Ecdf, ExperimentSummary};
