//! Experiment runner for curriculum-paced modality correlation learning:
//! config files, dataset and report formats, and the subcommands behind the
//! `corrcurr` binary.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod output;
pub mod replay;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
