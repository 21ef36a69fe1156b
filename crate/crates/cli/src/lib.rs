//! Experiment driver behind the `modcomp` binary: TOML configs and presets,
//! the subcommands, and the CSV/JSON tables they write.

pub mod commands;
pub mod config;
pub mod error;
pub mod presets;
pub mod table;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
