use std::path::PathBuf;

use thiserror::Error;

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const GENERATION: i32 = 3;
    pub const DIVERGENCE: i32 = 4;
    pub const UNDEFINED_METRIC: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    ConfigFile {
        path: PathBuf,
        source: Box<CliError>,
    },

    #[error(transparent)]
    Core(#[from] modcomp::Error),

    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Toml(_) => exit::CONFIG,
            CliError::ConfigFile { source, .. } => source.exit_code(),
            CliError::Core(e) => core_exit_code(e),
            _ => exit::OTHER,
        }
    }
}

pub fn core_exit_code(e: &modcomp::Error) -> i32 {
    use modcomp::Error as E;
    match e.root() {
        E::Structural(_) => exit::CONFIG,
        E::Generation(_) => exit::GENERATION,
        E::Divergence { .. } | E::Numeric(_) => exit::DIVERGENCE,
        _ => exit::OTHER,
    }
}
