//! Scenario loading, command execution and report writing for `sbc-mech`.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use thiserror::Error;

pub use commands::{execute, Command, Outcome, Sweep};
pub use config::{load_config, ConfigError, ScenarioConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n"))]
    Config(Vec<ConfigError>),

    #[error(transparent)]
    Model(#[from] sbc_core::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("unknown sweep parameter `{0}`; expected one of {keys}", keys = sbc_core::ParamSet::SCALAR_KEYS.join(", "))]
    UnknownSweepKey(String),
}
