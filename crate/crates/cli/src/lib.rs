//! Experiment orchestration behind the `quadsync` binary: configuration,
//! experiment directories with replayable manifests, and the commands.

pub mod commands;
pub mod config;
pub mod controller;
pub mod manifest;

use std::fmt;

/// Usage errors exit with status 2, everything else with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Failure(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Failure(e)
    }
}

impl From<quadsync_core::Error> for CliError {
    fn from(e: quadsync_core::Error) -> Self {
        CliError::Failure(e.into())
    }
}
