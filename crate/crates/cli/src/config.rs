//! TOML experiment configurations.

use std::path::Path;

use serde::{Deserialize, Serialize};

use quadsync_core::body::{TrialConfig, Variant};
use quadsync_core::evolve::{CpgProtocol, EvolutionConfig, FilterProtocol};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpgExperimentConfig {
    #[serde(default)]
    pub morphology: Variant,
    pub evolution: EvolutionConfig,
    #[serde(default)]
    pub protocol: CpgProtocol,
    #[serde(default)]
    pub trial: TrialConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterExperimentConfig {
    pub evolution: EvolutionConfig,
    #[serde(default)]
    pub protocol: FilterProtocol,
    #[serde(default)]
    pub trial: TrialConfig,
}

/// Reads and validates a TOML config. A missing file or a bad field is a
/// usage error.
pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {}", path.display(), e.message())))
}

impl CpgExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.evolution.validate().map_err(|e| CliError::Usage(format!("[evolution] {e}")))?;
        if self.evolution.objectives != 4 {
            return Err(CliError::Usage("[evolution] objectives must be 4 for CPG evolution".into()));
        }
        Ok(())
    }
}

impl FilterExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.evolution.validate().map_err(|e| CliError::Usage(format!("[evolution] {e}")))?;
        if self.evolution.objectives != 3 {
            return Err(CliError::Usage("[evolution] objectives must be 3 for filter evolution".into()));
        }
        Ok(())
    }
}
