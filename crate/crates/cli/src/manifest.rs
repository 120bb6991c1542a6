//! Experiment directories and the manifest that makes them re-runnable.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use quadsync_core::analysis::WalkRule;
use quadsync_core::body::{TrialConfig, Variant};
use quadsync_core::evolve::{EntrainmentDemo, CHECKPOINT_SCHEMA_VERSION};
use quadsync_core::genome::GenomeKind;

use crate::config::{CpgExperimentConfig, FilterExperimentConfig};
use crate::controller::Controller;
use crate::CliError;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything a command needs apart from its input files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    EvolveCpg {
        config: CpgExperimentConfig,
    },
    EvolveFilter {
        config: FilterExperimentConfig,
        controller: Controller,
    },
    /// Continues `base` from the checkpoint stored as input `start.json`.
    Resume {
        base: Box<Command>,
        start_generation: usize,
    },
    /// Representatives of the final population stored as input `final.json`.
    Reps {
        morphology: Variant,
        trial: TrialConfig,
        period_trial: f64,
        i_dc: f64,
        seed: u64,
    },
    Trial {
        controller: Controller,
        i_dc: f64,
        theta_c: f64,
        length: f64,
        seed: u64,
        trial: TrialConfig,
    },
    Sweep {
        controller: Controller,
        i_dc: Vec<f64>,
        theta_c: Vec<f64>,
        length: f64,
        seed: u64,
        max_lag: f64,
        trial: TrialConfig,
    },
    Entrain {
        controller: Controller,
        demo: EntrainmentDemo,
        /// Explicit impulse times replacing the generated train.
        impulses: Option<Vec<f64>>,
        trial: TrialConfig,
    },
    /// Gait analysis of the motor CSVs stored as inputs.
    Analyze {
        files: Vec<String>,
        threshold: f64,
        walk_rule: WalkRule,
        max_lag: f64,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::EvolveCpg { .. } => "evolve-cpg",
            Command::EvolveFilter { .. } => "evolve-filter",
            Command::Resume { .. } => "resume",
            Command::Reps { .. } => "reps",
            Command::Trial { .. } => "trial",
            Command::Sweep { .. } => "sweep",
            Command::Entrain { .. } => "entrain",
            Command::Analyze { .. } => "analyze",
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        match self {
            Command::EvolveCpg { config } => vec![config.evolution.seed],
            Command::EvolveFilter { config, .. } => vec![config.evolution.seed],
            Command::Resume { base, .. } => base.seeds(),
            Command::Reps { seed, .. } | Command::Trial { seed, .. } | Command::Sweep { seed, .. } => vec![*seed],
            Command::Entrain { demo, .. } => vec![demo.seed],
            Command::Analyze { .. } => Vec::new(),
        }
    }

    pub fn morphology(&self) -> Option<Variant> {
        match self {
            Command::EvolveCpg { config } => Some(config.morphology),
            Command::EvolveFilter { controller, .. }
            | Command::Trial { controller, .. }
            | Command::Sweep { controller, .. }
            | Command::Entrain { controller, .. } => Some(controller.morphology),
            Command::Resume { base, .. } => base.morphology(),
            Command::Reps { morphology, .. } => Some(*morphology),
            Command::Analyze { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    /// Hash of the command and its inputs.
    pub experiment_id: String,
    /// Hash of the package version and the genome and checkpoint formats.
    pub software_version: String,
    pub command: Command,
    pub seeds: Vec<u64>,
    pub morphology: Option<Variant>,
    /// Input files, stored under `inputs/`.
    pub inputs: Vec<String>,
    /// Every file written, relative to the experiment directory.
    pub artifacts: Vec<String>,
    #[serde(default)]
    pub notes: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        let m: Self = serde_json::from_str(&text)?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            anyhow::bail!("manifest schema {} is not the supported {}", m.schema_version, MANIFEST_SCHEMA_VERSION);
        }
        Ok(m)
    }

    /// Reads the input files of the experiment in `dir`.
    pub fn load_inputs(&self, dir: &Path) -> anyhow::Result<Inputs> {
        let mut inputs = Inputs::new();
        for name in &self.inputs {
            let path = dir.join("inputs").join(name);
            let bytes = fs::read(&path).map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
            inputs.insert(name.clone(), bytes);
        }
        Ok(inputs)
    }
}

pub type Inputs = BTreeMap<String, Vec<u8>>;

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn software_version() -> String {
    let mut h = Sha256::new();
    h.update(env!("CARGO_PKG_VERSION"));
    for kind in [GenomeKind::Cpg, GenomeKind::Filter] {
        h.update(kind.param_map().version_hash());
    }
    h.update(CHECKPOINT_SCHEMA_VERSION.to_le_bytes());
    format!("{}+{}", env!("CARGO_PKG_VERSION"), &hex(&h.finalize())[..12])
}

pub fn experiment_id(command: &Command, inputs: &Inputs) -> anyhow::Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(command)?);
    for (name, bytes) in inputs {
        h.update(name.as_bytes());
        h.update(Sha256::digest(bytes));
    }
    Ok(hex(&h.finalize())[..16].to_string())
}

/// A fresh experiment directory that records every file written to it.
pub struct OutputDir {
    root: PathBuf,
    artifacts: Vec<String>,
}

impl OutputDir {
    /// Fails if `root` already exists; previous experiments are never touched.
    pub fn create(root: &Path) -> Result<Self, CliError> {
        if root.exists() {
            return Err(CliError::Usage(format!("output directory {} already exists", root.display())));
        }
        fs::create_dir_all(root).map_err(|e| CliError::Failure(anyhow::anyhow!("cannot create {}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> std::io::Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut f = fs::OpenOptions::new().write(true).create_new(true).open(&path)?;
        f.write_all(contents.as_ref())?;
        self.artifacts.push(rel.to_string());
        Ok(())
    }

    pub fn artifacts(&self) -> &[String] {
        &self.artifacts
    }
}
