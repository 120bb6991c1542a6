//! Controller files: a CPG genome, optionally a filter genome, and the
//! measurements later commands need.

use std::path::Path;

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};

use quadsync_core::body::{MorphologyParams, Variant};
use quadsync_core::genome::{decode_cpg, decode_filter, CpgParameters, Genome, GenomeKind, GenomeRecord};
use quadsync_core::stimulus::FilterWiring;

pub const CONTROLLER_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Controller {
    pub schema_version: u32,
    pub name: String,
    pub morphology: Variant,
    pub cpg: GenomeRecord,
    /// Median CPG objectives from the final evaluation.
    #[serde(default)]
    pub cpg_fitness: Option<Vec<f64>>,
    /// Walking period at `theta_C = 0`, `I_DC = 0.5` (s); absent when the
    /// CPG shows no measurable rhythm.
    pub natural_period: Option<f64>,
    #[serde(default)]
    pub filter: Option<GenomeRecord>,
    #[serde(default)]
    pub filter_fitness: Option<Vec<f64>>,
}

impl Controller {
    pub fn new(name: impl Into<String>, morphology: Variant, cpg_alleles: Vec<u8>) -> Self {
        Self {
            schema_version: CONTROLLER_SCHEMA_VERSION,
            name: name.into(),
            morphology,
            cpg: record(GenomeKind::Cpg, cpg_alleles),
            cpg_fitness: None,
            natural_period: None,
            filter: None,
            filter_fitness: None,
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading controller {}", path.display()))?;
        let c: Self = serde_json::from_str(&text).with_context(|| format!("parsing controller {}", path.display()))?;
        if c.schema_version != CONTROLLER_SCHEMA_VERSION {
            return Err(anyhow!("controller schema {} is not the supported {}", c.schema_version, CONTROLLER_SCHEMA_VERSION));
        }
        Ok(c)
    }

    pub fn to_json(&self) -> anyhow::Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn morphology_params(&self) -> MorphologyParams {
        MorphologyParams::for_variant(self.morphology)
    }

    pub fn cpg_params(&self) -> anyhow::Result<CpgParameters> {
        let genome = self.cpg.clone().into_genome()?;
        if genome.kind != GenomeKind::Cpg {
            return Err(anyhow!("controller {} has a {} genome in its cpg slot", self.name, genome.kind.name()));
        }
        Ok(decode_cpg(&genome)?)
    }

    pub fn filter_wiring(&self) -> anyhow::Result<FilterWiring> {
        let rec = self.filter.clone().ok_or_else(|| anyhow!("controller {} has no filter", self.name))?;
        let genome = rec.into_genome()?;
        if genome.kind != GenomeKind::Filter {
            return Err(anyhow!("controller {} has a {} genome in its filter slot", self.name, genome.kind.name()));
        }
        Ok(decode_filter(&genome)?)
    }

    pub fn require_period(&self) -> anyhow::Result<f64> {
        self.natural_period.ok_or_else(|| {
            anyhow!(
                "CPG {} has no measurable walking period, so an input period could not be determined",
                self.name
            )
        })
    }
}

pub fn record(kind: GenomeKind, alleles: Vec<u8>) -> GenomeRecord {
    GenomeRecord {
        kind,
        map_version: kind.param_map().version_hash(),
        alleles,
    }
}

pub fn genome(kind: GenomeKind, alleles: &[u8]) -> anyhow::Result<Genome> {
    Ok(Genome::new(kind, alleles.to_vec())?)
}
