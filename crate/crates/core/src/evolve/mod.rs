//! Generational NSGA-III over integer genomes, with seeded, order-stable
//! parallel evaluation and resumable checkpoints.

mod nsga3;
mod protocol;

pub use nsga3::{dominates, hypervolume_2d, nondominated_sort, nsga3_select, reference_point_count, reference_points, vary, SelectOptions};
pub use protocol::*;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::{random_alleles, GenomeKind};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    pub population: usize,
    pub partitions: usize,
    pub objectives: usize,
    pub generations: usize,
    pub p_crossover: f64,
    pub p_mutation: f64,
    /// Seeded evaluations per individual; objectives are medians.
    pub evaluations: usize,
    /// Seeded evaluations of the final population.
    pub final_evaluations: usize,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub preserve_objective_champions: bool,
}

fn default_true() -> bool {
    true
}

impl EvolutionConfig {
    pub fn cpg_default() -> Self {
        Self {
            population: 168,
            partitions: 8,
            objectives: 4,
            generations: 200,
            p_crossover: 0.7,
            p_mutation: 0.05,
            evaluations: 3,
            final_evaluations: 15,
            seed: 0,
            preserve_objective_champions: true,
        }
    }

    pub fn filter_default() -> Self {
        Self {
            population: 92,
            partitions: 12,
            objectives: 3,
            generations: 150,
            p_crossover: 1.0,
            p_mutation: 0.05,
            evaluations: 1,
            final_evaluations: 5,
            seed: 0,
            preserve_objective_champions: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population < 2 || self.evaluations == 0 || self.final_evaluations == 0 {
            return Err(Error::Config("population must be at least 2 and evaluation counts positive".into()));
        }
        if !(0.0..=1.0).contains(&self.p_crossover) || !(0.0..=1.0).contains(&self.p_mutation) {
            return Err(Error::Config("variation probabilities must lie in [0, 1]".into()));
        }
        if self.objectives < 2 || self.partitions == 0 {
            return Err(Error::Config("need at least 2 objectives and 1 partition".into()));
        }
        Ok(())
    }
}

/// One seeded evaluation: objectives to maximise plus named diagnostics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub objectives: Vec<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalContext {
    pub generation: usize,
    pub seed: u64,
    /// Final re-evaluation of the last population.
    pub final_stage: bool,
}

/// A fitness protocol. Implementations must be pure functions of the
/// alleles and the context so results do not depend on scheduling.
pub trait Evaluator: Sync {
    fn genome_kind(&self) -> GenomeKind;
    fn genome_len(&self) -> usize;
    fn objectives(&self) -> usize;
    fn evaluate(&self, alleles: &[u8], ctx: &EvalContext) -> Result<Evaluation>;
    /// Substituted when an evaluation returns an error.
    fn worst_case(&self) -> Evaluation;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub alleles: Vec<u8>,
    pub fitness: Vec<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub failed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub generation: usize,
    pub max: Vec<f64>,
    pub median: Vec<f64>,
    pub failures: usize,
}

impl GenerationSummary {
    pub fn of(generation: usize, population: &[Individual]) -> Self {
        let m = population.first().map_or(0, |p| p.fitness.len());
        let column = |j: usize| population.iter().map(|p| p.fitness[j]).collect::<Vec<f64>>();
        Self {
            generation,
            max: (0..m).map(|j| column(j).into_iter().fold(f64::NEG_INFINITY, f64::max)).collect(),
            median: (0..m).map(|j| median(&column(j))).collect(),
            failures: population.iter().filter(|p| p.failed).count(),
        }
    }
}

/// Complete evolution state after a generation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub genome_kind: GenomeKind,
    pub generation: usize,
    pub config: EvolutionConfig,
    pub population: Vec<Individual>,
    pub history: Vec<GenerationSummary>,
    pub rng: ChaCha8Rng,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cp: Self = serde_json::from_str(text)?;
        if cp.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "checkpoint schema {} is not the supported {}",
                cp.schema_version, CHECKPOINT_SCHEMA_VERSION
            )));
        }
        Ok(cp)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvolutionOutcome {
    pub history: Vec<GenerationSummary>,
    pub population: Vec<Individual>,
    /// The last population re-evaluated over `final_evaluations` seeds.
    pub final_population: Vec<Individual>,
}

/// Median; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable seed for a labelled sub-stream of `base`.
pub fn derive_seed(base: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(splitmix(base), |acc, &l| splitmix(acc ^ splitmix(l)))
}

const FINAL_STAGE_LABEL: u64 = u64::MAX;

/// Evaluates every genome over `seeds` seeded runs in parallel; results
/// come back in input order.
pub fn evaluate_population<E: Evaluator + ?Sized>(
    evaluator: &E,
    genomes: &[Vec<u8>],
    generation: usize,
    base_seed: u64,
    seeds: usize,
    final_stage: bool,
) -> Vec<Individual> {
    let jobs: Vec<(usize, usize)> = (0..genomes.len()).flat_map(|i| (0..seeds).map(move |k| (i, k))).collect();
    let stage = if final_stage { FINAL_STAGE_LABEL } else { generation as u64 };
    let results: Vec<Result<Evaluation>> = jobs
        .par_iter()
        .map(|&(i, k)| {
            let ctx = EvalContext {
                generation,
                seed: derive_seed(base_seed, &[stage, i as u64, k as u64]),
                final_stage,
            };
            evaluator.evaluate(&genomes[i], &ctx)
        })
        .collect();
    let mut results = results.into_iter();
    genomes
        .iter()
        .map(|g| {
            let runs: Vec<Result<Evaluation>> = results.by_ref().take(seeds).collect();
            aggregate(g, runs, evaluator)
        })
        .collect()
}

fn aggregate<E: Evaluator + ?Sized>(alleles: &[u8], runs: Vec<Result<Evaluation>>, evaluator: &E) -> Individual {
    let failed = runs.iter().any(|r| r.is_err() || r.as_ref().is_ok_and(|e| e.objectives.iter().any(|v| !v.is_finite())));
    if failed {
        let worst = evaluator.worst_case();
        return Individual {
            alleles: alleles.to_vec(),
            fitness: worst.objectives,
            details: worst.details,
            failed: true,
        };
    }
    let evals: Vec<Evaluation> = runs.into_iter().map(|r| r.expect("checked above")).collect();
    let m = evals[0].objectives.len();
    let fitness = (0..m).map(|j| median(&evals.iter().map(|e| e.objectives[j]).collect::<Vec<_>>())).collect();
    let mut keys: Vec<&String> = evals.iter().flat_map(|e| e.details.keys()).collect();
    keys.sort();
    keys.dedup();
    let details = keys
        .into_iter()
        .map(|k| {
            let vals: Vec<f64> = evals.iter().filter_map(|e| e.details.get(k)).copied().filter(|v| v.is_finite()).collect();
            (k.clone(), median(&vals))
        })
        .filter(|(_, v)| v.is_finite())
        .collect();
    Individual {
        alleles: alleles.to_vec(),
        fitness,
        details,
        failed: false,
    }
}

/// Random initial population, evaluated as generation 0.
pub fn initial_checkpoint<E: Evaluator + ?Sized>(config: &EvolutionConfig, evaluator: &E) -> Result<Checkpoint> {
    config.validate()?;
    if evaluator.objectives() != config.objectives {
        return Err(Error::Config(format!(
            "config has {} objectives, evaluator produces {}",
            config.objectives,
            evaluator.objectives()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let genomes: Vec<Vec<u8>> = (0..config.population)
        .map(|_| random_alleles(evaluator.genome_kind(), evaluator.genome_len(), &mut rng).alleles)
        .collect();
    let population = evaluate_population(evaluator, &genomes, 0, config.seed, config.evaluations, false);
    let history = vec![GenerationSummary::of(0, &population)];
    Ok(Checkpoint {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        genome_kind: evaluator.genome_kind(),
        generation: 0,
        config: config.clone(),
        population,
        history,
        rng,
    })
}

/// Advances a checkpoint by one generation.
pub fn next_generation<E: Evaluator + ?Sized>(state: &Checkpoint, evaluator: &E, refs: &[Vec<f64>]) -> Result<Checkpoint> {
    let config = &state.config;
    let mut rng = state.rng.clone();
    let generation = state.generation + 1;
    let parents: Vec<Vec<u8>> = state.population.iter().map(|p| p.alleles.clone()).collect();
    let children = vary(&parents, config.p_crossover, config.p_mutation, &mut rng);
    let offspring = evaluate_population(evaluator, &children, generation, config.seed, config.evaluations, false);
    let pool: Vec<Individual> = state.population.iter().cloned().chain(offspring).collect();
    let fitness: Vec<Vec<f64>> = pool.iter().map(|p| p.fitness.clone()).collect();
    let opts = SelectOptions {
        preserve_objective_champions: config.preserve_objective_champions,
    };
    let mut survivors = nsga3_select(&fitness, refs, config.population, opts, &mut rng)?;
    survivors.sort_unstable();
    let population: Vec<Individual> = survivors.into_iter().map(|i| pool[i].clone()).collect();
    let mut history = state.history.clone();
    history.push(GenerationSummary::of(generation, &population));
    Ok(Checkpoint {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        genome_kind: state.genome_kind,
        generation,
        config: config.clone(),
        population,
        history,
        rng,
    })
}

/// Continues from `state` until `state.config.generations`, calling
/// `observer` after each generation, then re-evaluates the final population.
pub fn resume_evolution<E, F>(state: Checkpoint, evaluator: &E, mut observer: F) -> Result<EvolutionOutcome>
where
    E: Evaluator + ?Sized,
    F: FnMut(&Checkpoint) -> Result<()>,
{
    if state.genome_kind != evaluator.genome_kind() {
        return Err(Error::Config("checkpoint genome kind does not match the evaluator".into()));
    }
    let refs = reference_points(state.config.objectives, state.config.partitions)?;
    let mut state = state;
    while state.generation < state.config.generations {
        state = next_generation(&state, evaluator, &refs)?;
        observer(&state)?;
    }
    let genomes: Vec<Vec<u8>> = state.population.iter().map(|p| p.alleles.clone()).collect();
    let final_population = evaluate_population(evaluator, &genomes, state.generation, state.config.seed, state.config.final_evaluations, true);
    Ok(EvolutionOutcome {
        history: state.history,
        population: state.population,
        final_population,
    })
}

/// Full run from a random population.
pub fn run_evolution<E, F>(config: &EvolutionConfig, evaluator: &E, mut observer: F) -> Result<EvolutionOutcome>
where
    E: Evaluator + ?Sized,
    F: FnMut(&Checkpoint) -> Result<()>,
{
    let state = initial_checkpoint(config, evaluator)?;
    observer(&state)?;
    resume_evolution(state, evaluator, observer)
}
