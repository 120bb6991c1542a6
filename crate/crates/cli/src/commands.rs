//! Command bodies. Each reads only its [`Command`] and input files and
//! writes only into a fresh [`OutputDir`], so a manifest replays exactly.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use quadsync_core::analysis::{
    classify_gait, entrainment_q_default, estimate_period, interlimb_correlation, sweep_heatmap, sync_transitions, trial_gait_metrics, GaitMetrics,
    PeriodOptions, SweepSetup, HEIGHT_GATE,
};
use quadsync_core::body::{run_trial, MorphologyParams, Schedule, TrialMetrics, TrialOptions, TrialRecord};
use quadsync_core::evolve::{
    measure_natural_period, resume_evolution, run_evolution, run_entrainment_demo, select_best_filter, select_representatives, Checkpoint, CpgEvaluator,
    EvolutionConfig, EvolutionOutcome, Evaluator, FilterEvaluator, Individual, CORRELATION_PAIRS,
};
use quadsync_core::genome::{GenomeKind, Limb};
use quadsync_core::stimulus::format_impulse_times;

use crate::config::{CpgExperimentConfig, FilterExperimentConfig};
use crate::controller::{record, Controller};
use crate::manifest::{experiment_id, software_version, Command, Inputs, Manifest, OutputDir, MANIFEST_FILE, MANIFEST_SCHEMA_VERSION};
use crate::CliError;

pub type Notes = BTreeMap<String, Value>;

pub const FINAL_SCHEMA_VERSION: u32 = 1;

/// The re-evaluated last population of an evolution run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalPopulation {
    pub schema_version: u32,
    pub genome_kind: GenomeKind,
    pub map_version: String,
    pub generation: usize,
    pub evaluations: usize,
    pub population: Vec<Individual>,
}

/// Creates `out_dir`, stores the inputs, runs `command` and writes the
/// manifest last.
pub fn run_experiment(command: Command, inputs: Inputs, out_dir: &Path) -> Result<Manifest, CliError> {
    let id = experiment_id(&command, &inputs)?;
    let mut out = OutputDir::create(out_dir)?;
    for (name, bytes) in &inputs {
        out.write(&format!("inputs/{name}"), bytes)
            .with_context(|| format!("storing input {name}"))?;
    }
    let notes = execute(&command, &inputs, &mut out)?;
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        experiment_id: id,
        software_version: software_version(),
        seeds: command.seeds(),
        morphology: command.morphology(),
        inputs: inputs.keys().cloned().collect(),
        artifacts: out.artifacts().to_vec(),
        notes,
        command,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(anyhow::Error::from)? + "\n";
    std::fs::write(out.root().join(MANIFEST_FILE), text).map_err(anyhow::Error::from)?;
    Ok(manifest)
}

/// Replays the experiment stored in `source` into `out_dir`.
pub fn rerun(source: &Path, out_dir: &Path) -> Result<Manifest, CliError> {
    let manifest = Manifest::load(source)?;
    let inputs = manifest.load_inputs(source)?;
    run_experiment(manifest.command, inputs, out_dir)
}

pub fn execute(command: &Command, inputs: &Inputs, out: &mut OutputDir) -> anyhow::Result<Notes> {
    match command {
        Command::EvolveCpg { config } => {
            let ev = cpg_evaluator(config);
            let outcome = evolve(out, &ev, Start::Fresh(&config.evolution))?;
            finish_cpg(out, &outcome, config.evolution.final_evaluations)
        }
        Command::EvolveFilter { config, controller } => {
            let ev = filter_evaluator(config, controller)?;
            let outcome = evolve(out, &ev, Start::Fresh(&config.evolution))?;
            finish_filter(out, &outcome, config, controller)
        }
        Command::Resume { base, start_generation } => {
            let text = input_text(inputs, "start.json")?;
            let mut state = Checkpoint::from_json(&text)?;
            if state.generation != *start_generation {
                bail!("checkpoint is at generation {}, manifest expects {start_generation}", state.generation);
            }
            let target = evolution_config(base)?;
            state.config.generations = target.generations;
            if &state.config != target {
                bail!("checkpoint config differs from the experiment config beyond the generation count");
            }
            let mut notes = match base.as_ref() {
                Command::EvolveCpg { config } => {
                    let outcome = evolve(out, &cpg_evaluator(config), Start::Resume(state))?;
                    finish_cpg(out, &outcome, config.evolution.final_evaluations)?
                }
                Command::EvolveFilter { config, controller } => {
                    let outcome = evolve(out, &filter_evaluator(config, controller)?, Start::Resume(state))?;
                    finish_filter(out, &outcome, config, controller)?
                }
                other => bail!("cannot resume a {} experiment", other.name()),
            };
            notes.insert("resumed_from_generation".into(), json!(start_generation));
            Ok(notes)
        }
        Command::Reps {
            morphology,
            trial,
            period_trial,
            i_dc,
            seed,
        } => {
            let fp: FinalPopulation = serde_json::from_str(&input_text(inputs, "final.json")?).context("parsing final.json")?;
            if fp.genome_kind != GenomeKind::Cpg {
                bail!("representatives are chosen from a CPG population");
            }
            let fitness: Vec<Vec<f64>> = fp.population.iter().map(|p| p.fitness.clone()).collect();
            let reps = select_representatives(&fitness)?;
            let morph = MorphologyParams::for_variant(*morphology);
            let mut csv = String::from("name,objective,index,f1,f2,f3,f4,natural_period\n");
            for &(obj, idx) in &reps.picks {
                let ind = &fp.population[idx];
                let mut c = Controller::new(format!("rep_f{}", obj + 1), *morphology, ind.alleles.clone());
                c.cpg_fitness = Some(ind.fitness.clone());
                c.natural_period = measure_natural_period(&c.cpg_params()?, &morph, trial, *period_trial, *i_dc, *seed)?;
                out.write(&format!("controllers/{}.json", c.name), c.to_json()?)?;
                csv.push_str(&format!("{},{},{idx}", c.name, obj + 1));
                for f in &ind.fitness {
                    csv.push_str(&format!(",{f}"));
                }
                csv.push_str(&format!(",{}\n", opt(c.natural_period)));
            }
            out.write("reps.csv", csv)?;
            Ok(Notes::from([("z".to_string(), json!(reps.z))]))
        }
        Command::Trial {
            controller,
            i_dc,
            theta_c,
            length,
            seed,
            trial,
        } => {
            let params = controller.cpg_params()?;
            let morph = controller.morphology_params();
            let opts = TrialOptions {
                record: true,
                ..TrialOptions::default()
            };
            let result = run_trial(&params.spec, &params.cmd, &morph, &Schedule::constant(*length, *i_dc, *theta_c), trial, *seed, &opts)?;
            let rec = result.record.as_ref().ok_or_else(|| anyhow!("trial was not recorded"))?;
            let stand = morph.standing_height(&params.cmd.standing_pose());
            out.write("motor.csv", motor_csv(rec, stand, &[]))?;
            out.write("trajectory.csv", rec.to_csv())?;
            let gait = trial_gait_metrics(rec, &result.metrics, trial.cpg_dt, &PeriodOptions::with_max_lag((*length / 4.0).min(5.0))).ok();
            out.write("metrics.json", pretty(&TrialSummary { metrics: result.metrics.clone(), gait })?)?;
            Ok(Notes::new())
        }
        Command::Sweep {
            controller,
            i_dc,
            theta_c,
            length,
            seed,
            max_lag,
            trial,
        } => {
            let params = controller.cpg_params()?;
            let morph = controller.morphology_params();
            let setup = SweepSetup {
                spec: &params.spec,
                cmd: &params.cmd,
                morph: &morph,
                config: trial,
                trial_length: *length,
                seed: *seed,
                period: PeriodOptions::with_max_lag(*max_lag),
            };
            let cells = sweep_heatmap(&setup, i_dc, theta_c)?;
            let mut csv = String::from("i_dc,theta_c,speed,sideways_speed,height,excluded,max_corr,period,gait,error\n");
            let grid = i_dc.iter().flat_map(|&a| theta_c.iter().map(move |&b| (a, b)));
            for ((a, b), cell) in grid.zip(&cells) {
                match cell {
                    Ok(c) => csv.push_str(&format!(
                        "{a},{b},{},{},{},{},{},{},{},\n",
                        c.speed,
                        c.sideways_speed,
                        c.height,
                        c.height < HEIGHT_GATE,
                        c.max_corr,
                        opt(c.period),
                        c.gait.name()
                    )),
                    Err(e) => csv.push_str(&format!("{a},{b},,,,,,,,{}\n", csv_text(e))),
                }
            }
            out.write("sweep.csv", csv)?;
            Ok(Notes::new())
        }
        Command::Entrain {
            controller,
            demo,
            impulses,
            trial,
        } => {
            let params = controller.cpg_params()?;
            let wiring = controller.filter_wiring()?;
            let morph = controller.morphology_params();
            let result = run_entrainment_demo(&params, &wiring, &morph, trial, demo, impulses.clone())?;
            let rec = result.trial.record.as_ref().ok_or_else(|| anyhow!("trial was not recorded"))?;
            let stand = morph.standing_height(&params.cmd.standing_pose());
            let steps = rec.outputs.len();
            let stimulus: Vec<f64> = (0..steps).map(|i| result.stimulus.get(i).copied().unwrap_or(0.0)).collect();
            out.write("timeseries.csv", motor_csv(rec, stand, &[("stimulus", &stimulus), ("sync", &result.sync)]))?;
            out.write("impulses.txt", format_impulse_times(&result.impulses))?;

            let dt = trial.cpg_dt;
            let transitions = sync_transitions(&result.sync, dt, demo.stimulus_start, demo.stimulus_stop)?;
            let (from, to) = (
                ((0.5 * (demo.stimulus_start + demo.stimulus_stop)) / dt) as usize,
                ((demo.stimulus_stop / dt) as usize).min(steps),
            );
            let window = demo.stimulus_stop - demo.stimulus_start;
            let popts = PeriodOptions::with_max_lag(window / 4.0);
            let output_period = estimate_period(&rec.leg_series(Limb::LeftFront)[from..to], &rec.knee_series(Limb::LeftFront)[from..to], dt, &popts)
                .ok()
                .flatten();
            let sigma0 = wiring.silent_output_sd(dt)?;
            let cycle = controller.natural_period;
            let summary = json!({
                "input_period": demo.period,
                "natural_period": cycle,
                "output_period_during_stimulus": output_period,
                "sigma0": sigma0,
                "q_during_stimulus": output_period.map(|t| entrainment_q_default(t, demo.period, sigma0)),
                "transitions": transitions,
                "onset_cycles": cycle.and_then(|c| transitions.onset.map(|t| t / c)),
                "offset_cycles": cycle.and_then(|c| transitions.offset.map(|t| t / c)),
                "metrics": result.trial.metrics,
            });
            out.write("summary.json", pretty(&summary)?)?;
            Ok(Notes::new())
        }
        Command::Analyze {
            files,
            threshold,
            walk_rule,
            max_lag,
        } => {
            let mut csv = String::from("file,period,gait,max_corr");
            for (_, _, name) in CORRELATION_PAIRS {
                csv.push_str(&format!(",{name}"));
            }
            csv.push_str(",h_tot,excluded\n");
            for name in files {
                let series = MotorSeries::parse(&input_text(inputs, name)?).with_context(|| format!("reading {name}"))?;
                let half = series.time.len() / 2;
                let legs: [Vec<f64>; 4] = std::array::from_fn(|k| series.legs[k][half..].to_vec());
                let period = estimate_period(&legs[0], &series.knee_lf[half..], series.dt, &PeriodOptions::with_max_lag(*max_lag))
                    .with_context(|| format!("period of {name}"))?;
                let corr = interlimb_correlation(&legs)?;
                let gait = classify_gait(&corr, *threshold, *walk_rule);
                let h_tot = series.h_rel.iter().sum::<f64>() / series.h_rel.len() as f64;
                csv.push_str(&format!("{},{},{},{}", csv_text(name), opt(period), gait.name(), corr.max_off_diagonal()));
                for (i, j, _) in CORRELATION_PAIRS {
                    csv.push_str(&format!(",{}", corr.matrix[i][j]));
                }
                csv.push_str(&format!(",{h_tot},{}\n", h_tot < HEIGHT_GATE));
            }
            out.write("analysis.csv", csv)?;
            Ok(Notes::new())
        }
    }
}

#[derive(Serialize)]
struct TrialSummary {
    metrics: TrialMetrics,
    gait: Option<GaitMetrics>,
}

enum Start<'a> {
    Fresh(&'a EvolutionConfig),
    Resume(Checkpoint),
}

pub fn checkpoint_path(generation: usize) -> String {
    format!("checkpoints/gen_{generation:04}.json")
}

fn evolve<E: Evaluator>(out: &mut OutputDir, ev: &E, start: Start<'_>) -> anyhow::Result<EvolutionOutcome> {
    let observer = |cp: &Checkpoint| -> quadsync_core::Result<()> {
        out.write(&checkpoint_path(cp.generation), cp.to_json()? + "\n")?;
        Ok(())
    };
    Ok(match start {
        Start::Fresh(config) => run_evolution(config, ev, observer)?,
        Start::Resume(state) => resume_evolution(state, ev, observer)?,
    })
}

fn evolution_config(command: &Command) -> anyhow::Result<&EvolutionConfig> {
    match command {
        Command::EvolveCpg { config } => Ok(&config.evolution),
        Command::EvolveFilter { config, .. } => Ok(&config.evolution),
        Command::Resume { base, .. } => evolution_config(base),
        other => bail!("{} is not an evolution experiment", other.name()),
    }
}

pub fn cpg_evaluator(config: &CpgExperimentConfig) -> CpgEvaluator {
    CpgEvaluator {
        morphology: MorphologyParams::for_variant(config.morphology),
        trial: config.trial.clone(),
        protocol: config.protocol.clone(),
    }
}

pub fn filter_evaluator(config: &FilterExperimentConfig, controller: &Controller) -> anyhow::Result<FilterEvaluator> {
    let natural_period = controller.require_period()?;
    Ok(FilterEvaluator {
        cpg: controller.cpg_params()?,
        natural_period,
        morphology: controller.morphology_params(),
        trial: config.trial.clone(),
        protocol: config.protocol.clone(),
    })
}

fn fitness_csv(outcome: &EvolutionOutcome) -> String {
    let m = outcome.history.first().map_or(0, |h| h.max.len());
    let mut csv = String::from("generation");
    for stat in ["max", "median"] {
        for j in 1..=m {
            csv.push_str(&format!(",{stat}_f{j}"));
        }
    }
    csv.push_str(",failures\n");
    for h in &outcome.history {
        csv.push_str(&h.generation.to_string());
        for v in h.max.iter().chain(&h.median) {
            csv.push_str(&format!(",{v}"));
        }
        csv.push_str(&format!(",{}\n", h.failures));
    }
    csv
}

fn write_final(out: &mut OutputDir, outcome: &EvolutionOutcome, kind: GenomeKind, evaluations: usize) -> anyhow::Result<()> {
    out.write("fitness.csv", fitness_csv(outcome))?;
    let fp = FinalPopulation {
        schema_version: FINAL_SCHEMA_VERSION,
        genome_kind: kind,
        map_version: kind.param_map().version_hash(),
        generation: outcome.history.last().map_or(0, |h| h.generation),
        evaluations,
        population: outcome.final_population.clone(),
    };
    out.write("final.json", pretty(&fp)?)?;
    Ok(())
}

fn finish_cpg(out: &mut OutputDir, outcome: &EvolutionOutcome, evaluations: usize) -> anyhow::Result<Notes> {
    write_final(out, outcome, GenomeKind::Cpg, evaluations)?;
    let positive = outcome.final_population.iter().filter(|p| p.fitness.iter().all(|&f| f > 0.0)).count();
    Ok(Notes::from([("all_positive_final".to_string(), json!(positive))]))
}

fn finish_filter(out: &mut OutputDir, outcome: &EvolutionOutcome, config: &FilterExperimentConfig, controller: &Controller) -> anyhow::Result<Notes> {
    write_final(out, outcome, GenomeKind::Filter, config.evolution.final_evaluations)?;
    let after = config.protocol.jitter_after_generation;
    let last = config.evolution.generations;
    let mut notes = Notes::from([
        (
            "jitter_generations".to_string(),
            if last > after { json!([after + 1, last]) } else { Value::Null },
        ),
        ("final_evaluation_jitter".to_string(), json!(config.protocol.jitter)),
        ("best_filter_index".to_string(), Value::Null),
    ]);
    if let Some(i) = select_best_filter(&outcome.final_population) {
        let best = &outcome.final_population[i];
        let mut c = controller.clone();
        c.name = format!("{}+filter", controller.name);
        c.filter = Some(record(GenomeKind::Filter, best.alleles.clone()));
        c.filter_fitness = Some(best.fitness.clone());
        out.write("best.json", c.to_json()?)?;
        notes.insert("best_filter_index".into(), json!(i));
    }
    Ok(notes)
}

fn input_text(inputs: &Inputs, name: &str) -> anyhow::Result<String> {
    let bytes = inputs.get(name).ok_or_else(|| anyhow!("missing input {name}"))?;
    Ok(String::from_utf8(bytes.clone())?)
}

fn pretty<T: Serialize>(value: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_text(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

pub const MOTOR_COLUMNS: [&str; 10] = ["time", "h_rel", "leg_lf", "leg_rf", "leg_lh", "leg_rh", "knee_lf", "knee_rf", "knee_lh", "knee_rh"];

/// Motor-neuron outputs at the CPG rate with the trunk height, relative to
/// standing, held from the latest physics step.
pub fn motor_csv(rec: &TrialRecord, stand_height: f64, extra: &[(&str, &[f64])]) -> String {
    let mut out = MOTOR_COLUMNS.join(",");
    for (name, _) in extra {
        out.push_str(&format!(",{name}"));
    }
    out.push('\n');
    let mut body = 0usize;
    for (i, t) in rec.cpg_time.iter().enumerate() {
        while body + 1 < rec.body_time.len() && rec.body_time[body + 1] <= *t + 1e-9 {
            body += 1;
        }
        let z = rec.position.get(body).map_or(stand_height, |p| p[2]);
        out.push_str(&format!("{t},{}", z / stand_height));
        for idx in rec.motor_a.iter().chain(&rec.motor_b) {
            out.push_str(&format!(",{}", rec.outputs[i][*idx]));
        }
        for (_, series) in extra {
            out.push_str(&format!(",{}", series.get(i).copied().unwrap_or(f64::NAN)));
        }
        out.push('\n');
    }
    out
}

/// Columns of a motor CSV needed for gait analysis.
pub struct MotorSeries {
    pub time: Vec<f64>,
    pub dt: f64,
    pub h_rel: Vec<f64>,
    pub legs: [Vec<f64>; 4],
    pub knee_lf: Vec<f64>,
}

impl MotorSeries {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| anyhow!("missing column {name}"));
        let wanted = ["time", "h_rel", "leg_lf", "leg_rf", "leg_lh", "leg_rh", "knee_lf"];
        let idx: Vec<usize> = wanted.iter().map(|n| col(n)).collect::<anyhow::Result<_>>()?;
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); wanted.len()];
        for (row, rec) in reader.records().enumerate() {
            let rec = rec?;
            for (c, &i) in idx.iter().enumerate() {
                let field = rec.get(i).ok_or_else(|| anyhow!("row {} is short", row + 2))?;
                let v: f64 = field.trim().parse().map_err(|_| anyhow!("row {}: bad number {field:?} in {}", row + 2, wanted[c]))?;
                cols[c].push(v);
            }
        }
        let time = std::mem::take(&mut cols[0]);
        if time.len() < 4 {
            bail!("need at least 4 rows, got {}", time.len());
        }
        let dt = time[1] - time[0];
        if !(dt > 0.0) || time.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6) {
            bail!("time column must be uniformly spaced and increasing");
        }
        Ok(Self {
            time,
            dt,
            h_rel: std::mem::take(&mut cols[1]),
            legs: [
                std::mem::take(&mut cols[2]),
                std::mem::take(&mut cols[3]),
                std::mem::take(&mut cols[4]),
                std::mem::take(&mut cols[5]),
            ],
            knee_lf: std::mem::take(&mut cols[6]),
        })
    }
}
