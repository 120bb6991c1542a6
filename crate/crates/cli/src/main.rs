use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use quadsync_cli::commands::{rerun, run_experiment};
use quadsync_cli::config::{self, CpgExperimentConfig, FilterExperimentConfig};
use quadsync_cli::controller::Controller;
use quadsync_cli::manifest::{Command, Inputs, Manifest};
use quadsync_cli::CliError;
use quadsync_core::analysis::WalkRule;
use quadsync_core::body::TrialConfig;
use quadsync_core::evolve::EntrainmentDemo;
use quadsync_core::stimulus::parse_impulse_times;

#[derive(Parser)]
#[command(name = "quadsync", version, about = "Evolve quadruped CPGs and rhythm filters, and analyse gait and entrainment")]
struct Cli {
    /// Seed overriding the config or command default.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for evaluation; never changes results.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// New experiment directory (must not exist).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Evolve CPG controllers.
    EvolveCpg {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evolve a filter layer for a controller with a measured period.
    EvolveFilter {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        controller: PathBuf,
    },
    /// Continue an evolution experiment from its latest checkpoint.
    Resume {
        experiment: PathBuf,
        /// New final generation (default: the original target).
        #[arg(long)]
        generations: Option<usize>,
    },
    /// Pick per-objective representatives and measure their periods.
    Reps {
        experiment: PathBuf,
        /// Length of the period-measurement trial (s).
        #[arg(long, default_value_t = 30.0)]
        period_trial: f64,
        #[arg(long, default_value_t = 0.5)]
        i_dc: f64,
    },
    /// One recorded trial at constant drive and offset.
    Trial {
        #[command(flatten)]
        controller: ControllerArg,
        #[arg(long, default_value_t = 0.5)]
        i_dc: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        theta_c: f64,
        #[arg(long, default_value_t = 30.0)]
        length: f64,
    },
    /// Constant-parameter grid over drive and offset.
    Sweep {
        #[command(flatten)]
        controller: ControllerArg,
        /// Comma-separated drive values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        i_dc: Vec<f64>,
        /// Comma-separated offset values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        theta_c: Vec<f64>,
        #[arg(long, default_value_t = 30.0)]
        length: f64,
        /// Longest autocorrelation lag searched for the period (s).
        #[arg(long, default_value_t = 5.0)]
        max_lag: f64,
    },
    /// Silent, stimulated and silent again, with a wavelet sync trace.
    Entrain {
        #[command(flatten)]
        controller: ControllerArg,
        /// Stimulus period (s).
        #[arg(long, conflicts_with = "period_factor")]
        period: Option<f64>,
        /// Stimulus period as a multiple of the natural period.
        #[arg(long)]
        period_factor: Option<f64>,
        /// File of impulse times (s), one per line, replacing the generated train.
        #[arg(long)]
        impulses: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        amplitude: f64,
        /// Timing jitter as a fraction of the period.
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        /// Drop every n-th impulse (0 keeps all).
        #[arg(long, default_value_t = 4)]
        missing_every: usize,
        #[arg(long, default_value_t = 8.0)]
        start: f64,
        #[arg(long, default_value_t = 16.0)]
        stop: f64,
        #[arg(long, default_value_t = 24.0)]
        length: f64,
        #[arg(long, default_value_t = 0.5)]
        i_dc: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        theta_c: f64,
    },
    /// Gait class, period and height gate for motor CSVs.
    Analyze {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Largest correlation still counted as a walk.
        #[arg(long, default_value_t = 0.3)]
        threshold: f64,
        #[arg(long, value_enum, default_value = "below-threshold")]
        walk_rule: WalkRuleArg,
        #[arg(long, default_value_t = 5.0)]
        max_lag: f64,
    },
    /// Replay an experiment from its manifest.
    Rerun { experiment: PathBuf },
}

#[derive(Args)]
struct ControllerArg {
    /// Controller JSON file.
    #[arg(long)]
    controller: PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum WalkRuleArg {
    BelowThreshold,
    AllNegative,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let out = cli.out.clone().ok_or_else(|| CliError::Usage("--out DIR is required".into()))?;
    let workers = cli.workers;
    if workers == Some(0) {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let job = || -> Result<Manifest, CliError> {
        if let Sub::Rerun { experiment } = &cli.command {
            if cli.seed.is_some() {
                return Err(CliError::Usage("--seed cannot be combined with rerun".into()));
            }
            return rerun(experiment, &out);
        }
        let (command, inputs) = build(&cli)?;
        run_experiment(command, inputs, &out)
    };
    let manifest = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Failure(e.into()))?
            .install(job)?,
        None => job()?,
    };
    println!("{} {} -> {}", manifest.command.name(), manifest.experiment_id, out.display());
    Ok(())
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn load_controller(path: &Path) -> Result<Controller, CliError> {
    if !path.exists() {
        return Err(usage(format!("controller file {} does not exist", path.display())));
    }
    Ok(Controller::load(path)?)
}

fn file_name(path: &Path) -> Result<String, CliError> {
    path.file_name()
        .and_then(|n| n.to_str())
        .map(str::to_string)
        .ok_or_else(|| usage(format!("{} has no usable file name", path.display())))
}

fn latest_checkpoint(dir: &Path) -> Result<(usize, PathBuf), CliError> {
    let cdir = dir.join("checkpoints");
    let entries = std::fs::read_dir(&cdir).map_err(|e| usage(format!("cannot list {}: {e}", cdir.display())))?;
    let mut best: Option<(usize, PathBuf)> = None;
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().to_string();
        if let Some(g) = name.strip_prefix("gen_").and_then(|s| s.strip_suffix(".json")).and_then(|s| s.parse::<usize>().ok()) {
            if best.as_ref().is_none_or(|(b, _)| g > *b) {
                best = Some((g, entry.path()));
            }
        }
    }
    best.ok_or_else(|| usage(format!("no checkpoints in {}", cdir.display())))
}

fn build(cli: &Cli) -> Result<(Command, Inputs), CliError> {
    let seed = cli.seed.unwrap_or(0);
    let mut inputs = Inputs::new();
    let command = match &cli.command {
        Sub::EvolveCpg { config } => {
            let mut config: CpgExperimentConfig = config::load(config)?;
            if let Some(s) = cli.seed {
                config.evolution.seed = s;
            }
            config.validate()?;
            Command::EvolveCpg { config }
        }
        Sub::EvolveFilter { config, controller } => {
            let mut config: FilterExperimentConfig = config::load(config)?;
            if let Some(s) = cli.seed {
                config.evolution.seed = s;
            }
            config.validate()?;
            let controller = load_controller(controller)?;
            controller.require_period()?;
            Command::EvolveFilter { config, controller }
        }
        Sub::Resume { experiment, generations } => {
            if cli.seed.is_some() {
                return Err(usage("--seed cannot be combined with resume"));
            }
            let manifest = Manifest::load(experiment)?;
            let mut base = match manifest.command {
                Command::Resume { base, .. } => *base,
                other => other,
            };
            match &mut base {
                Command::EvolveCpg { config } => {
                    if let Some(g) = generations {
                        config.evolution.generations = *g;
                    }
                }
                Command::EvolveFilter { config, .. } => {
                    if let Some(g) = generations {
                        config.evolution.generations = *g;
                    }
                }
                other => return Err(usage(format!("cannot resume a {} experiment", other.name()))),
            }
            let (generation, path) = latest_checkpoint(experiment)?;
            inputs.insert("start.json".into(), read_bytes(&path)?);
            Command::Resume {
                base: Box::new(base),
                start_generation: generation,
            }
        }
        Sub::Reps { experiment, period_trial, i_dc } => {
            let manifest = Manifest::load(experiment)?;
            let base = match manifest.command {
                Command::Resume { base, .. } => *base,
                other => other,
            };
            let Command::EvolveCpg { config } = base else {
                return Err(usage("representatives need a CPG evolution experiment"));
            };
            inputs.insert("final.json".into(), read_bytes(&experiment.join("final.json"))?);
            Command::Reps {
                morphology: config.morphology,
                trial: config.trial,
                period_trial: *period_trial,
                i_dc: *i_dc,
                seed,
            }
        }
        Sub::Trial {
            controller,
            i_dc,
            theta_c,
            length,
        } => Command::Trial {
            controller: load_controller(&controller.controller)?,
            i_dc: *i_dc,
            theta_c: *theta_c,
            length: *length,
            seed,
            trial: TrialConfig::default(),
        },
        Sub::Sweep {
            controller,
            i_dc,
            theta_c,
            length,
            max_lag,
        } => Command::Sweep {
            controller: load_controller(&controller.controller)?,
            i_dc: i_dc.clone(),
            theta_c: theta_c.clone(),
            length: *length,
            seed,
            max_lag: *max_lag,
            trial: TrialConfig::default(),
        },
        Sub::Entrain {
            controller,
            period,
            period_factor,
            impulses,
            amplitude,
            jitter,
            missing_every,
            start,
            stop,
            length,
            i_dc,
            theta_c,
        } => {
            let controller = load_controller(&controller.controller)?;
            if controller.filter.is_none() {
                return Err(usage(format!("controller {} has no filter to route the stimulus through", controller.name)));
            }
            let period = match (period, period_factor) {
                (Some(p), _) => *p,
                (None, factor) => factor.unwrap_or(1.0) * controller.require_period()?,
            };
            let impulses = match impulses {
                Some(path) => {
                    let text = String::from_utf8(read_bytes(path)?).map_err(|_| usage(format!("{} is not UTF-8", path.display())))?;
                    Some(parse_impulse_times(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?)
                }
                None => None,
            };
            let demo = EntrainmentDemo {
                length: *length,
                stimulus_start: *start,
                stimulus_stop: *stop,
                period,
                amplitude: *amplitude,
                jitter: *jitter,
                missing_every: *missing_every,
                i_dc: *i_dc,
                theta_c: *theta_c,
                seed,
            };
            Command::Entrain {
                controller,
                demo,
                impulses,
                trial: TrialConfig::default(),
            }
        }
        Sub::Analyze {
            files,
            threshold,
            walk_rule,
            max_lag,
        } => {
            let mut names = Vec::new();
            for path in files {
                let name = file_name(path)?;
                if inputs.insert(name.clone(), read_bytes(path)?).is_some() {
                    return Err(usage(format!("two inputs are named {name}")));
                }
                names.push(name);
            }
            Command::Analyze {
                files: names,
                threshold: *threshold,
                walk_rule: match walk_rule {
                    WalkRuleArg::BelowThreshold => WalkRule::BelowThreshold,
                    WalkRuleArg::AllNegative => WalkRule::AllNegative,
                },
                max_lag: *max_lag,
            }
        }
        Sub::Rerun { .. } => unreachable!("handled before building"),
    };
    Ok((command, inputs))
}
