//! Fitness protocols for the two evolution stages and post-hoc selection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EvalContext, Evaluation, Evaluator, Individual};
use crate::analysis::{entrainment_q_default, estimate_period, trial_gait_metrics, wavelet_sync, PeriodOptions, WaveletOptions, HEIGHT_GATE};
use crate::body::{run_trial, Displacement, MorphologyParams, Ramp, Schedule, Stage, TrialConfig, TrialMetrics, TrialOptions, TrialResult};
use crate::error::{Error, Result};
use crate::genome::{decode_cpg, decode_filter, CpgParameters, Genome, GenomeKind, Limb, CPG_GENOME_LEN, FILTER_GENOME_LEN};
use crate::stimulus::{generate_train, lowpass_signal, FilterWiring, StimulusTrain};

/// Golden-ratio factor spacing the stimulus periods around the natural one.
pub const PHI: f64 = 0.618;

/// Which stage's sideways displacement enters the later penalties.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SidewaysPenalty {
    /// Each stage penalises its own sideways drift.
    #[default]
    OwnStage,
    /// Every stage uses the first stage's sideways drift.
    FirstStage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitnessParams {
    /// Sideways scale (m).
    pub x0: f64,
    /// Target forward distance (m).
    pub y0: f64,
    pub penalty: SidewaysPenalty,
}

impl Default for FitnessParams {
    fn default() -> Self {
        Self {
            x0: 5f64.sqrt(),
            y0: 2.5,
            penalty: SidewaysPenalty::OwnStage,
        }
    }
}

/// The four CPG objectives: backwards walking, steady forward walking to
/// `y0`, fast forward walking, and upright posture.
pub fn cpg_fitness(stages: &[Displacement; 3], h_tot: f64, t_tot: f64, p: &FitnessParams) -> [f64; 4] {
    let side = |j: usize| {
        let x = match p.penalty {
            SidewaysPenalty::OwnStage => stages[j].x,
            SidewaysPenalty::FirstStage => stages[0].x,
        };
        (x / p.x0).powi(2)
    };
    let y = |j: usize| stages[j].y;
    [
        -y(0) - side(0),
        2.0 * p.y0 * y(1) - y(1) * y(1) - side(1),
        y(2) - side(2),
        p.y0 * p.y0 * h_tot / (1.0 + t_tot),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpgProtocol {
    pub stage_duration: f64,
    pub i_dc_base: f64,
    pub i_dc_peak: f64,
    pub theta_c_backward: f64,
    pub theta_c_forward: f64,
    pub fitness: FitnessParams,
}

impl Default for CpgProtocol {
    fn default() -> Self {
        Self {
            stage_duration: 10.0,
            i_dc_base: 0.5,
            i_dc_peak: 1.0,
            theta_c_backward: -0.016,
            theta_c_forward: 0.016,
            fitness: FitnessParams::default(),
        }
    }
}

impl CpgProtocol {
    /// Backwards, steady forwards, then forwards with rising drive.
    pub fn schedule(&self) -> Schedule {
        let d = self.stage_duration;
        Schedule {
            stages: vec![
                Stage {
                    duration: d,
                    i_dc: Ramp::constant(self.i_dc_base),
                    theta_c: Ramp::constant(self.theta_c_backward),
                },
                Stage {
                    duration: d,
                    i_dc: Ramp::constant(self.i_dc_base),
                    theta_c: Ramp::constant(self.theta_c_forward),
                },
                Stage {
                    duration: d,
                    i_dc: Ramp {
                        start: self.i_dc_base,
                        end: self.i_dc_peak,
                    },
                    theta_c: Ramp::constant(self.theta_c_forward),
                },
            ],
        }
    }
}

fn stage_triple(metrics: &TrialMetrics) -> Result<[Displacement; 3]> {
    metrics.stages.clone().try_into().map_err(|s: Vec<Displacement>| Error::DimensionMismatch {
        what: "trial stages",
        expected: 3,
        found: s.len(),
    })
}

pub struct CpgEvaluator {
    pub morphology: MorphologyParams,
    pub trial: TrialConfig,
    pub protocol: CpgProtocol,
}

impl CpgEvaluator {
    pub fn new(morphology: MorphologyParams) -> Self {
        Self {
            morphology,
            trial: TrialConfig::default(),
            protocol: CpgProtocol::default(),
        }
    }
}

impl Evaluator for CpgEvaluator {
    fn genome_kind(&self) -> GenomeKind {
        GenomeKind::Cpg
    }

    fn genome_len(&self) -> usize {
        CPG_GENOME_LEN
    }

    fn objectives(&self) -> usize {
        4
    }

    fn evaluate(&self, alleles: &[u8], ctx: &EvalContext) -> Result<Evaluation> {
        let params = decode_cpg(&Genome::new(GenomeKind::Cpg, alleles.to_vec())?)?;
        let schedule = self.protocol.schedule();
        let opts = TrialOptions {
            record: ctx.final_stage,
            ..TrialOptions::default()
        };
        let trial = run_trial(&params.spec, &params.cmd, &self.morphology, &schedule, &self.trial, ctx.seed, &opts)?;
        let m = &trial.metrics;
        let f = cpg_fitness(&stage_triple(m)?, m.h_tot, m.t_tot, &self.protocol.fitness);
        let mut details = BTreeMap::from([
            ("h_tot".to_string(), m.h_tot),
            ("t_tot".to_string(), m.t_tot),
            ("fallen".to_string(), if m.fallen() { 1.0 } else { 0.0 }),
        ]);
        // gait diagnostics are optional; a trial too short for them still scores
        let gait = trial.record.as_ref().and_then(|record| {
            let max_lag = (schedule.duration() / 4.0).min(PeriodOptions::default().max_lag);
            trial_gait_metrics(record, m, self.trial.cpg_dt, &PeriodOptions::with_max_lag(max_lag)).ok()
        });
        if let Some(gm) = gait {
            if let Some(t) = gm.period {
                details.insert("period".into(), t);
            }
            for (i, j, name) in CORRELATION_PAIRS {
                details.insert(name.to_string(), gm.corr.matrix[i][j]);
            }
        }
        Ok(Evaluation {
            objectives: f.to_vec(),
            details,
        })
    }

    fn worst_case(&self) -> Evaluation {
        Evaluation {
            objectives: vec![-1e3; 4],
            details: BTreeMap::new(),
        }
    }
}

/// Detail keys for the six interlimb correlations (LF, RF, LH, RH order).
pub const CORRELATION_PAIRS: [(usize, usize, &str); 6] = [
    (0, 1, "corr_lf_rf"),
    (0, 2, "corr_lf_lh"),
    (0, 3, "corr_lf_rh"),
    (1, 2, "corr_rf_lh"),
    (1, 3, "corr_rf_rh"),
    (2, 3, "corr_lh_rh"),
];

/// Per-objective representatives: for each objective `m` the argmax of
/// `z F_m + sum_k F_k`, with `z` the smallest positive integer making the
/// choices distinct. Only individuals with all-positive fitness qualify.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Representatives {
    pub z: u64,
    /// `(objective, index into the input)`, deduplicated.
    pub picks: Vec<(usize, usize)>,
}

pub fn select_representatives(fitness: &[Vec<f64>]) -> Result<Representatives> {
    let eligible: Vec<usize> = (0..fitness.len()).filter(|&i| fitness[i].iter().all(|&f| f > 0.0)).collect();
    if eligible.is_empty() {
        return Err(Error::EmptyInput("no individual has all-positive fitness"));
    }
    let m = fitness[eligible[0]].len();
    let sum = |i: usize| fitness[i].iter().sum::<f64>();
    // beyond this weight the ordering of z F_m + S no longer changes
    let mut bound = 1.0f64;
    for obj in 0..m {
        for (a, &i) in eligible.iter().enumerate() {
            for &j in &eligible[a + 1..] {
                let df = (fitness[i][obj] - fitness[j][obj]).abs();
                if df > 0.0 {
                    bound = bound.max((sum(i) - sum(j)).abs() / df);
                }
            }
        }
    }
    let z_max = bound.ceil().min(1e12) as u64 + 1;
    let argmaxes = |z: u64| -> Vec<usize> {
        (0..m)
            .map(|obj| {
                let score = |i: usize| z as f64 * fitness[i][obj] + sum(i);
                eligible.iter().copied().fold(eligible[0], |b, i| if score(i) > score(b) { i } else { b })
            })
            .collect()
    };
    let distinct = |v: &[usize]| v.iter().enumerate().all(|(a, x)| !v[..a].contains(x));
    let mut z = 1;
    loop {
        let picks = argmaxes(z);
        if distinct(&picks) || z >= z_max {
            let mut out: Vec<(usize, usize)> = Vec::new();
            for (obj, idx) in picks.into_iter().enumerate() {
                if !out.iter().any(|&(_, i)| i == idx) {
                    out.push((obj, idx));
                }
            }
            return Ok(Representatives { z, picks: out });
        }
        z += 1;
    }
}

/// Period of a CPG at constant drive, measured over the second half of
/// the trial.
pub fn measure_natural_period(
    params: &CpgParameters,
    morphology: &MorphologyParams,
    trial: &TrialConfig,
    duration: f64,
    i_dc: f64,
    seed: u64,
) -> Result<Option<f64>> {
    let schedule = Schedule::constant(duration, i_dc, 0.0);
    let opts = TrialOptions {
        record: true,
        ..TrialOptions::default()
    };
    let result = run_trial(&params.spec, &params.cmd, morphology, &schedule, trial, seed, &opts)?;
    let record = result.record.as_ref().ok_or(Error::EmptyInput("trial record"))?;
    let max_lag = (duration / 4.0).min(5.0);
    let gm = trial_gait_metrics(record, &result.metrics, trial.cpg_dt, &PeriodOptions::with_max_lag(max_lag))?;
    Ok(gm.period)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterProtocol {
    pub trial_length: f64,
    pub i_dc: f64,
    pub theta_c: f64,
    /// Timing jitter as a fraction of the period, applied after
    /// `jitter_after_generation`.
    pub jitter: f64,
    pub jitter_after_generation: usize,
    /// Maximum autocorrelation lag as a multiple of the natural period.
    pub max_lag_factor: f64,
}

impl Default for FilterProtocol {
    fn default() -> Self {
        Self {
            trial_length: 40.0,
            i_dc: 0.5,
            theta_c: 0.0,
            jitter: 0.02,
            jitter_after_generation: 50,
            max_lag_factor: 2.25,
        }
    }
}

pub struct FilterEvaluator {
    pub cpg: CpgParameters,
    pub natural_period: f64,
    pub morphology: MorphologyParams,
    pub trial: TrialConfig,
    pub protocol: FilterProtocol,
}

/// Outcome of one filter trial at a single stimulus period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntrainmentTrial {
    pub input_period: f64,
    pub output_period: Option<f64>,
    pub h_tot: f64,
    pub q: f64,
}

impl FilterEvaluator {
    /// Stimulus periods used during evolution.
    pub fn evolution_periods(&self) -> [f64; 3] {
        let t0 = self.natural_period;
        [t0 / PHI, t0, PHI * t0]
    }

    /// Extra periods measured in the final evaluation only.
    pub fn probe_periods(&self) -> [f64; 2] {
        let t0 = self.natural_period;
        [t0 / PHI.sqrt(), PHI.sqrt() * t0]
    }

    /// One stimulus trial with the filter attached.
    pub fn entrainment_trial(&self, alleles: &[u8], period: f64, jitter: f64, sigma0: Option<f64>, seed: u64) -> Result<EntrainmentTrial> {
        let wiring = decode_filter(&Genome::new(GenomeKind::Filter, alleles.to_vec())?)?;
        let sigma0 = match sigma0 {
            Some(s) => s,
            None => wiring.silent_output_sd(self.trial.cpg_dt)?,
        };
        let spec = wiring.attach(&self.cpg.spec)?;
        let length = self.protocol.trial_length;
        let train = StimulusTrain {
            jitter,
            seed,
            ..StimulusTrain::new(period, length)
        };
        let times = generate_train(&train)?;
        let signal = lowpass_signal(&times, wiring.lowpass_tau, self.trial.cpg_dt, length)?;
        let schedule = Schedule::constant(length, self.protocol.i_dc, self.protocol.theta_c);
        let opts = TrialOptions {
            record: true,
            stimulus: Some(signal),
            mirror_initial: false,
        };
        let result = run_trial(&spec, &self.cpg.cmd, &self.morphology, &schedule, &self.trial, seed, &opts)?;
        let record = result.record.as_ref().ok_or(Error::EmptyInput("trial record"))?;
        let half = record.outputs.len() / 2;
        let leg = &record.leg_series(Limb::LeftFront)[half..];
        let knee = &record.knee_series(Limb::LeftFront)[half..];
        let popts = PeriodOptions::with_max_lag(self.protocol.max_lag_factor * self.natural_period);
        let output_period = estimate_period(leg, knee, self.trial.cpg_dt, &popts).ok().flatten();
        let q = output_period.map_or(0.0, |t| entrainment_q_default(t, period, sigma0));
        Ok(EntrainmentTrial {
            input_period: period,
            output_period,
            h_tot: result.metrics.h_tot,
            q,
        })
    }
}

impl Evaluator for FilterEvaluator {
    fn genome_kind(&self) -> GenomeKind {
        GenomeKind::Filter
    }

    fn genome_len(&self) -> usize {
        FILTER_GENOME_LEN
    }

    fn objectives(&self) -> usize {
        3
    }

    fn evaluate(&self, alleles: &[u8], ctx: &EvalContext) -> Result<Evaluation> {
        let wiring = decode_filter(&Genome::new(GenomeKind::Filter, alleles.to_vec())?)?;
        let sigma0 = wiring.silent_output_sd(self.trial.cpg_dt)?;
        let jitter = if ctx.final_stage || ctx.generation > self.protocol.jitter_after_generation {
            self.protocol.jitter
        } else {
            0.0
        };
        let mut details = BTreeMap::from([("sigma0".to_string(), sigma0)]);
        let mut objectives = Vec::with_capacity(3);
        let mut periods: Vec<(String, f64)> = self.evolution_periods().iter().enumerate().map(|(k, &p)| (k.to_string(), p)).collect();
        if ctx.final_stage {
            periods.extend(self.probe_periods().iter().enumerate().map(|(k, &p)| (format!("probe{k}"), p)));
        }
        for (label, period) in periods {
            let trial = self.entrainment_trial(alleles, period, jitter, Some(sigma0), ctx.seed)?;
            details.insert(format!("h_{label}"), trial.h_tot);
            details.insert(format!("q_{label}"), trial.q);
            if let Some(t) = trial.output_period {
                details.insert(format!("t_out_{label}"), t);
            }
            if !label.starts_with("probe") {
                objectives.push(trial.h_tot * trial.q);
            }
        }
        Ok(Evaluation { objectives, details })
    }

    fn worst_case(&self) -> Evaluation {
        Evaluation {
            objectives: vec![0.0; 3],
            details: BTreeMap::new(),
        }
    }
}

/// Silent, stimulated, then silent again, at constant drive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntrainmentDemo {
    pub length: f64,
    pub stimulus_start: f64,
    pub stimulus_stop: f64,
    pub period: f64,
    pub amplitude: f64,
    pub jitter: f64,
    pub missing_every: usize,
    pub i_dc: f64,
    pub theta_c: f64,
    pub seed: u64,
}

impl EntrainmentDemo {
    pub fn new(period: f64) -> Self {
        Self {
            length: 24.0,
            stimulus_start: 8.0,
            stimulus_stop: 16.0,
            period,
            amplitude: 1.0,
            jitter: 0.0,
            missing_every: 4,
            i_dc: 0.5,
            theta_c: 0.0,
            seed: 0,
        }
    }

    /// Impulse times inside the stimulus window.
    pub fn impulses(&self) -> Result<Vec<f64>> {
        let train = StimulusTrain {
            jitter: self.jitter,
            amplitude: self.amplitude,
            missing_every: self.missing_every,
            seed: self.seed,
            ..StimulusTrain::new(self.period, self.stimulus_stop - self.stimulus_start)
        };
        Ok(generate_train(&train)?.into_iter().map(|t| t + self.stimulus_start).collect())
    }
}

pub struct EntrainmentDemoResult {
    pub impulses: Vec<f64>,
    /// Low-passed stimulus current, one sample per CPG step.
    pub stimulus: Vec<f64>,
    pub trial: TrialResult,
    /// Wavelet sync of the left-front leg output at the stimulus period,
    /// aligned with the recorded CPG steps.
    pub sync: Vec<f64>,
}

/// Runs `demo` on the CPG with `wiring` attached. `impulses` replaces the
/// generated train when given.
pub fn run_entrainment_demo(
    cpg: &CpgParameters,
    wiring: &FilterWiring,
    morphology: &MorphologyParams,
    trial: &TrialConfig,
    demo: &EntrainmentDemo,
    impulses: Option<Vec<f64>>,
) -> Result<EntrainmentDemoResult> {
    if !(demo.stimulus_start >= 0.0 && demo.stimulus_stop > demo.stimulus_start && demo.length >= demo.stimulus_stop) {
        return Err(Error::Config("stimulus window must satisfy 0 <= start < stop <= length".into()));
    }
    let impulses = match impulses {
        Some(times) => {
            if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| !(0.0..demo.length).contains(&t)) {
                return Err(Error::InvalidInput("impulse times must be sorted and inside the trial".into()));
            }
            times
        }
        None => demo.impulses()?,
    };
    let stimulus: Vec<f64> = lowpass_signal(&impulses, wiring.lowpass_tau, trial.cpg_dt, demo.length)?
        .into_iter()
        .map(|v| v * demo.amplitude)
        .collect();
    let spec = wiring.attach(&cpg.spec)?;
    let opts = TrialOptions {
        record: true,
        stimulus: Some(stimulus.clone()),
        mirror_initial: false,
    };
    let schedule = Schedule::constant(demo.length, demo.i_dc, demo.theta_c);
    let result = run_trial(&spec, &cpg.cmd, morphology, &schedule, trial, demo.seed, &opts)?;
    let record = result.record.as_ref().ok_or(Error::EmptyInput("trial record"))?;
    let sync = wavelet_sync(&record.leg_series(Limb::LeftFront), demo.period, trial.cpg_dt, &WaveletOptions::default())?;
    Ok(EntrainmentDemoResult {
        impulses,
        stimulus,
        trial: result,
        sync,
    })
}

/// Highest summed entrainment quality over the evolution periods among
/// filters that keep the robot upright at every period.
pub fn select_best_filter(population: &[Individual]) -> Option<usize> {
    let score = |p: &Individual| -> Option<f64> {
        let mut total = 0.0;
        for k in 0..3 {
            let h = *p.details.get(&format!("h_{k}"))?;
            if h <= HEIGHT_GATE {
                return None;
            }
            total += *p.details.get(&format!("q_{k}"))?;
        }
        Some(total)
    };
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in population.iter().enumerate() {
        if let Some(s) = score(p) {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Two-objective benchmark with a known front: `f1 = -x^2`,
/// `f2 = -(x - 1)^2`, with `x` read from base-10 digits.
pub struct ToyProblem {
    pub digits: usize,
}

/// Decodes alleles as digits `0.d1 d2 ...` scaled onto `[-0.5, 1.5)`.
pub fn toy_decode(alleles: &[u8]) -> f64 {
    let frac = alleles.iter().rev().fold(0.0, |acc, &a| (acc + f64::from(a - 1)) / 10.0);
    -0.5 + 2.0 * frac
}

/// Hypervolume of the toy front above `(-1, -1)`.
pub const TOY_FRONT_HYPERVOLUME: f64 = 5.0 / 6.0;

impl Evaluator for ToyProblem {
    fn genome_kind(&self) -> GenomeKind {
        GenomeKind::Cpg
    }

    fn genome_len(&self) -> usize {
        self.digits
    }

    fn objectives(&self) -> usize {
        2
    }

    fn evaluate(&self, alleles: &[u8], _ctx: &EvalContext) -> Result<Evaluation> {
        let x = toy_decode(alleles);
        Ok(Evaluation {
            objectives: vec![-x * x, -(x - 1.0).powi(2)],
            details: BTreeMap::new(),
        })
    }

    fn worst_case(&self) -> Evaluation {
        Evaluation {
            objectives: vec![-4.0, -4.0],
            details: BTreeMap::new(),
        }
    }
}
