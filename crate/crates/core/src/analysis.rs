//! Gait and entrainment analytics.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::body::{run_trial, JointCommandParams, MorphologyParams, Schedule, TrialConfig, TrialMetrics, TrialOptions, TrialRecord};
use crate::error::{Error, Result};
use crate::genome::Limb;
use crate::neuro::NetworkSpec;

/// Trials whose mean relative height falls below this are treated as fallen.
pub const HEIGHT_GATE: f64 = 0.75;

/// Peak-picking rules for the autocorrelation period estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodOptions {
    pub min_lag: f64,
    pub max_lag: f64,
    pub min_prominence: f64,
    pub min_height: f64,
    /// Peaks within this of the tallest count as tied; the shortest lag wins.
    pub tie_tolerance: f64,
}

impl Default for PeriodOptions {
    fn default() -> Self {
        Self {
            min_lag: 0.05,
            max_lag: 5.0,
            min_prominence: 0.05,
            min_height: 0.3,
            tie_tolerance: 0.05,
        }
    }
}

impl PeriodOptions {
    pub fn with_max_lag(max_lag: f64) -> Self {
        Self {
            max_lag,
            ..Self::default()
        }
    }
}

/// Normalised autocorrelation of `z = x + i y` (mean removed, unbiased),
/// real part, for lags `0..=max_lag_samples`.
pub fn complex_autocorrelation(x: &[f64], y: &[f64], max_lag_samples: usize) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "autocorrelation series",
            expected: x.len(),
            found: y.len(),
        });
    }
    let n = x.len();
    if n <= max_lag_samples {
        return Err(Error::InsufficientData {
            needed: max_lag_samples + 1,
            got: n,
        });
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let xc: Vec<f64> = x.iter().map(|v| v - mx).collect();
    let yc: Vec<f64> = y.iter().map(|v| v - my).collect();
    let mut out = Vec::with_capacity(max_lag_samples + 1);
    for lag in 0..=max_lag_samples {
        // Re(z[t + lag] * conj(z[t])) = x x' + y y'
        let m = n - lag;
        let s: f64 = (0..m).map(|t| xc[t + lag] * xc[t] + yc[t + lag] * yc[t]).sum();
        out.push(s / m as f64);
    }
    let zero = out[0];
    if zero <= 0.0 {
        return Ok(vec![0.0; out.len()]);
    }
    out.iter_mut().for_each(|v| *v /= zero);
    Ok(out)
}

/// Topographic prominence of every interior local maximum of `r` within
/// `lo..=hi`, as `(index, prominence)`.
fn peaks_with_prominence(r: &[f64], lo: usize, hi: usize) -> Vec<(usize, f64)> {
    let mut peaks = Vec::new();
    for k in lo.max(1)..=hi.min(r.len().saturating_sub(2)) {
        if !(r[k] > r[k - 1] && r[k] >= r[k + 1]) {
            continue;
        }
        let mut left_min = r[k];
        let mut j = k;
        while j > 0 {
            j -= 1;
            if r[j] > r[k] {
                break;
            }
            left_min = left_min.min(r[j]);
        }
        let mut right_min = r[k];
        let mut j = k;
        while j + 1 < r.len() {
            j += 1;
            if r[j] > r[k] {
                break;
            }
            right_min = right_min.min(r[j]);
        }
        peaks.push((k, r[k] - left_min.max(right_min)));
    }
    peaks
}

/// Oscillation period from a leg/knee output pair, or `None` when the
/// autocorrelation has no qualifying peak.
pub fn estimate_period(x: &[f64], y: &[f64], dt: f64, opts: &PeriodOptions) -> Result<Option<f64>> {
    if !(dt > 0.0) || !(opts.max_lag > opts.min_lag) {
        return Err(Error::InvalidInput("period search needs dt > 0 and max_lag > min_lag".into()));
    }
    let max_k = (opts.max_lag / dt).round() as usize;
    let needed = 2 * max_k;
    if x.len() < needed {
        return Err(Error::InsufficientData { needed, got: x.len() });
    }
    // one extra lag so a peak at max_lag can still be recognised as interior
    let r = complex_autocorrelation(x, y, max_k + 1)?;
    let min_k = (opts.min_lag / dt).ceil() as usize;
    let peaks: Vec<(usize, f64)> = peaks_with_prominence(&r, min_k, max_k)
        .into_iter()
        .filter(|&(k, p)| p >= opts.min_prominence && r[k] >= opts.min_height)
        .collect();
    let Some(top) = peaks.iter().map(|&(k, _)| r[k]).reduce(f64::max) else {
        return Ok(None);
    };
    let k = peaks.iter().find(|&&(k, _)| r[k] >= top - opts.tie_tolerance).map(|&(k, _)| k).unwrap_or(0);
    // parabolic refinement of the peak position
    let (a, b, c) = (r[k - 1], r[k], r[k + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom < 0.0 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    Ok(Some((k as f64 + shift) * dt))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterlimbCorrelation {
    /// Pearson coefficients, limb order LF, RF, LH, RH; zero diagonal.
    pub matrix: [[f64; 4]; 4],
    /// Limbs whose series had zero variance.
    pub degenerate: [bool; 4],
}

impl InterlimbCorrelation {
    pub fn is_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }

    pub fn max_off_diagonal(&self) -> f64 {
        let mut m = f64::NEG_INFINITY;
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    m = m.max(self.matrix[i][j]);
                }
            }
        }
        m
    }
}

pub fn interlimb_correlation(legs: &[Vec<f64>; 4]) -> Result<InterlimbCorrelation> {
    let n = legs[0].len();
    if let Some(bad) = legs.iter().find(|s| s.len() != n) {
        return Err(Error::DimensionMismatch {
            what: "limb series",
            expected: n,
            found: bad.len(),
        });
    }
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let centred: Vec<Vec<f64>> = legs
        .iter()
        .map(|s| {
            let m = s.iter().sum::<f64>() / n as f64;
            s.iter().map(|v| v - m).collect()
        })
        .collect();
    let norms: Vec<f64> = centred.iter().map(|s| s.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut degenerate = [false; 4];
    for (i, &nm) in norms.iter().enumerate() {
        degenerate[i] = !(nm > 1e-12);
    }
    let mut matrix = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in (i + 1)..4 {
            if degenerate[i] || degenerate[j] {
                continue;
            }
            let dot: f64 = centred[i].iter().zip(&centred[j]).map(|(a, b)| a * b).sum();
            let c = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            matrix[i][j] = c;
            matrix[j][i] = c;
        }
    }
    Ok(InterlimbCorrelation { matrix, degenerate })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gait {
    Walk,
    Trot,
    Pace,
    Bound,
    Unclassified,
}

impl Gait {
    pub fn name(self) -> &'static str {
        match self {
            Gait::Walk => "walk",
            Gait::Trot => "trot",
            Gait::Pace => "pace",
            Gait::Bound => "bound",
            Gait::Unclassified => "unclassified",
        }
    }
}

/// How weakly-correlated patterns are labelled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WalkRule {
    /// Maximum correlation below the threshold.
    #[default]
    BelowThreshold,
    /// Additionally require every pair to be negatively correlated.
    AllNegative,
}

pub fn classify_gait(corr: &InterlimbCorrelation, threshold: f64, rule: WalkRule) -> Gait {
    if corr.is_degenerate() || corr.matrix.iter().flatten().any(|v| !v.is_finite()) {
        return Gait::Unclassified;
    }
    let mut best = (0, 1);
    for i in 0..4 {
        for j in (i + 1)..4 {
            if corr.matrix[i][j] > corr.matrix[best.0][best.1] {
                best = (i, j);
            }
        }
    }
    let top = corr.matrix[best.0][best.1];
    if top < threshold {
        return match rule {
            WalkRule::BelowThreshold => Gait::Walk,
            WalkRule::AllNegative if top < 0.0 => Gait::Walk,
            WalkRule::AllNegative => Gait::Unclassified,
        };
    }
    let limbs = [Limb::ALL[best.0], Limb::ALL[best.1]];
    let same_side = limbs[0].is_left() == limbs[1].is_left();
    let same_girdle = limbs[0].is_front() == limbs[1].is_front();
    match (same_side, same_girdle) {
        (false, false) => Gait::Trot,
        (true, false) => Gait::Pace,
        (false, true) => Gait::Bound,
        (true, true) => Gait::Unclassified,
    }
}

/// Entrainment quality: 1 when the output period is an integer or
/// half-integer multiple of the input period and the filter is silent at
/// rest.
pub fn entrainment_q(t_out: f64, t_in: f64, sigma0: f64, sigma_t: f64, epsilon: f64) -> f64 {
    let multiple = (2.0 * t_out / t_in).round();
    // distance taken before dividing, so the rounding of the ratio does not leak in
    let mismatch = ((2.0 * t_out - multiple * t_in) / t_in).abs();
    1.0 / (1.0 + mismatch / epsilon + sigma0 / sigma_t)
}

/// Default `sigma_t` and `epsilon`.
pub fn entrainment_q_default(t_out: f64, t_in: f64, sigma0: f64) -> f64 {
    entrainment_q(t_out, t_in, sigma0, 0.1, 0.1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveletOptions {
    /// Gaussian envelope width in cycles of the probe period.
    pub sigma: f64,
    /// Standard deviation of the smoothing Gaussian (s).
    pub smooth: f64,
}

impl Default for WaveletOptions {
    fn default() -> Self {
        Self { sigma: 1.5, smooth: 0.5 }
    }
}

fn gaussian_kernel(sd_samples: f64) -> Vec<f64> {
    let half = (3.0 * sd_samples).ceil() as isize;
    (-half..=half).map(|k| (-0.5 * (k as f64 / sd_samples).powi(2)).exp()).collect()
}

/// Band-limited synchrony at `probe_period`: modulus of the convolution
/// with a complex Morlet wavelet `exp(2 pi i t / T) exp(-t^2 / (2 (sigma T)^2))`,
/// Gaussian-smoothed and scaled to a maximum of one.
pub fn wavelet_sync(series: &[f64], probe_period: f64, dt: f64, opts: &WaveletOptions) -> Result<Vec<f64>> {
    if !(probe_period > 0.0 && dt > 0.0 && opts.sigma > 0.0) {
        return Err(Error::InvalidInput("wavelet needs positive period, dt and sigma".into()));
    }
    let sd = opts.sigma * probe_period / dt;
    // the wavelet's effective support is taken as its +-1 sd core
    let support = (2.0 * sd).ceil() as usize;
    if series.len() <= 3 * support {
        return Err(Error::InsufficientData {
            needed: 3 * support + 1,
            got: series.len(),
        });
    }
    let n = series.len();
    if series.iter().all(|&v| v == 0.0) {
        return Ok(vec![0.0; n]);
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let envelope = gaussian_kernel(sd);
    let half = (envelope.len() / 2) as isize;
    let omega = 2.0 * std::f64::consts::PI * dt / probe_period;
    let phase: Vec<(f64, f64)> = (-half..=half).map(|k| (omega * k as f64).sin_cos()).collect();
    let mut modulus = vec![0.0; n];
    for (t, m) in modulus.iter_mut().enumerate() {
        let (mut re, mut im) = (0.0, 0.0);
        for (idx, (g, (s, c))) in envelope.iter().zip(&phase).enumerate() {
            let j = t as isize + idx as isize - half;
            if j < 0 || j >= n as isize {
                continue;
            }
            let v = centred[j as usize] * g;
            re += v * c;
            im += v * s;
        }
        *m = (re * re + im * im).sqrt();
    }
    let smoothed = gaussian_smooth(&modulus, opts.smooth / dt);
    let peak = smoothed.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Ok(vec![0.0; n]);
    }
    Ok(smoothed.into_iter().map(|v| v / peak).collect())
}

/// Gaussian filter truncated at three standard deviations, renormalised
/// near the edges.
pub fn gaussian_smooth(series: &[f64], sd_samples: f64) -> Vec<f64> {
    if !(sd_samples > 0.0) {
        return series.to_vec();
    }
    let kernel = gaussian_kernel(sd_samples);
    let half = (kernel.len() / 2) as isize;
    let n = series.len() as isize;
    (0..n)
        .map(|t| {
            let (mut acc, mut wsum) = (0.0, 0.0);
            for (idx, w) in kernel.iter().enumerate() {
                let j = t + idx as isize - half;
                if (0..n).contains(&j) {
                    acc += w * series[j as usize];
                    wsum += w;
                }
            }
            acc / wsum
        })
        .collect()
}

/// Rise and fall of a sync trace around a stimulus window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncTransitions {
    /// Mean over the last three quarters of the silence before the stimulus.
    pub baseline: f64,
    /// Mean over the second half of the stimulus window.
    pub plateau: f64,
    /// Delay from stimulus start until the trace first reaches the midpoint.
    pub onset: Option<f64>,
    /// Delay from stimulus stop until the trace first falls back to the midpoint.
    pub offset: Option<f64>,
}

impl SyncTransitions {
    pub fn contrast(&self) -> f64 {
        self.plateau - self.baseline
    }
}

/// Locates the onset and offset of synchrony in `trace` (sampled every
/// `dt`, first sample at `dt`) for a stimulus on during `[start, stop)`.
pub fn sync_transitions(trace: &[f64], dt: f64, start: f64, stop: f64) -> Result<SyncTransitions> {
    if !(dt > 0.0 && start > 0.0 && stop > start) {
        return Err(Error::InvalidInput("need dt > 0 and 0 < start < stop".into()));
    }
    let idx = |t: f64| ((t / dt).round() as usize).saturating_sub(1).min(trace.len());
    let (b0, s0, mid_w, s1) = (idx(0.25 * start), idx(start), idx(0.5 * (start + stop)), idx(stop));
    if b0 >= s0 || mid_w >= s1 || s1 >= trace.len() {
        return Err(Error::InsufficientData {
            needed: idx(stop) + 2,
            got: trace.len(),
        });
    }
    let mean = |a: usize, b: usize| trace[a..b].iter().sum::<f64>() / (b - a) as f64;
    let baseline = mean(b0, s0);
    let plateau = mean(mid_w, s1);
    let mid = 0.5 * (baseline + plateau);
    let rising = plateau > baseline;
    let onset = rising
        .then(|| trace[s0..s1].iter().position(|&v| v >= mid))
        .flatten()
        .map(|k| k as f64 * dt);
    let offset = rising
        .then(|| trace[s1..].iter().position(|&v| v <= mid))
        .flatten()
        .map(|k| k as f64 * dt);
    Ok(SyncTransitions {
        baseline,
        plateau,
        onset,
        offset,
    })
}

/// Gait and posture summary of one recorded trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitMetrics {
    pub period: Option<f64>,
    pub corr: InterlimbCorrelation,
    pub gait: Gait,
    pub h_tot: f64,
    pub t_tot: f64,
    pub q_scores: Vec<f64>,
}

/// Period (left-front leg/knee pair) and interlimb correlation over the
/// second half of a recorded trial.
pub fn trial_gait_metrics(record: &TrialRecord, metrics: &TrialMetrics, dt: f64, opts: &PeriodOptions) -> Result<GaitMetrics> {
    let n = record.outputs.len();
    let half = n / 2;
    let legs: [Vec<f64>; 4] = Limb::ALL.map(|l| record.leg_series(l)[half..].to_vec());
    let knee = record.knee_series(Limb::LeftFront)[half..].to_vec();
    let period = estimate_period(&legs[0], &knee, dt, opts)?;
    let corr = interlimb_correlation(&legs)?;
    let gait = classify_gait(&corr, 0.3, WalkRule::default());
    Ok(GaitMetrics {
        period,
        corr,
        gait,
        h_tot: metrics.h_tot,
        t_tot: metrics.t_tot,
        q_scores: Vec::new(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub i_dc: f64,
    pub theta_c: f64,
    /// Forward speed (m/s).
    pub speed: f64,
    pub sideways_speed: f64,
    pub height: f64,
    pub max_corr: f64,
    pub period: Option<f64>,
    pub gait: Gait,
}

/// Controller and environment for a constant-parameter sweep.
pub struct SweepSetup<'a> {
    pub spec: &'a NetworkSpec,
    pub cmd: &'a JointCommandParams,
    pub morph: &'a MorphologyParams,
    pub config: &'a TrialConfig,
    pub trial_length: f64,
    pub seed: u64,
    pub period: PeriodOptions,
}

/// One constant-parameter trial per grid cell, row-major over
/// (`i_dc`, `theta_c`). Failed cells are returned as errors in place.
pub fn sweep_heatmap(setup: &SweepSetup<'_>, i_dc: &[f64], theta_c: &[f64]) -> Result<Vec<std::result::Result<SweepCell, String>>> {
    if i_dc.is_empty() || theta_c.is_empty() {
        return Err(Error::EmptyInput("sweep grid"));
    }
    let cells: Vec<(f64, f64)> = i_dc.iter().flat_map(|&a| theta_c.iter().map(move |&b| (a, b))).collect();
    Ok(cells
        .par_iter()
        .map(|&(i, th)| sweep_cell(setup, i, th).map_err(|e| e.to_string()))
        .collect())
}

fn sweep_cell(setup: &SweepSetup<'_>, i_dc: f64, theta_c: f64) -> Result<SweepCell> {
    let schedule = Schedule::constant(setup.trial_length, i_dc, theta_c);
    let opts = TrialOptions {
        record: true,
        ..TrialOptions::default()
    };
    let trial = run_trial(setup.spec, setup.cmd, setup.morph, &schedule, setup.config, setup.seed, &opts)?;
    let record = trial.record.as_ref().ok_or(Error::EmptyInput("trial record"))?;
    let gm = trial_gait_metrics(record, &trial.metrics, setup.config.cpg_dt, &setup.period)?;
    let total = trial.metrics.total();
    Ok(SweepCell {
        i_dc,
        theta_c,
        speed: total.y / setup.trial_length,
        sideways_speed: total.x / setup.trial_length,
        height: trial.metrics.h_tot,
        max_corr: gm.corr.max_off_diagonal(),
        period: gm.period,
        gait: gm.gait,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    /// Intercept first, then one coefficient per predictor.
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub dof: usize,
}

/// Ordinary least squares with an intercept. Rank-deficiency errors name
/// design columns, where column 0 is the intercept and column `k + 1` is
/// predictor `k`.
pub fn ols_fit(y: &[f64], predictors: &[Vec<f64>]) -> Result<OlsFit> {
    let n = y.len();
    let p = predictors.len() + 1;
    if let Some(bad) = predictors.iter().find(|c| c.len() != n) {
        return Err(Error::DimensionMismatch {
            what: "predictor column",
            expected: n,
            found: bad.len(),
        });
    }
    if n <= p {
        return Err(Error::InsufficientData { needed: p + 1, got: n });
    }
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { predictors[j - 1][i] });

    // modified Gram-Schmidt to locate dependent columns
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut collinear = Vec::new();
    for j in 0..p {
        let col = x.column(j).into_owned();
        let scale = col.norm().max(1e-300);
        let mut r = col;
        for q in &basis {
            let proj = q.dot(&r);
            r -= q * proj;
        }
        let norm = r.norm();
        if norm <= 1e-9 * scale {
            collinear.push(j);
        } else {
            basis.push(r / norm);
        }
    }
    if !collinear.is_empty() {
        return Err(Error::RankDeficient { columns: collinear });
    }

    let xtx = x.transpose() * &x;
    let chol = xtx.clone().cholesky().ok_or(Error::RankDeficient { columns: (0..p).collect() })?;
    let yv = DVector::from_column_slice(y);
    let beta = chol.solve(&(x.transpose() * &yv));
    let residuals = &yv - &x * &beta;
    let dof = n - p;
    let sigma2 = residuals.norm_squared() / dof as f64;
    let inv = chol.inverse();
    let dist = StudentsT::new(0.0, 1.0, dof as f64).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut std_errors = Vec::with_capacity(p);
    let mut t_stats = Vec::with_capacity(p);
    let mut p_values = Vec::with_capacity(p);
    for j in 0..p {
        let se = (sigma2 * inv[(j, j)]).max(0.0).sqrt();
        let t = if se > 0.0 {
            beta[j] / se
        } else if beta[j].abs() < 1e-12 {
            0.0
        } else {
            f64::INFINITY.copysign(beta[j])
        };
        std_errors.push(se);
        t_stats.push(t);
        p_values.push(if t.is_finite() { 2.0 * (1.0 - dist.cdf(t.abs())) } else { 0.0 });
    }
    Ok(OlsFit {
        coefficients: beta.iter().copied().collect(),
        std_errors,
        t_stats,
        p_values,
        residuals: residuals.iter().copied().collect(),
        dof,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    const DT: f64 = 0.008;

    fn circle(period: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
        (0..n)
            .map(|k| {
                let ph = 2.0 * PI * k as f64 * DT / period;
                (ph.cos(), ph.sin())
            })
            .unzip()
    }

    #[test]
    fn unit_circle_period() {
        let (x, y) = circle(1.0, 2000);
        let t = estimate_period(&x, &y, DT, &PeriodOptions::with_max_lag(2.0)).unwrap().unwrap();
        assert!((t - 1.0).abs() <= DT, "{t}");
    }

    #[test]
    fn constant_series_has_no_period() {
        let x = vec![0.7; 2000];
        assert_eq!(estimate_period(&x, &x, DT, &PeriodOptions::with_max_lag(2.0)).unwrap(), None);
    }

    #[test]
    fn white_noise_has_no_period() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..2000).map(|_| normal.sample(&mut rng)).collect();
            let y: Vec<f64> = (0..2000).map(|_| normal.sample(&mut rng)).collect();
            assert_eq!(estimate_period(&x, &y, DT, &PeriodOptions::with_max_lag(2.0)).unwrap(), None);
        }
    }

    #[test]
    fn short_series_is_rejected() {
        let (x, y) = circle(1.0, 100);
        assert!(matches!(
            estimate_period(&x, &y, DT, &PeriodOptions::with_max_lag(2.0)),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn time_reversal_keeps_period() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let period = rng.gen_range(0.3..1.5);
            let (x, y): (Vec<f64>, Vec<f64>) = (0..1500)
                .map(|k| {
                    let ph = 2.0 * PI * k as f64 * DT / period;
                    (ph.cos().max(0.0), (ph + 1.0).sin().max(0.0) + 0.1 * (3.0 * ph).cos())
                })
                .unzip();
            let opts = PeriodOptions::with_max_lag(3.0);
            let fwd = estimate_period(&x, &y, DT, &opts).unwrap();
            let xr: Vec<f64> = x.iter().rev().copied().collect();
            let yr: Vec<f64> = y.iter().rev().copied().collect();
            let rev = estimate_period(&xr, &yr, DT, &opts).unwrap().unwrap();
            assert_relative_eq!(fwd.unwrap(), rev, epsilon = 1e-9);
        }
    }

    fn shifted(phases_deg: [f64; 4]) -> [Vec<f64>; 4] {
        phases_deg.map(|p| (0..1000).map(|k| (2.0 * PI * k as f64 / 125.0 - p.to_radians()).sin()).collect())
    }

    #[test]
    fn correlation_examples() {
        let s = shifted([0.0, 0.0, 37.0, 180.0]);
        let c = interlimb_correlation(&s).unwrap();
        assert_relative_eq!(c.matrix[0][1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(c.matrix[0][3], -1.0, epsilon = 1e-12);
        assert_eq!(c.matrix[2][2], 0.0);

        let quad = interlimb_correlation(&shifted([0.0, 90.0, 180.0, 270.0])).unwrap();
        assert!(quad.max_off_diagonal().abs() < 1e-9);
        assert!(quad.matrix.iter().flatten().all(|&v| v <= 1e-9));
    }

    #[test]
    fn zero_variance_is_flagged() {
        let mut s = shifted([0.0, 90.0, 180.0, 270.0]);
        s[2] = vec![1.0; 1000];
        let c = interlimb_correlation(&s).unwrap();
        assert!(c.degenerate[2]);
        assert_eq!(c.matrix[2], [0.0; 4]);
        assert_eq!(classify_gait(&c, 0.3, WalkRule::default()), Gait::Unclassified);
    }

    fn with_pair(i: usize, j: usize, v: f64, rest: f64) -> InterlimbCorrelation {
        let mut matrix = [[rest; 4]; 4];
        for (k, row) in matrix.iter_mut().enumerate() {
            row[k] = 0.0;
        }
        matrix[i][j] = v;
        matrix[j][i] = v;
        InterlimbCorrelation {
            matrix,
            degenerate: [false; 4],
        }
    }

    #[test]
    fn gait_examples() {
        assert_eq!(classify_gait(&with_pair(0, 3, 0.9, -0.5), 0.3, WalkRule::default()), Gait::Trot);
        assert_eq!(classify_gait(&with_pair(0, 1, 0.8, -0.5), 0.3, WalkRule::default()), Gait::Bound);
        assert_eq!(classify_gait(&with_pair(1, 3, 0.8, -0.5), 0.3, WalkRule::default()), Gait::Pace);
        assert_eq!(classify_gait(&with_pair(0, 1, 0.2, 0.1), 0.3, WalkRule::default()), Gait::Walk);
        assert_eq!(classify_gait(&with_pair(0, 1, 0.2, 0.1), 0.3, WalkRule::AllNegative), Gait::Unclassified);
        assert_eq!(classify_gait(&with_pair(0, 1, -0.2, -0.1), 0.3, WalkRule::AllNegative), Gait::Walk);
    }

    #[test]
    fn q_examples() {
        assert_eq!(entrainment_q_default(1.0, 1.0, 0.0), 1.0);
        assert_eq!(entrainment_q_default(0.5, 1.0, 0.0), 1.0);
        assert_relative_eq!(entrainment_q_default(0.8, 1.0, 0.0), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn wavelet_matched_and_mismatched() {
        let n = 3000;
        let probe = 0.5;
        let sine = |period: f64| -> Vec<f64> { (0..n).map(|k| (2.0 * PI * k as f64 * DT / period).sin()).collect() };
        let matched = wavelet_sync(&sine(probe), probe, DT, &WaveletOptions::default()).unwrap();
        let edge = ((1.5 * probe * 3.0 + 1.5) / DT) as usize;
        assert!(matched[edge..n - edge].iter().all(|&v| v > 0.99));

        // unnormalised comparison: scale the mismatched trace by the matched peak
        let raw = |s: &[f64]| -> f64 {
            let sd = 1.5 * probe / DT;
            let env = gaussian_kernel(sd);
            let half = env.len() / 2;
            let mid = n / 2;
            let (mut re, mut im) = (0.0, 0.0);
            for (i, g) in env.iter().enumerate() {
                let ph = 2.0 * PI * (i as f64 - half as f64) * DT / probe;
                re += s[mid + i - half] * g * ph.cos();
                im += s[mid + i - half] * g * ph.sin();
            }
            (re * re + im * im).sqrt()
        };
        assert!(raw(&sine(2.0 * probe)) < 0.5 * raw(&sine(probe)));
        assert_eq!(wavelet_sync(&vec![0.0; n], probe, DT, &WaveletOptions::default()).unwrap(), vec![0.0; n]);
    }

    #[test]
    fn sync_rises_and_falls_with_a_switched_rhythm() {
        let (start, stop, probe) = (8.0, 16.0, 0.618);
        let n = (24.0 / DT) as usize;
        let mut phase = 0.0;
        let series: Vec<f64> = (1..=n)
            .map(|k| {
                let t = k as f64 * DT;
                let period = if (start..stop).contains(&t) { probe } else { 1.0 };
                phase += 2.0 * PI * DT / period;
                phase.sin()
            })
            .collect();
        let trace = wavelet_sync(&series, probe, DT, &WaveletOptions::default()).unwrap();
        let tr = sync_transitions(&trace, DT, start, stop).unwrap();
        assert!(tr.contrast() > 0.3, "{tr:?}");
        assert!(tr.onset.unwrap() < 3.0 && tr.offset.unwrap() < 3.0, "{tr:?}");

        let flat = vec![0.5; n];
        let none = sync_transitions(&flat, DT, start, stop).unwrap();
        assert_eq!((none.onset, none.offset), (None, None));
        assert!(sync_transitions(&flat[..100], DT, start, stop).is_err());
    }

    #[test]
    fn ols_examples() {
        let x: Vec<f64> = (0..20).map(|k| k as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let fit = ols_fit(&y, &[x.clone()]).unwrap();
        assert_relative_eq!(fit.coefficients[1], 2.0, epsilon = 1e-10);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-10));

        let flat = vec![3.5; 20];
        let fit = ols_fit(&flat, &[x.clone()]).unwrap();
        assert_relative_eq!(fit.coefficients[1], 0.0, epsilon = 1e-10);
        assert_relative_eq!(fit.coefficients[0], 3.5, epsilon = 1e-10);

        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..100).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|v| v + normal.sample(&mut rng)).collect();
        let fit = ols_fit(&ys, &[xs]).unwrap();
        assert!((fit.coefficients[1] - 1.0).abs() < 3.0 * fit.std_errors[1]);
        assert!(fit.p_values[1] < 1e-6);
    }

    #[test]
    fn ols_names_collinear_columns() {
        let a: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v + 1.0).collect();
        match ols_fit(&a, &[a.clone(), b]) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec![2]),
            other => panic!("{other:?}"),
        }
    }
}
