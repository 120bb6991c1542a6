//! Rhythmic impulse trains, exponential low-pass preprocessing and the
//! filter layer that routes the stimulus into the CPG.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::{Limb, FILTER_SIZE, LIMBS, NEURON_T0};
use crate::neuro::{rectify, simulate, Drive, NeuronModel, NeuronParams, NeuronRole, NetworkSpec, NetworkState, NETWORK_SCHEMA_VERSION};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StimulusTrain {
    /// Base inter-impulse period (s).
    pub period: f64,
    pub duration: f64,
    /// Timing jitter standard deviation as a fraction of the period.
    pub jitter: f64,
    pub amplitude: f64,
    /// Every `missing_every`-th impulse is dropped (0 disables).
    pub missing_every: usize,
    pub seed: u64,
}

impl StimulusTrain {
    pub fn new(period: f64, duration: f64) -> Self {
        Self {
            period,
            duration,
            jitter: 0.0,
            amplitude: 1.0,
            missing_every: 4,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::InvalidInput(format!("stimulus period must be positive, got {}", self.period)));
        }
        if !(self.jitter >= 0.0) || !(self.duration >= 0.0) {
            return Err(Error::InvalidInput("stimulus jitter and duration must be non-negative".into()));
        }
        Ok(())
    }
}

/// Impulse times `k T` with every index `k ≡ missing_every - 1` removed,
/// each perturbed by Gaussian jitter and kept inside `[0, duration)`.
pub fn generate_train(train: &StimulusTrain) -> Result<Vec<f64>> {
    train.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
    let noise = Normal::new(0.0, train.jitter * train.period)
        .map_err(|e| Error::InvalidInput(format!("jitter: {e}")))?;
    let mut times = Vec::new();
    let mut k = 0usize;
    loop {
        let nominal = k as f64 * train.period;
        if nominal >= train.duration {
            break;
        }
        let skip = train.missing_every > 0 && k % train.missing_every == train.missing_every - 1;
        if !skip {
            let offset = if train.jitter > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let t = (nominal + offset).max(0.0);
            if t < train.duration {
                times.push(t);
            }
        }
        k += 1;
    }
    times.sort_by(f64::total_cmp);
    Ok(times)
}

/// Exponentially decaying trace of unit impulses, sampled every `dt`.
/// Each impulse is added at its nearest sample.
pub fn lowpass_signal(times: &[f64], lowpass_tau: f64, dt: f64, duration: f64) -> Result<Vec<f64>> {
    if !(lowpass_tau > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidInput("low-pass time constant and step must be positive".into()));
    }
    let n = (duration / dt).round().max(0.0) as usize;
    let mut kicks = vec![0.0; n];
    for &t in times {
        let idx = (t / dt).round() as usize;
        if idx < n {
            kicks[idx] += 1.0;
        }
    }
    let decay = (-dt / lowpass_tau).exp();
    let mut level = 0.0;
    Ok(kicks
        .into_iter()
        .map(|k| {
            level = level * decay + k;
            level
        })
        .collect())
}

/// Plain-text impulse list, one time in seconds per line.
pub fn format_impulse_times(times: &[f64]) -> String {
    let mut out = String::new();
    for t in times {
        out.push_str(&format!("{t}\n"));
    }
    out
}

/// Parses an impulse list; blank lines and `#` comments are ignored. Times
/// must be finite, non-negative and sorted.
pub fn parse_impulse_times(text: &str) -> Result<Vec<f64>> {
    let mut times = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let t: f64 = line
            .parse()
            .map_err(|_| Error::InvalidInput(format!("line {}: not a number: {line:?}", lineno + 1)))?;
        if !t.is_finite() || t < 0.0 {
            return Err(Error::InvalidInput(format!("line {}: invalid impulse time {t}", lineno + 1)));
        }
        if let Some(&prev) = times.last() {
            if t < prev {
                return Err(Error::InvalidInput(format!(
                    "line {}: impulse times are not sorted ({t} after {prev})",
                    lineno + 1
                )));
            }
        }
        times.push(t);
    }
    Ok(times)
}

/// Filter layer: input gains, inhibitory recurrent weights, output matrix
/// `M` (filter neuron x limb) and the fixed neuron constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterWiring {
    #[serde(rename = "G")]
    pub g: Vec<f64>,
    pub w: Vec<Vec<f64>>,
    #[serde(rename = "M")]
    pub m: Vec<Vec<f64>>,
    pub c: f64,
    pub lowpass_tau: f64,
    pub tau0: f64,
    pub t0: f64,
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
    pub kappa: f64,
    pub u0: f64,
    /// CPG neuron receiving each column of `M`.
    pub targets: Vec<usize>,
}

impl Default for FilterWiring {
    fn default() -> Self {
        Self {
            g: vec![0.0; FILTER_SIZE],
            w: vec![vec![0.0; FILTER_SIZE]; FILTER_SIZE],
            m: vec![vec![0.0; LIMBS]; FILTER_SIZE],
            c: 2.0,
            lowpass_tau: 0.1,
            tau0: 0.15,
            t0: NEURON_T0,
            gamma: 0.03,
            a: 2.0,
            b: 0.3,
            kappa: 4.0,
            u0: 1.0,
            targets: Limb::ALL.iter().map(|l| l.interneuron()).collect(),
        }
    }
}

impl FilterWiring {
    pub fn size(&self) -> usize {
        self.g.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.size();
        if self.w.len() != n || self.w.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                what: "filter weights",
                expected: n,
                found: self.w.len(),
            });
        }
        if self.m.len() != n || self.m.iter().any(|r| r.len() != self.targets.len()) {
            return Err(Error::DimensionMismatch {
                what: "filter output matrix",
                expected: n,
                found: self.m.len(),
            });
        }
        if self.w.iter().flatten().any(|&x| x > 0.0) {
            return Err(Error::Config("filter weights must be inhibitory (<= 0)".into()));
        }
        if (0..n).any(|i| self.w[i][i] != 0.0) {
            return Err(Error::Config("filter neurons cannot connect to themselves".into()));
        }
        if !(self.tau0 > 0.0) || !(self.lowpass_tau > 0.0) {
            return Err(Error::Config("tau0 and the low-pass constant must be positive".into()));
        }
        Ok(())
    }

    fn neuron(&self, i: usize) -> NeuronParams {
        NeuronParams {
            t0: self.t0,
            gamma: self.gamma,
            a: self.a,
            b: self.b,
            kappa: self.kappa,
            u0: self.u0,
            c: self.c,
            d: 0.0,
            g: self.g[i],
        }
    }

    /// The filter layer on its own.
    pub fn network(&self) -> Result<NetworkSpec> {
        self.validate()?;
        let n = self.size();
        let spec = NetworkSpec {
            schema_version: NETWORK_SCHEMA_VERSION,
            params: (0..n).map(|i| self.neuron(i)).collect(),
            w: self.w.clone(),
            tau: vec![vec![0.0; n]; n],
            roles: vec![NeuronRole::Filter; n],
            mirror: Vec::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Appends the filter neurons to `cpg` and links them to the target
    /// neurons through `M` with threshold `tau0`.
    pub fn attach(&self, cpg: &NetworkSpec) -> Result<NetworkSpec> {
        self.validate()?;
        cpg.validate()?;
        let nc = cpg.n();
        if let Some(&bad) = self.targets.iter().find(|&&t| t >= nc) {
            return Err(Error::Config(format!("filter target neuron {bad} is outside the CPG")));
        }
        let nf = self.size();
        let n = nc + nf;
        let mut w = vec![vec![0.0; n]; n];
        let mut tau = vec![vec![0.0; n]; n];
        for i in 0..nc {
            w[i][..nc].copy_from_slice(&cpg.w[i]);
            tau[i][..nc].copy_from_slice(&cpg.tau[i]);
        }
        for (j, row) in self.m.iter().enumerate() {
            for (k, &weight) in row.iter().enumerate() {
                let target = self.targets[k];
                w[target][nc + j] += weight;
                tau[target][nc + j] = self.tau0;
            }
        }
        for i in 0..nf {
            w[nc + i][nc..].copy_from_slice(&self.w[i]);
        }
        let mut params = cpg.params.clone();
        params.extend((0..nf).map(|i| self.neuron(i)));
        let mut roles = cpg.roles.clone();
        roles.extend(std::iter::repeat(NeuronRole::Filter).take(nf));
        let mirror = if cpg.mirror.is_empty() {
            Vec::new()
        } else {
            cpg.mirror.iter().copied().chain(nc..n).collect()
        };
        let spec = NetworkSpec {
            schema_version: NETWORK_SCHEMA_VERSION,
            params,
            w,
            tau,
            roles,
            mirror,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Standard deviation of the thresholded filter outputs with no input,
    /// averaged over neurons: a 10 s window after 5 s of settling from rest.
    pub fn silent_output_sd(&self, dt: f64) -> Result<f64> {
        let spec = self.network()?;
        let n = spec.n();
        let settle = (5.0 / dt).round() as usize;
        let traj = simulate(&spec, NeuronModel::Modified, &NetworkState::zeros(n), &Drive::tonic(0.0), 15.0, dt)?;
        let mut total = 0.0;
        for i in 0..n {
            let xs: Vec<f64> = traj.u[settle..].iter().map(|row| rectify(row[i] - self.tau0)).collect();
            total += std_dev(&xs);
        }
        Ok(total / n as f64)
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// `M^T h(u_f - tau0)`: currents delivered to the four CPG targets.
pub fn filter_to_cpg_currents(filter_u: &[f64], wiring: &FilterWiring) -> Result<Vec<f64>> {
    if filter_u.len() != wiring.size() {
        return Err(Error::DimensionMismatch {
            what: "filter outputs",
            expected: wiring.size(),
            found: filter_u.len(),
        });
    }
    let mut out = vec![0.0; wiring.targets.len()];
    for (u, row) in filter_u.iter().zip(&wiring.m) {
        let act = rectify(u - wiring.tau0);
        for (o, m) in out.iter_mut().zip(row) {
            *o += m * act;
        }
    }
    Ok(out)
}
