//! Networks of Matsuoka neurons with a sigmoidal deactivation term.
//!
//! Each neuron carries a fast variable `u` and a slow recovery variable `v`:
//!
//! ```text
//! t0 du/dt = -u - a S(kappa (u - u0)) v + c + d I_DC + I_AC
//! t0 dv/dt = -gamma v + b h(u)
//! ```
//!
//! with `S(x) = 1 / (1 + exp(x))` and `h` the rectifier. The classic model
//! replaces `a S(..) v` with the linear `a v`. Both are integrated with
//! fixed-step explicit Euler.
//!
//! Synaptic sums are accumulated in mirror pairs when the network carries a
//! left/right permutation, so a laterally symmetric network started from
//! mirrored conditions produces a bit-exact mirrored trajectory.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CPG integration step (seconds).
pub const DEFAULT_DT: f64 = 0.008;

pub const NETWORK_SCHEMA_VERSION: u32 = 1;

/// Rectified linear unit.
#[inline]
pub fn rectify(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Deactivation sigmoid, decreasing in its argument.
#[inline]
pub fn deactivation(x: f64) -> f64 {
    1.0 / (1.0 + x.exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    /// Time constant (s).
    pub t0: f64,
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
    pub kappa: f64,
    pub u0: f64,
    /// Constant offset.
    pub c: f64,
    /// Brain-stem coupling.
    pub d: f64,
    /// External-input sensitivity.
    #[serde(rename = "G")]
    pub g: f64,
}

impl NeuronParams {
    /// Constant drive `c + d I_DC`.
    pub fn tonic(&self, i_dc: f64) -> f64 {
        self.c + self.d * i_dc
    }
}

/// `c + d I_DC > u0 + 2 / kappa`: the regime where a single modified neuron
/// has the nullcline shape that supports self-oscillation.
pub fn check_oscillation_condition(params: &NeuronParams, i_dc: f64) -> bool {
    params.tonic(i_dc) > params.u0 + 2.0 / params.kappa
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeuronRole {
    Interneuron,
    MotorA,
    MotorB,
    Filter,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NeuronModel {
    #[default]
    Modified,
    Classic,
}

/// Neuron parameters plus connection weights `w[i][j]` and thresholds
/// `tau[i][j]` for the link from neuron `j` to neuron `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub schema_version: u32,
    pub params: Vec<NeuronParams>,
    pub w: Vec<Vec<f64>>,
    pub tau: Vec<Vec<f64>>,
    pub roles: Vec<NeuronRole>,
    /// Left/right permutation of neuron indices; empty when the network has
    /// no lateral structure.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mirror: Vec<usize>,
}

impl NetworkSpec {
    pub fn new(params: Vec<NeuronParams>, w: Vec<Vec<f64>>, roles: Vec<NeuronRole>) -> Self {
        let n = params.len();
        Self {
            schema_version: NETWORK_SCHEMA_VERSION,
            params,
            w,
            tau: vec![vec![0.0; n]; n],
            roles,
            mirror: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.params.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.roles.len() != n {
            return Err(Error::DimensionMismatch {
                what: "neuron roles",
                expected: n,
                found: self.roles.len(),
            });
        }
        for (what, m) in [("weight matrix", &self.w), ("threshold matrix", &self.tau)] {
            if m.len() != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    found: m.len(),
                });
            }
            if let Some(row) = m.iter().find(|r| r.len() != n) {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    found: row.len(),
                });
            }
            if m.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("{what} contains non-finite values")));
            }
        }
        for (i, row) in self.w.iter().enumerate() {
            if row[i] != 0.0 {
                return Err(Error::Config(format!("self-connection on neuron {i}")));
            }
        }
        for (i, p) in self.params.iter().enumerate() {
            if !(p.t0 > 0.0) {
                return Err(Error::Config(format!("neuron {i}: t0 must be positive")));
            }
            let vals = [p.gamma, p.a, p.b, p.kappa, p.u0, p.c, p.d, p.g];
            if vals.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("neuron {i}: non-finite parameter")));
            }
        }
        if !self.mirror.is_empty() {
            if self.mirror.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "mirror permutation",
                    expected: n,
                    found: self.mirror.len(),
                });
            }
            for (i, &m) in self.mirror.iter().enumerate() {
                if m >= n || self.mirror[m] != i {
                    return Err(Error::Config(
                        "mirror map must be an involution on neuron indices".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// True when weights, thresholds and parameters are invariant under the
    /// mirror permutation.
    pub fn is_laterally_symmetric(&self) -> bool {
        if self.mirror.is_empty() {
            return false;
        }
        let m = &self.mirror;
        (0..self.n()).all(|i| {
            self.params[i] == self.params[m[i]]
                && (0..self.n()).all(|j| {
                    self.w[i][j] == self.w[m[i]][m[j]] && self.tau[i][j] == self.tau[m[i]][m[j]]
                })
        })
    }

    pub fn indices_with_role(&self, role: NeuronRole) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.roles[i] == role).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        if spec.schema_version != NETWORK_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported network schema version {}",
                spec.schema_version
            )));
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Source neurons grouped into mirror pairs; summing each pair before
    /// accumulating makes the synaptic sum exactly mirror-equivariant.
    fn source_groups(&self) -> Vec<(usize, Option<usize>)> {
        (0..self.n())
            .filter_map(|j| match self.mirror.get(j) {
                Some(&m) if m > j => Some((j, Some(m))),
                Some(&m) if m < j => None,
                _ => Some((j, None)),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl NetworkState {
    pub fn zeros(n: usize) -> Self {
        Self {
            u: vec![0.0; n],
            v: vec![0.0; n],
            t: 0.0,
        }
    }

    /// `u ~ U[0, 1]`, `v = 0`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self {
            u: (0..n).map(|_| rng.gen::<f64>()).collect(),
            v: vec![0.0; n],
            t: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn outputs(&self) -> Vec<f64> {
        self.u.iter().map(|&u| rectify(u)).collect()
    }

    /// Applies a neuron permutation (e.g. left/right swap).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            u: perm.iter().map(|&p| self.u[p]).collect(),
            v: perm.iter().map(|&p| self.v[p]).collect(),
            t: self.t,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }
}

/// Inputs held constant over one integration step.
#[derive(Clone, Copy, Debug)]
pub struct StepInput<'a> {
    /// Brain-stem drive, shared by all neurons.
    pub i_dc: f64,
    /// External (low-passed) stimulus value.
    pub i_ext: f64,
    /// Feedback current per neuron; an empty slice means none.
    pub i_fb: &'a [f64],
}

impl StepInput<'static> {
    pub fn tonic(i_dc: f64) -> Self {
        Self {
            i_dc,
            i_ext: 0.0,
            i_fb: &[],
        }
    }
}

/// Fast input `G_i I_ext + I_fb,i + sum_j w_ij h(u_j - tau_ij)`.
pub fn synaptic_input(spec: &NetworkSpec, state: &NetworkState, input: &StepInput) -> Result<Vec<f64>> {
    check_dims(spec, state, input)?;
    let groups = spec.source_groups();
    let mut out = vec![0.0; spec.n()];
    accumulate_input(spec, &groups, state, input, &mut out);
    Ok(out)
}

fn check_dims(spec: &NetworkSpec, state: &NetworkState, input: &StepInput) -> Result<()> {
    let n = spec.n();
    if state.u.len() != n || state.v.len() != n {
        return Err(Error::DimensionMismatch {
            what: "network state",
            expected: n,
            found: state.u.len().min(state.v.len()),
        });
    }
    if !input.i_fb.is_empty() && input.i_fb.len() != n {
        return Err(Error::DimensionMismatch {
            what: "feedback vector",
            expected: n,
            found: input.i_fb.len(),
        });
    }
    Ok(())
}

fn accumulate_input(
    spec: &NetworkSpec,
    groups: &[(usize, Option<usize>)],
    state: &NetworkState,
    input: &StepInput,
    out: &mut [f64],
) {
    for (i, slot) in out.iter_mut().enumerate() {
        let w = &spec.w[i];
        let tau = &spec.tau[i];
        let mut acc = spec.params[i].g * input.i_ext;
        if let Some(fb) = input.i_fb.get(i) {
            acc += fb;
        }
        for &(j, partner) in groups {
            match partner {
                None => {
                    if w[j] != 0.0 {
                        acc += w[j] * rectify(state.u[j] - tau[j]);
                    }
                }
                Some(k) => {
                    if w[j] != 0.0 || w[k] != 0.0 {
                        let cj = w[j] * rectify(state.u[j] - tau[j]);
                        let ck = w[k] * rectify(state.u[k] - tau[k]);
                        acc += cj + ck;
                    }
                }
            }
        }
        *slot = acc;
    }
}

/// Reusable stepping context for one network; caches the summation order
/// and a scratch buffer.
#[derive(Clone, Debug)]
pub struct Integrator<'a> {
    spec: &'a NetworkSpec,
    model: NeuronModel,
    dt: f64,
    groups: Vec<(usize, Option<usize>)>,
    current: Vec<f64>,
}

impl<'a> Integrator<'a> {
    pub fn new(spec: &'a NetworkSpec, model: NeuronModel, dt: f64) -> Result<Self> {
        spec.validate()?;
        if !(dt > 0.0) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        Ok(Self {
            spec,
            model,
            dt,
            groups: spec.source_groups(),
            current: vec![0.0; spec.n()],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn spec(&self) -> &NetworkSpec {
        self.spec
    }

    /// Advances `state` by one explicit Euler step in place.
    pub fn step(&mut self, state: &mut NetworkState, input: &StepInput) -> Result<()> {
        check_dims(self.spec, state, input)?;
        accumulate_input(self.spec, &self.groups, state, input, &mut self.current);
        let dt = self.dt;
        for i in 0..self.spec.n() {
            let p = &self.spec.params[i];
            let (u, v) = (state.u[i], state.v[i]);
            let adaptation = match self.model {
                NeuronModel::Modified => p.a * deactivation(p.kappa * (u - p.u0)) * v,
                NeuronModel::Classic => p.a * v,
            };
            let du = (-u - adaptation + p.tonic(input.i_dc) + self.current[i]) / p.t0;
            let dv = (-p.gamma * v + p.b * rectify(u)) / p.t0;
            state.u[i] = u + dt * du;
            state.v[i] = v + dt * dv;
        }
        state.t += dt;
        if let Some(neuron) = (0..self.spec.n()).find(|&i| !(state.u[i].is_finite() && state.v[i].is_finite())) {
            return Err(Error::IntegrationBlowup {
                neuron,
                time: state.t,
            });
        }
        Ok(())
    }
}

/// One explicit-Euler step of the modified model.
pub fn step_modified(spec: &NetworkSpec, state: &NetworkState, input: &StepInput, dt: f64) -> Result<NetworkState> {
    let mut next = state.clone();
    Integrator::new(spec, NeuronModel::Modified, dt)?.step(&mut next, input)?;
    Ok(next)
}

/// One explicit-Euler step of the classic (linear adaptation) model.
pub fn step_classic(spec: &NetworkSpec, state: &NetworkState, input: &StepInput, dt: f64) -> Result<NetworkState> {
    let mut next = state.clone();
    Integrator::new(spec, NeuronModel::Classic, dt)?.step(&mut next, input)?;
    Ok(next)
}

/// A scalar input over time, either constant or sampled once per step
/// (the last sample is held past the end).
#[derive(Clone, Debug, PartialEq)]
pub enum Signal {
    Constant(f64),
    Sampled(Vec<f64>),
}

impl Signal {
    pub fn at(&self, step: usize) -> f64 {
        match self {
            Signal::Constant(x) => *x,
            Signal::Sampled(xs) => xs.get(step).or(xs.last()).copied().unwrap_or(0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Drive {
    pub i_dc: Signal,
    pub i_ext: Signal,
}

impl Drive {
    pub fn tonic(i_dc: f64) -> Self {
        Self {
            i_dc: Signal::Constant(i_dc),
            i_ext: Signal::Constant(0.0),
        }
    }
}

/// Sampled trajectory; row `k` is the state after step `k + 1`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Rectified output series of one neuron.
    pub fn output(&self, neuron: usize) -> Vec<f64> {
        self.u.iter().map(|row| rectify(row[neuron])).collect()
    }

    pub fn fast(&self, neuron: usize) -> Vec<f64> {
        self.u.iter().map(|row| row[neuron]).collect()
    }
}

/// Runs `duration / dt` steps from `initial`, recording every step.
pub fn simulate(
    spec: &NetworkSpec,
    model: NeuronModel,
    initial: &NetworkState,
    drive: &Drive,
    duration: f64,
    dt: f64,
) -> Result<Trajectory> {
    if duration < 0.0 || !duration.is_finite() {
        return Err(Error::Config(format!("invalid duration {duration}")));
    }
    let steps = (duration / dt).round() as usize;
    let mut integrator = Integrator::new(spec, model, dt)?;
    let mut state = initial.clone();
    let mut traj = Trajectory {
        t: Vec::with_capacity(steps),
        u: Vec::with_capacity(steps),
        v: Vec::with_capacity(steps),
    };
    for k in 0..steps {
        let input = StepInput {
            i_dc: drive.i_dc.at(k),
            i_ext: drive.i_ext.at(k),
            i_fb: &[],
        };
        integrator.step(&mut state, &input)?;
        traj.t.push(state.t);
        traj.u.push(state.u.clone());
        traj.v.push(state.v.clone());
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn neuron(c: f64) -> NeuronParams {
        NeuronParams {
            t0: 0.052,
            gamma: 0.03,
            a: 2.0,
            b: 0.3,
            kappa: 4.0,
            u0: 1.0,
            c,
            d: 0.0,
            g: 0.0,
        }
    }

    fn single(c: f64) -> NetworkSpec {
        NetworkSpec::new(vec![neuron(c)], vec![vec![0.0]], vec![NeuronRole::Filter])
    }

    fn pair(w12: f64) -> NetworkSpec {
        NetworkSpec::new(
            vec![neuron(0.0), neuron(0.0)],
            vec![vec![0.0, w12], vec![0.0, 0.0]],
            vec![NeuronRole::Filter; 2],
        )
    }

    fn count_peaks(xs: &[f64], min_prominence: f64) -> usize {
        let mut count = 0;
        let mut trough = f64::INFINITY;
        for win in xs.windows(3) {
            trough = trough.min(win[1]);
            if win[1] > win[0] && win[1] >= win[2] {
                if win[1] - trough >= min_prominence {
                    count += 1;
                }
                trough = win[1];
            }
        }
        count
    }

    #[test]
    fn zero_input_gives_zero_current() {
        let spec = pair(0.5);
        let state = NetworkState {
            u: vec![-0.3, -1.0],
            v: vec![0.0, 0.0],
            t: 0.0,
        };
        let cur = synaptic_input(&spec, &state, &StepInput::tonic(0.0)).unwrap();
        assert_eq!(cur, vec![0.0, 0.0]);
    }

    #[test]
    fn hand_evaluated_synaptic_input() {
        let spec = pair(0.5);
        let state = NetworkState {
            u: vec![0.0, 2.0],
            v: vec![0.0, 0.0],
            t: 0.0,
        };
        let cur = synaptic_input(&spec, &state, &StepInput::tonic(0.0)).unwrap();
        assert_eq!(cur[0], 1.0);
    }

    #[test]
    fn threshold_exactly_met_contributes_nothing() {
        let mut spec = pair(-7.0);
        spec.tau[0][1] = 0.15;
        let state = NetworkState {
            u: vec![0.0, 0.15],
            v: vec![0.0, 0.0],
            t: 0.0,
        };
        let cur = synaptic_input(&spec, &state, &StepInput::tonic(0.0)).unwrap();
        assert_eq!(cur[0], 0.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let spec = pair(0.5);
        let state = NetworkState::zeros(3);
        assert!(matches!(
            synaptic_input(&spec, &state, &StepInput::tonic(0.0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_state_is_fixed_point_of_both_models() {
        let spec = single(0.0);
        let s0 = NetworkState::zeros(1);
        let input = StepInput::tonic(0.0);
        let m = step_modified(&spec, &s0, &input, DEFAULT_DT).unwrap();
        let c = step_classic(&spec, &s0, &input, DEFAULT_DT).unwrap();
        assert_eq!(m.u, vec![0.0]);
        assert_eq!(m.v, vec![0.0]);
        assert_eq!(c.u, vec![0.0]);
        assert_eq!(c.v, vec![0.0]);
        assert_relative_eq!(m.t, DEFAULT_DT);
    }

    fn inhibitory_pair(c: f64, w: f64) -> NetworkSpec {
        NetworkSpec::new(
            vec![neuron(c), neuron(c)],
            vec![vec![0.0, w], vec![w, 0.0]],
            vec![NeuronRole::Filter; 2],
        )
    }

    #[test]
    fn inhibitory_pair_oscillates_above_condition() {
        let spec = inhibitory_pair(2.2, -1.2);
        assert!(check_oscillation_condition(&spec.params[0], 0.0));
        let traj = simulate(
            &spec,
            NeuronModel::Modified,
            &NetworkState {
                u: vec![0.5, 0.1],
                v: vec![0.0, 0.0],
                t: 0.0,
            },
            &Drive::tonic(0.0),
            20.0,
            DEFAULT_DT,
        )
        .unwrap();
        let out = traj.output(0);
        assert!(count_peaks(&out, 0.05) >= 5);
        let fast = &traj.fast(0)[traj.len() / 2..];
        let mean = fast.iter().sum::<f64>() / fast.len() as f64;
        assert!(fast.windows(2).filter(|w| w[0] < mean && w[1] >= mean).count() >= 5);
    }

    #[test]
    fn lone_neuron_is_a_stable_focus_at_moderate_drive() {
        // linearisation at the fixed point near u = 0.108 has eigenvalues -7.7 +- 12.8i
        let spec = single(2.2);
        let traj = simulate(
            &spec,
            NeuronModel::Modified,
            &NetworkState {
                u: vec![0.5],
                v: vec![0.0],
                t: 0.0,
            },
            &Drive::tonic(0.0),
            20.0,
            DEFAULT_DT,
        )
        .unwrap();
        let settle = (5.0 / DEFAULT_DT) as usize;
        assert_eq!(count_peaks(&traj.output(0)[settle..], 1e-3), 0);
        assert_relative_eq!(*traj.fast(0).last().unwrap(), 0.1076, epsilon = 1e-3);
    }

    #[test]
    fn single_neuron_settles_below_condition() {
        let spec = single(0.5);
        assert!(!check_oscillation_condition(&spec.params[0], 0.0));
        let traj = simulate(
            &spec,
            NeuronModel::Modified,
            &NetworkState {
                u: vec![0.5],
                v: vec![0.0],
                t: 0.0,
            },
            &Drive::tonic(0.0),
            20.0,
            DEFAULT_DT,
        )
        .unwrap();
        let settle = (5.0 / DEFAULT_DT) as usize;
        assert_eq!(count_peaks(&traj.output(0)[settle..], 1e-3), 0);
    }

    #[test]
    fn oscillation_condition_examples() {
        let mut p = neuron(2.0);
        p.u0 = 1.0;
        p.kappa = 4.0;
        assert!(check_oscillation_condition(&p, 0.0));
        p.c = p.u0 + 2.0 / p.kappa;
        assert!(!check_oscillation_condition(&p, 0.0));
        let q = NeuronParams {
            c: 1.1,
            d: 0.9,
            u0: 1.0,
            kappa: 0.5,
            ..neuron(0.0)
        };
        assert!(!check_oscillation_condition(&q, 1.0));
    }

    #[test]
    fn blowup_reports_neuron() {
        let mut spec = single(0.0);
        spec.params[0].t0 = 1e-300;
        let s0 = NetworkState {
            u: vec![1e300],
            v: vec![0.0],
            t: 0.0,
        };
        let err = step_modified(&spec, &s0, &StepInput::tonic(0.0), DEFAULT_DT).unwrap_err();
        assert!(matches!(err, Error::IntegrationBlowup { neuron: 0, .. }));
    }

    #[test]
    fn zero_duration_is_empty_and_runs_are_deterministic() {
        let spec = pair(-1.0);
        let s0 = NetworkState {
            u: vec![0.3, 0.7],
            v: vec![0.0, 0.0],
            t: 0.0,
        };
        let empty = simulate(&spec, NeuronModel::Modified, &s0, &Drive::tonic(0.5), 0.0, DEFAULT_DT).unwrap();
        assert!(empty.is_empty());
        let a = simulate(&spec, NeuronModel::Modified, &s0, &Drive::tonic(0.5), 3.0, DEFAULT_DT).unwrap();
        let b = simulate(&spec, NeuronModel::Modified, &s0, &Drive::tonic(0.5), 3.0, DEFAULT_DT).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let mut spec = pair(0.25);
        spec.mirror = vec![1, 0];
        let text = spec.to_json().unwrap();
        assert!(text.contains("\"G\""));
        assert_eq!(NetworkSpec::from_json(&text).unwrap(), spec);
        let bumped = text.replace("\"schema_version\": 1", "\"schema_version\": 99");
        assert!(NetworkSpec::from_json(&bumped).is_err());
    }

    #[test]
    fn self_connection_is_rejected() {
        let mut spec = pair(0.25);
        spec.w[1][1] = 1.0;
        assert!(spec.validate().is_err());
    }
}
