//! Reduced-order quadruped: a rigid trunk on four massless, servoed
//! two-segment legs with penalty contacts, driven by a CPG through the
//! joint-angle mapping and returning tilt feedback.
//!
//! Frames: `x` points to the robot's right, `y` forward, `z` up. Limbs are
//! ordered LF, RF, LH, RH. Every force and torque sum runs over left/right
//! pairs so a mirrored state evolves into the exactly mirrored state.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::Limb;
use crate::neuro::{rectify, Integrator, NeuronModel, NeuronRole, NetworkSpec, NetworkState, StepInput, DEFAULT_DT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Normal,
    Short,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorphologyParams {
    pub variant: Variant,
    /// Trunk box extents (m): lateral, fore-aft, vertical.
    pub trunk_width: f64,
    pub trunk_length: f64,
    pub trunk_height: f64,
    /// Hip positions relative to the trunk centre (m).
    pub hip_lateral: f64,
    pub hip_forward: f64,
    /// Total mass (kg), including the lumped leg masses.
    pub mass: f64,
    pub leg_mass: f64,
    pub upper_leg: f64,
    pub lower_leg: f64,
    /// Per-contact-point normal stiffness (N/m) and damping (N s/m).
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    /// Tangential viscous coefficient (N s/m), capped by Coulomb friction.
    pub tangential_damping: f64,
    pub friction: f64,
    pub gravity: f64,
    /// First-order lag of the joint servos (s).
    pub servo_time_constant: f64,
    /// Largest normal force a foot or knee can exert (N); beyond it the
    /// servo yields.
    pub leg_force_limit: f64,
    /// Contact sub-steps per physics step.
    pub substeps: usize,
}

impl MorphologyParams {
    pub fn normal() -> Self {
        Self {
            variant: Variant::Normal,
            trunk_width: 0.24,
            trunk_length: 0.42,
            trunk_height: 0.06,
            hip_lateral: 0.10,
            hip_forward: 0.19,
            mass: 2.2,
            leg_mass: 0.12,
            upper_leg: 0.16,
            lower_leg: 0.16,
            contact_stiffness: 5000.0,
            contact_damping: 100.0,
            tangential_damping: 150.0,
            friction: 0.8,
            gravity: 9.81,
            servo_time_constant: 0.04,
            leg_force_limit: 15.0,
            substeps: 20,
        }
    }

    /// Upper leg 40% and lower leg 33% shorter than normal.
    pub fn short() -> Self {
        let n = Self::normal();
        Self {
            variant: Variant::Short,
            upper_leg: n.upper_leg * 0.60,
            lower_leg: n.lower_leg * 0.67,
            ..n
        }
    }

    pub fn for_variant(variant: Variant) -> Self {
        match variant {
            Variant::Normal => Self::normal(),
            Variant::Short => Self::short(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.trunk_width,
            self.trunk_length,
            self.trunk_height,
            self.mass,
            self.upper_leg,
            self.lower_leg,
            self.contact_stiffness,
            self.servo_time_constant,
            self.leg_force_limit,
        ];
        if positive.iter().any(|&x| !(x > 0.0 && x.is_finite())) || self.substeps == 0 {
            return Err(Error::Config("morphology lengths, mass, stiffness and servo constant must be positive".into()));
        }
        if self.leg_mass * 4.0 >= self.mass {
            return Err(Error::Config("leg mass exceeds total mass".into()));
        }
        Ok(())
    }

    /// Body-frame inertia: trunk box plus point leg masses halfway down the
    /// upper leg.
    pub fn inertia(&self) -> Vector3<f64> {
        let trunk = self.mass - 4.0 * self.leg_mass;
        let (w, l, h) = (self.trunk_width, self.trunk_length, self.trunk_height);
        let (x, y, z) = (self.hip_lateral, self.hip_forward, 0.5 * self.upper_leg);
        Vector3::new(
            trunk / 12.0 * (l * l + h * h) + 4.0 * self.leg_mass * (y * y + z * z),
            trunk / 12.0 * (w * w + h * h) + 4.0 * self.leg_mass * (x * x + z * z),
            trunk / 12.0 * (w * w + l * l) + 4.0 * self.leg_mass * (x * x + y * y),
        )
    }

    pub fn hip(&self, limb: Limb) -> Vector3<f64> {
        Vector3::new(
            side(limb) * self.hip_lateral,
            if limb.is_front() { self.hip_forward } else { -self.hip_forward },
            0.0,
        )
    }

    /// Knee and foot positions in the body frame.
    pub fn leg_points(&self, limb: Limb, hip: f64, leg: f64, knee: f64) -> (Vector3<f64>, Vector3<f64>) {
        let (yk, zk) = (self.upper_leg * leg.sin(), self.upper_leg * leg.cos());
        let yf = yk + self.lower_leg * (leg + knee).sin();
        let zf = zk + self.lower_leg * (leg + knee).cos();
        let s = side(limb);
        let (sh, ch) = hip.sin_cos();
        let base = self.hip(limb);
        (
            base + Vector3::new(s * zk * sh, yk, -zk * ch),
            base + Vector3::new(s * zf * sh, yf, -zf * ch),
        )
    }

    /// Trunk-centre height at which the feet of `pose` just touch flat
    /// ground with a level trunk.
    pub fn standing_height(&self, pose: &JointAngles) -> f64 {
        Limb::ALL
            .iter()
            .map(|&l| {
                let (_, foot) = self.leg_points(l, pose.hip, pose.leg[l.index()], pose.knee[l.index()]);
                -foot.z
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Static penetration when four feet carry the weight.
    pub fn static_penetration(&self) -> f64 {
        self.mass * self.gravity / (4.0 * self.contact_stiffness)
    }

    fn corners(&self) -> [Vector3<f64>; 8] {
        let (x, y, z) = (0.5 * self.trunk_width, 0.5 * self.trunk_length, 0.5 * self.trunk_height);
        [
            Vector3::new(-x, y, -z),
            Vector3::new(x, y, -z),
            Vector3::new(-x, -y, -z),
            Vector3::new(x, -y, -z),
            Vector3::new(-x, y, z),
            Vector3::new(x, y, z),
            Vector3::new(-x, -y, z),
            Vector3::new(x, -y, z),
        ]
    }
}

fn side(limb: Limb) -> f64 {
    if limb.is_left() {
        -1.0
    } else {
        1.0
    }
}

/// Joint-activation and feedback parameters. Angles are in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointCommandParams {
    pub theta0_hip: f64,
    pub theta0_leg: f64,
    pub theta0_knee: f64,
    pub theta_lim_leg: f64,
    pub theta_lim_knee: f64,
    /// Output gains `A` and `B`.
    pub gain_a: f64,
    pub gain_b: f64,
    pub q_a_front: f64,
    pub q_b_front: f64,
    pub q_a_side: f64,
    pub q_b_side: f64,
}

impl JointCommandParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta0_leg > 0.0) || !(self.theta0_knee < 0.0) {
            return Err(Error::Config("standing leg angle must be positive and knee angle negative".into()));
        }
        if !(self.theta_lim_leg > 0.0) || !(self.theta_lim_knee > 0.0) {
            return Err(Error::Config("joint limits must be positive".into()));
        }
        Ok(())
    }

    pub fn standing_pose(&self) -> JointAngles {
        JointAngles {
            hip: self.theta0_hip.to_radians(),
            leg: [self.theta0_leg.to_radians(); 4],
            knee: [self.theta0_knee.to_radians(); 4],
        }
    }
}

/// Joint angles in radians; the hip abduction is shared by all limbs and
/// held at its standing value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointAngles {
    pub hip: f64,
    pub leg: [f64; 4],
    pub knee: [f64; 4],
}

impl JointAngles {
    pub fn mirrored(&self) -> Self {
        let swap = |a: [f64; 4]| [a[1], a[0], a[3], a[2]];
        Self {
            hip: self.hip,
            leg: swap(self.leg),
            knee: swap(self.knee),
        }
    }
}

#[inline]
fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Joint targets from the change in rectified motor outputs over one
/// decision interval. `theta_c` (radians) shifts the leg angle only.
pub fn joint_targets(
    delta_ha: &[f64; 4],
    delta_hb: &[f64; 4],
    dt_decision: f64,
    cmd: &JointCommandParams,
    theta_c: f64,
) -> Result<JointAngles> {
    if !(dt_decision > 0.0) {
        return Err(Error::Config("decision interval must be positive".into()));
    }
    let lim_leg = cmd.theta_lim_leg.to_radians();
    let lim_knee = cmd.theta_lim_knee.to_radians();
    let mut out = cmd.standing_pose();
    for k in 0..4 {
        let drive_a = 2.0 * cmd.gain_a / lim_leg * delta_ha[k] / dt_decision;
        let drive_b = 2.0 * cmd.gain_b / lim_knee * delta_hb[k] / dt_decision;
        out.leg[k] += lim_leg * (2.0 * logistic(drive_a) - 1.0) + theta_c;
        out.knee[k] += lim_knee * (2.0 * logistic(drive_b) - 1.0);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub velocity: Vector3<f64>,
    /// World-frame angular velocity.
    pub angular_velocity: Vector3<f64>,
    pub joints: JointAngles,
    pub contacts: [bool; 4],
    pub time: f64,
}

impl BodyState {
    /// Level trunk resting on the feet of `pose` at static penetration.
    pub fn standing(morph: &MorphologyParams, pose: JointAngles) -> Self {
        Self {
            position: Vector3::new(0.0, 0.0, morph.standing_height(&pose) - morph.static_penetration()),
            orientation: UnitQuaternion::identity(),
            velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
            joints: pose,
            contacts: [true; 4],
            time: 0.0,
        }
    }

    /// Reflection through the sagittal (`x = 0`) plane.
    pub fn mirrored(&self) -> Self {
        let q = self.orientation.quaternion();
        let orientation = UnitQuaternion::new_unchecked(nalgebra::Quaternion::new(q.w, q.i, -q.j, -q.k));
        let c = self.contacts;
        Self {
            position: Vector3::new(-self.position.x, self.position.y, self.position.z),
            orientation,
            velocity: Vector3::new(-self.velocity.x, self.velocity.y, self.velocity.z),
            angular_velocity: Vector3::new(self.angular_velocity.x, -self.angular_velocity.y, -self.angular_velocity.z),
            joints: self.joints.mirrored(),
            contacts: [c[1], c[0], c[3], c[2]],
            time: self.time,
        }
    }

    pub fn is_finite(&self) -> bool {
        let q = self.orientation.quaternion();
        self.position.iter().chain(self.velocity.iter()).chain(self.angular_velocity.iter()).all(|x| x.is_finite())
            && q.coords.iter().all(|x| x.is_finite())
    }

    pub fn top_normal(&self) -> Vector3<f64> {
        self.orientation * Vector3::z()
    }

    pub fn front_normal(&self) -> Vector3<f64> {
        self.orientation * Vector3::y()
    }

    /// `(sideways, front-back)` tilt: the component of the top normal along
    /// the horizontal right-hand direction of the heading, and the upward
    /// component of the front normal.
    pub fn tilt(&self) -> (f64, f64) {
        let up = self.top_normal();
        let fwd = self.front_normal();
        let norm = (fwd.x * fwd.x + fwd.y * fwd.y).sqrt();
        let sideways = if norm > 1e-12 {
            let (rx, ry) = (fwd.y / norm, -fwd.x / norm);
            up.x * rx + up.y * ry
        } else {
            0.0
        };
        (sideways, fwd.z)
    }

    /// `|n x g|^2` for the top normal `n` and ground normal `g`.
    pub fn tilt_squared(&self) -> f64 {
        let up = self.top_normal();
        up.x * up.x + up.y * up.y
    }

    /// Linear, rotational and gravitational energy (J).
    pub fn mechanical_energy(&self, morph: &MorphologyParams) -> f64 {
        let rot = self.orientation.to_rotation_matrix();
        let omega_b = rot.transpose() * self.angular_velocity;
        let inertia = morph.inertia();
        0.5 * morph.mass * self.velocity.norm_squared()
            + 0.5 * omega_b.component_mul(&omega_b).dot(&inertia)
            + morph.mass * morph.gravity * self.position.z
    }
}

/// Tilt feedback currents for the motor neurons, `(A, B)` per limb.
pub fn tilt_feedback(state: &BodyState, cmd: &JointCommandParams) -> ([f64; 4], [f64; 4]) {
    let (s, f) = state.tilt();
    let mut a = [0.0; 4];
    let mut b = [0.0; 4];
    for limb in Limb::ALL {
        let lr = if limb.is_left() { 1.0 } else { -1.0 };
        let fb = if limb.is_front() { 1.0 } else { -1.0 };
        a[limb.index()] = cmd.q_a_side * (lr * s) + cmd.q_a_front * (fb * f);
        b[limb.index()] = cmd.q_b_side * (lr * s) + cmd.q_b_front * (fb * f);
    }
    (a, b)
}

struct ContactPoint {
    limit: f64,
    body: Vector3<f64>,
    rel_velocity: Vector3<f64>,
}

/// Advances the body by `dt` seconds: joints servo toward `targets`, then
/// the trunk is integrated over `morph.substeps` contact sub-steps.
pub fn physics_step(state: &BodyState, targets: &JointAngles, morph: &MorphologyParams, dt: f64) -> Result<BodyState> {
    let mut next = state.clone();
    step_in_place(&mut next, targets, morph, dt)?;
    Ok(next)
}

fn step_in_place(state: &mut BodyState, targets: &JointAngles, morph: &MorphologyParams, dt: f64) -> Result<()> {
    let alpha = 1.0 - (-dt / morph.servo_time_constant).exp();
    let old = state.joints;
    let mut new = old;
    new.hip = targets.hip;
    for k in 0..4 {
        new.leg[k] += (targets.leg[k] - old.leg[k]) * alpha;
        new.knee[k] += (targets.knee[k] - old.knee[k]) * alpha;
    }

    // body-frame leg points at the start and end of the step, in mirror-pair order
    let order = [Limb::LeftFront, Limb::RightFront, Limb::LeftHind, Limb::RightHind];
    let mut start = [Vector3::zeros(); 8];
    let mut end = [Vector3::zeros(); 8];
    for (slot, &limb) in order.iter().enumerate() {
        let k = limb.index();
        let (k0, f0) = morph.leg_points(limb, old.hip, old.leg[k], old.knee[k]);
        let (k1, f1) = morph.leg_points(limb, new.hip, new.leg[k], new.knee[k]);
        start[slot] = f0;
        end[slot] = f1;
        start[4 + slot] = k0;
        end[4 + slot] = k1;
    }
    let corners = morph.corners();

    let n = morph.substeps;
    let h = dt / n as f64;
    let inertia = morph.inertia();
    let inertia_inv = Vector3::new(1.0 / inertia.x, 1.0 / inertia.y, 1.0 / inertia.z);
    let gravity = Vector3::new(0.0, 0.0, -morph.gravity);
    let mut contacts = [false; 4];
    let mut points: [ContactPoint; 16] = std::array::from_fn(|_| ContactPoint {
        limit: f64::INFINITY,
        body: Vector3::zeros(),
        rel_velocity: Vector3::zeros(),
    });

    for sub in 0..n {
        let frac = (sub as f64 + 0.5) / n as f64;
        for i in 0..8 {
            points[i] = ContactPoint {
                limit: morph.leg_force_limit,
                body: start[i] + (end[i] - start[i]) * frac,
                rel_velocity: (end[i] - start[i]) / dt,
            };
        }
        for (i, c) in corners.iter().enumerate() {
            points[8 + i] = ContactPoint {
                limit: f64::INFINITY,
                body: *c,
                rel_velocity: Vector3::zeros(),
            };
        }

        let rot = state.orientation.to_rotation_matrix();
        let mut force = Vector3::zeros();
        let mut torque = Vector3::zeros();
        for pair in 0..8 {
            let (fa, ta, ca) = contact_force(state, &rot, &points[2 * pair], morph);
            let (fb, tb, cb) = contact_force(state, &rot, &points[2 * pair + 1], morph);
            force += fa + fb;
            torque += ta + tb;
            if pair < 2 {
                let limb_a = order[2 * pair].index();
                let limb_b = order[2 * pair + 1].index();
                contacts[limb_a] |= ca;
                contacts[limb_b] |= cb;
            }
        }

        let accel = force / morph.mass + gravity;
        state.position += (state.velocity + accel * (0.5 * h)) * h;
        state.velocity += accel * h;

        let r = rot.matrix();
        let world_inertia = |r: &Matrix3<f64>, diag: &Vector3<f64>| r * Matrix3::from_diagonal(diag) * r.transpose();
        let momentum = world_inertia(r, &inertia) * state.angular_velocity + torque * h;
        let omega_mid = world_inertia(r, &inertia_inv) * momentum;
        let dq = UnitQuaternion::from_scaled_axis(omega_mid * h);
        let mut q = dq * state.orientation;
        q.renormalize();
        state.orientation = q;
        let r_new = q.to_rotation_matrix();
        state.angular_velocity = world_inertia(r_new.matrix(), &inertia_inv) * momentum;
    }

    state.joints = new;
    state.contacts = contacts;
    state.time += dt;
    if !state.is_finite() || state.position.z.abs() > 1e3 || state.velocity.norm() > 1e3 {
        return Err(Error::SimulationDiverged { time: state.time });
    }
    Ok(())
}

fn contact_force(
    state: &BodyState,
    rot: &nalgebra::Rotation3<f64>,
    point: &ContactPoint,
    morph: &MorphologyParams,
) -> (Vector3<f64>, Vector3<f64>, bool) {
    let r = rot * point.body;
    let z = state.position.z + r.z;
    if z >= 0.0 {
        return (Vector3::zeros(), Vector3::zeros(), false);
    }
    let v = state.velocity + state.angular_velocity.cross(&r) + rot * point.rel_velocity;
    let normal = (morph.contact_stiffness * (-z) - morph.contact_damping * v.z).clamp(0.0, point.limit);
    let mut fx = -morph.tangential_damping * v.x;
    let mut fy = -morph.tangential_damping * v.y;
    let ft = (fx * fx + fy * fy).sqrt();
    let cap = morph.friction * normal;
    if ft > cap {
        let scale = cap / ft;
        fx *= scale;
        fy *= scale;
    }
    let f = Vector3::new(fx, fy, normal);
    (f, r.cross(&f), true)
}

/// Linear ramp of a control parameter over one stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub start: f64,
    pub end: f64,
}

impl Ramp {
    pub fn constant(x: f64) -> Self {
        Self { start: x, end: x }
    }

    pub fn at(&self, frac: f64) -> f64 {
        self.start + (self.end - self.start) * frac
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub duration: f64,
    pub i_dc: Ramp,
    pub theta_c: Ramp,
}

/// Control-parameter schedule: consecutive stages with linear ramps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub stages: Vec<Stage>,
}

impl Schedule {
    pub fn constant(duration: f64, i_dc: f64, theta_c: f64) -> Self {
        Self {
            stages: vec![Stage {
                duration,
                i_dc: Ramp::constant(i_dc),
                theta_c: Ramp::constant(theta_c),
            }],
        }
    }

    pub fn duration(&self) -> f64 {
        self.stages.iter().map(|s| s.duration).sum()
    }

    /// `(I_DC, theta_C)` at trial time `t`.
    pub fn controls(&self, t: f64) -> (f64, f64) {
        let mut start = 0.0;
        for (k, s) in self.stages.iter().enumerate() {
            let last = k + 1 == self.stages.len();
            if t < start + s.duration || last {
                let frac = if s.duration > 0.0 { ((t - start) / s.duration).clamp(0.0, 1.0) } else { 0.0 };
                return (s.i_dc.at(frac), s.theta_c.at(frac));
            }
            start += s.duration;
        }
        (0.0, 0.0)
    }
}

/// Timing and protocol constants of a trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    /// CPG-only settling before physics starts (s).
    pub burn_in: f64,
    /// Joint deflections are scaled 0 -> 1 over this initial window (s).
    pub actuator_ramp: f64,
    pub cpg_dt: f64,
    pub physics_dt: f64,
    pub decision_dt: f64,
    /// Joint-angle offset (rad) per unit of the theta_C control.
    pub theta_c_gain: f64,
    pub model: NeuronModel,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            burn_in: 8.0,
            actuator_ramp: 2.0,
            cpg_dt: DEFAULT_DT,
            physics_dt: 0.02,
            decision_dt: 0.1,
            theta_c_gain: 1.0,
            model: NeuronModel::Modified,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrialOptions {
    /// Keep time series of neurons, joints and pose.
    pub record: bool,
    /// External input sampled at every CPG step from trial start.
    pub stimulus: Option<Vec<f64>>,
    /// Start from the left/right mirror of the seeded initial condition.
    pub mirror_initial: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Displacement {
    /// Sideways (m).
    pub x: f64,
    /// Forward (m).
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub stages: Vec<Displacement>,
    /// Mean trunk height over the trial relative to the standing height.
    pub h_tot: f64,
    /// Root-mean-square tilt.
    pub t_tot: f64,
    pub diverged_at: Option<f64>,
}

impl TrialMetrics {
    pub fn fallen(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn total(&self) -> Displacement {
        Displacement {
            x: self.stages.iter().map(|s| s.x).sum(),
            y: self.stages.iter().map(|s| s.y).sum(),
        }
    }
}

/// Time series from one trial. Neuron outputs are sampled every CPG step,
/// body quantities every physics step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrialRecord {
    pub cpg_time: Vec<f64>,
    /// Rectified outputs of every neuron, one row per CPG step.
    pub outputs: Vec<Vec<f64>>,
    pub body_time: Vec<f64>,
    pub position: Vec<[f64; 3]>,
    pub orientation: Vec<[f64; 4]>,
    pub joints: Vec<JointAngles>,
    /// Times at which joint targets and feedback were exchanged.
    pub decision_time: Vec<f64>,
    pub motor_a: [usize; 4],
    pub motor_b: [usize; 4],
}

impl TrialRecord {
    pub fn neuron_series(&self, neuron: usize) -> Vec<f64> {
        self.outputs.iter().map(|row| row[neuron]).collect()
    }

    pub fn leg_series(&self, limb: Limb) -> Vec<f64> {
        self.neuron_series(self.motor_a[limb.index()])
    }

    pub fn knee_series(&self, limb: Limb) -> Vec<f64> {
        self.neuron_series(self.motor_b[limb.index()])
    }

    pub fn leg_angle_series(&self, limb: Limb) -> Vec<f64> {
        self.joints.iter().map(|j| j.leg[limb.index()]).collect()
    }

    /// CSV with one row per physics step: time, trunk pose, the 8 joint
    /// angles and the most recent output of every neuron.
    pub fn to_csv(&self) -> String {
        let n = self.outputs.first().map_or(0, |r| r.len());
        let mut out = String::from("time,x,y,z,qw,qx,qy,qz");
        for l in ["lf", "rf", "lh", "rh"] {
            out.push_str(&format!(",leg_{l},knee_{l}"));
        }
        for i in 0..n {
            out.push_str(&format!(",h{i}"));
        }
        out.push('\n');
        let mut cpg_idx = 0usize;
        for (k, t) in self.body_time.iter().enumerate() {
            while cpg_idx + 1 < self.cpg_time.len() && self.cpg_time[cpg_idx + 1] <= *t + 1e-9 {
                cpg_idx += 1;
            }
            let p = self.position[k];
            let q = self.orientation[k];
            out.push_str(&format!("{t},{},{},{},{},{},{},{}", p[0], p[1], p[2], q[0], q[1], q[2], q[3]));
            let j = &self.joints[k];
            for l in 0..4 {
                out.push_str(&format!(",{},{}", j.leg[l], j.knee[l]));
            }
            if let Some(row) = self.outputs.get(cpg_idx) {
                for h in row {
                    out.push_str(&format!(",{h}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub metrics: TrialMetrics,
    pub record: Option<TrialRecord>,
}

fn micros(seconds: f64) -> i64 {
    (seconds * 1e6).round() as i64
}

/// Seeded initial condition: `u ~ U[0, 1]` for CPG neurons, rest for
/// filter neurons, `v = 0`.
pub fn initial_state(spec: &NetworkSpec, seed: u64) -> NetworkState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = NetworkState::random(spec.n(), &mut rng);
    for (i, role) in spec.roles.iter().enumerate() {
        if *role == NeuronRole::Filter {
            state.u[i] = 0.0;
        }
    }
    state
}

/// Runs burn-in and the scheduled trial for one controller.
pub fn run_trial(
    spec: &NetworkSpec,
    cmd: &JointCommandParams,
    morph: &MorphologyParams,
    schedule: &Schedule,
    config: &TrialConfig,
    seed: u64,
    options: &TrialOptions,
) -> Result<TrialResult> {
    morph.validate()?;
    cmd.validate()?;
    let duration = schedule.duration();
    if schedule.stages.is_empty() || !(duration > 0.0) {
        return Err(Error::EmptyInput("trial schedule has zero duration"));
    }
    let motor_a: [usize; 4] = Limb::ALL.map(|l| l.motor_a());
    let motor_b: [usize; 4] = Limb::ALL.map(|l| l.motor_b());
    if spec.n() < 12 || motor_a.iter().chain(&motor_b).any(|&i| !matches!(spec.roles[i], NeuronRole::MotorA | NeuronRole::MotorB)) {
        return Err(Error::Config("trial network must start with the 12-neuron CPG layout".into()));
    }
    let cpg_us = micros(config.cpg_dt);
    let phys_us = micros(config.physics_dt);
    let dec_us = micros(config.decision_dt);
    if cpg_us <= 0 || phys_us <= 0 || dec_us <= 0 || dec_us % phys_us != 0 {
        return Err(Error::Config("decision interval must be a positive multiple of the physics step".into()));
    }

    let mut integrator = Integrator::new(spec, config.model, config.cpg_dt)?;
    let mut net = initial_state(spec, seed);
    if options.mirror_initial {
        if spec.mirror.is_empty() {
            return Err(Error::Config("network has no mirror map".into()));
        }
        net = net.permuted(&spec.mirror);
    }
    let (i_dc0, _) = schedule.controls(0.0);
    let burn_steps = (config.burn_in / config.cpg_dt).round() as usize;
    for _ in 0..burn_steps {
        integrator.step(&mut net, &StepInput::tonic(i_dc0))?;
    }
    net.t = 0.0;

    let n = spec.n();
    let mut feedback = vec![0.0; n];
    let mut prev_a = motor_a.map(|i| rectify(net.u[i]));
    let mut prev_b = motor_b.map(|i| rectify(net.u[i]));
    let standing = cmd.standing_pose();
    let mut targets = standing;
    let mut body = BodyState::standing(morph, standing);
    let stand_height = morph.standing_height(&standing);

    let total_us = micros(duration);
    let mut stage_ends = Vec::with_capacity(schedule.stages.len());
    let mut acc = 0.0;
    for s in &schedule.stages {
        acc += s.duration;
        stage_ends.push(micros(acc));
    }
    let mut stage_start = body.position;
    let mut stage_idx = 0usize;
    let mut displacements = Vec::with_capacity(stage_ends.len());

    let mut record = options.record.then(|| TrialRecord {
        motor_a,
        motor_b,
        ..TrialRecord::default()
    });
    let mut cpg_clock: i64 = 0;
    let mut cpg_step: usize = 0;
    let mut height_sum = 0.0;
    let mut tilt_sum = 0.0;
    let mut samples = 0usize;
    let mut diverged_at: Option<f64> = None;
    let mut t_us: i64 = 0;

    while t_us < total_us {
        if t_us % dec_us == 0 && diverged_at.is_none() {
            let t = t_us as f64 * 1e-6;
            let (i_dc, theta_c) = schedule.controls(t);
            while cpg_clock < t_us {
                let i_ext = options.stimulus.as_ref().map_or(0.0, |s| s.get(cpg_step).copied().unwrap_or(0.0));
                let input = StepInput {
                    i_dc,
                    i_ext,
                    i_fb: &feedback,
                };
                integrator.step(&mut net, &input)?;
                cpg_clock += cpg_us;
                cpg_step += 1;
                if let Some(rec) = record.as_mut() {
                    rec.cpg_time.push(cpg_clock as f64 * 1e-6);
                    rec.outputs.push(net.outputs());
                }
            }
            if let Some(rec) = record.as_mut() {
                rec.decision_time.push(t);
            }
            let ha = motor_a.map(|i| rectify(net.u[i]));
            let hb = motor_b.map(|i| rectify(net.u[i]));
            let da: [f64; 4] = std::array::from_fn(|k| ha[k] - prev_a[k]);
            let db: [f64; 4] = std::array::from_fn(|k| hb[k] - prev_b[k]);
            prev_a = ha;
            prev_b = hb;
            let raw = joint_targets(&da, &db, config.decision_dt, cmd, theta_c * config.theta_c_gain)?;
            let scale = if config.actuator_ramp > 0.0 { (t / config.actuator_ramp).min(1.0) } else { 1.0 };
            targets = raw;
            for k in 0..4 {
                targets.leg[k] = standing.leg[k] + (raw.leg[k] - standing.leg[k]) * scale;
                targets.knee[k] = standing.knee[k] + (raw.knee[k] - standing.knee[k]) * scale;
            }
            let (fa, fb) = tilt_feedback(&body, cmd);
            for k in 0..4 {
                feedback[motor_a[k]] = fa[k];
                feedback[motor_b[k]] = fb[k];
            }
        }

        if diverged_at.is_none() {
            if let Err(Error::SimulationDiverged { .. }) = step_in_place(&mut body, &targets, morph, config.physics_dt) {
                diverged_at = Some((t_us + phys_us) as f64 * 1e-6);
            }
        }
        t_us += phys_us;

        if diverged_at.is_none() {
            height_sum += body.position.z / stand_height;
            tilt_sum += body.tilt_squared();
        } else {
            tilt_sum += 1.0;
        }
        samples += 1;
        if let Some(rec) = record.as_mut() {
            let q = body.orientation.quaternion();
            rec.body_time.push(t_us as f64 * 1e-6);
            rec.position.push([body.position.x, body.position.y, body.position.z]);
            rec.orientation.push([q.w, q.i, q.j, q.k]);
            rec.joints.push(body.joints);
        }
        while stage_idx < stage_ends.len() && t_us >= stage_ends[stage_idx] {
            let p = if diverged_at.is_none() { body.position } else { stage_start };
            displacements.push(Displacement {
                x: p.x - stage_start.x,
                y: p.y - stage_start.y,
            });
            stage_start = p;
            stage_idx += 1;
        }
    }
    while displacements.len() < stage_ends.len() {
        displacements.push(Displacement { x: 0.0, y: 0.0 });
    }

    Ok(TrialResult {
        metrics: TrialMetrics {
            stages: displacements,
            h_tot: height_sum / samples as f64,
            t_tot: (tilt_sum / samples as f64).sqrt(),
            diverged_at,
        },
        record,
    })
}
