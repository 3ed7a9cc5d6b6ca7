//! Lumped actuator dynamics from motor current to spring torque.
//!
//! The motor drives the inner plate through an ideal transmission of ratio
//! `N` (`θ_m = N·θ`), so the reflected equation of motion is
//!
//! ```text
//! (J_s + N²·J_m)·θ̈ = N·k_m·i_m − τ_e(θ − q) − N²·b_m·θ̇ − f(θ̇)
//! ```
//!
//! The load side is pluggable (locked, prescribed trajectory, or a free
//! inertia). A stiff one-sided spring-damper stands in for the mechanical
//! deflection stop.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::RseeConfig;
use crate::record::{SimRecord, SimSample};

/// States larger than this are treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Error, Clone)]
pub enum SimError {
    #[error("invalid simulation setup: {0}")]
    InvalidSetup(String),
    #[error("non-finite plant state at t = {time} s")]
    NonFinite { time: f64 },
    #[error("simulation diverged at t = {time} s")]
    Diverged { time: f64, partial: Box<SimRecord> },
}

impl SimError {
    pub fn partial_record(&self) -> Option<&SimRecord> {
        match self {
            SimError::Diverged { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

/// Friction on the reflected motor side. The Coulomb term uses a smoothed
/// sign, `tanh(θ̇ / v_eps)`, to keep the right-hand side differentiable.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum FrictionModel {
    #[default]
    None,
    Viscous {
        viscous: f64,
    },
    ViscousCoulomb {
        viscous: f64,
        coulomb: f64,
        smoothing_velocity: f64,
    },
}

impl FrictionModel {
    /// Gearbox-like friction used when emulating bench measurements:
    /// 0.5 N·m Coulomb level smoothed over 0.02 rad/s, no viscous part.
    pub fn bench() -> Self {
        FrictionModel::ViscousCoulomb {
            viscous: 0.0,
            coulomb: 0.5,
            smoothing_velocity: 0.02,
        }
    }

    pub fn torque(&self, velocity: f64) -> f64 {
        match *self {
            FrictionModel::None => 0.0,
            FrictionModel::Viscous { viscous } => viscous * velocity,
            FrictionModel::ViscousCoulomb {
                viscous,
                coulomb,
                smoothing_velocity,
            } => viscous * velocity + coulomb * (velocity / smoothing_velocity).tanh(),
        }
    }

    pub fn viscous_coefficient(&self) -> f64 {
        match *self {
            FrictionModel::None => 0.0,
            FrictionModel::Viscous { viscous } | FrictionModel::ViscousCoulomb { viscous, .. } => {
                viscous
            }
        }
    }

    pub fn violations(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        match *self {
            FrictionModel::None => {}
            FrictionModel::Viscous { viscous } => {
                if !(viscous >= 0.0 && viscous.is_finite()) {
                    out.push(format!("{prefix}viscous_nm_s_per_rad must be >= 0"));
                }
            }
            FrictionModel::ViscousCoulomb {
                viscous,
                coulomb,
                smoothing_velocity,
            } => {
                if !(viscous >= 0.0 && viscous.is_finite()) {
                    out.push(format!("{prefix}viscous_nm_s_per_rad must be >= 0"));
                }
                if !(coulomb >= 0.0 && coulomb.is_finite()) {
                    out.push(format!("{prefix}coulomb_nm must be >= 0"));
                }
                if !(smoothing_velocity > 0.0 && smoothing_velocity.is_finite()) {
                    out.push(format!("{prefix}smoothing_rad_s must be > 0"));
                }
            }
        }
        out
    }
}

/// One-sided spring-damper engaged beyond the structural deflection stop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardStop {
    pub stiffness: f64,
    pub damping: f64,
}

impl Default for HardStop {
    fn default() -> Self {
        Self {
            stiffness: 500.0,
            damping: 5.0,
        }
    }
}

impl HardStop {
    /// Torque pushing the deflection back inside `±limit`; never attractive.
    pub fn torque(&self, deflection: f64, deflection_rate: f64, limit: f64) -> f64 {
        let excess = deflection.abs() - limit;
        if excess <= 0.0 {
            return 0.0;
        }
        let sign = deflection.signum();
        let t = sign * self.stiffness * excess + self.damping * deflection_rate;
        if t * sign > 0.0 {
            t
        } else {
            0.0
        }
    }
}

/// Motor and transmission parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorParams {
    /// kg·m²
    pub motor_inertia: f64,
    /// N·m·s/rad, motor side
    pub motor_damping: f64,
    /// N·m/A
    pub torque_constant: f64,
    /// Reduction gears and rotating parts on the output side (kg·m²).
    pub structural_inertia: f64,
    pub ratio: f64,
    /// A
    pub current_limit: f64,
    pub friction: FrictionModel,
    pub hard_stop: HardStop,
}

impl Default for ActuatorParams {
    fn default() -> Self {
        Self {
            motor_inertia: 3.06e-4,
            motor_damping: 0.0,
            torque_constant: 0.44,
            structural_inertia: 2.33e-5,
            ratio: 2.0,
            current_limit: 34.0,
            friction: FrictionModel::None,
            hard_stop: HardStop::default(),
        }
    }
}

impl ActuatorParams {
    /// `J_s + N²·J_m`
    pub fn reflected_inertia(&self) -> f64 {
        self.structural_inertia + self.ratio * self.ratio * self.motor_inertia
    }

    /// `N²·b_m`
    pub fn reflected_damping(&self) -> f64 {
        self.ratio * self.ratio * self.motor_damping
    }

    /// Output-side torque produced by a motor current, `N·k_m·i`.
    pub fn current_to_torque(&self) -> f64 {
        self.ratio * self.torque_constant
    }

    pub fn violations(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        let positive = [
            ("motor_inertia_kg_m2", self.motor_inertia),
            ("structural_inertia_kg_m2", self.structural_inertia),
            ("torque_constant_nm_per_a", self.torque_constant),
            ("ratio", self.ratio),
            ("current_limit_a", self.current_limit),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{prefix}{name} must be > 0 (got {v})"));
            }
        }
        let non_negative = [
            ("motor_damping_nm_s_per_rad", self.motor_damping),
            ("hard_stop_stiffness_nm_per_rad", self.hard_stop.stiffness),
            ("hard_stop_damping_nm_s_per_rad", self.hard_stop.damping),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                out.push(format!("{prefix}{name} must be >= 0 (got {v})"));
            }
        }
        out.extend(self.friction.violations(&format!("{prefix}friction.")));
        out
    }
}

/// Prescribed load-side angle.
#[derive(Debug, Clone, PartialEq)]
pub enum Trajectory {
    /// `offset + amplitude·sin(2π·f·t + phase)`
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        phase: f64,
        offset: f64,
    },
    /// Piecewise-linear table; held constant outside its time span.
    Table { times: Vec<f64>, angles: Vec<f64> },
}

impl Trajectory {
    /// Angle, velocity and acceleration at time `t`.
    pub fn sample(&self, t: f64) -> (f64, f64, f64) {
        match self {
            Trajectory::Sinusoid {
                amplitude,
                frequency,
                phase,
                offset,
            } => {
                let w = TAU * frequency;
                let arg = w * t + phase;
                (
                    offset + amplitude * arg.sin(),
                    amplitude * w * arg.cos(),
                    -amplitude * w * w * arg.sin(),
                )
            }
            Trajectory::Table { times, angles } => {
                if times.is_empty() {
                    return (0.0, 0.0, 0.0);
                }
                if t <= times[0] {
                    return (angles[0], 0.0, 0.0);
                }
                let last = times.len() - 1;
                if t >= times[last] {
                    return (angles[last], 0.0, 0.0);
                }
                let i = times.partition_point(|&x| x <= t) - 1;
                let span = times[i + 1] - times[i];
                let slope = (angles[i + 1] - angles[i]) / span;
                (angles[i] + slope * (t - times[i]), slope, 0.0)
            }
        }
    }

    pub fn violations(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            Trajectory::Sinusoid {
                amplitude,
                frequency,
                phase,
                offset,
            } => {
                if ![amplitude, frequency, phase, offset].iter().all(|v| v.is_finite()) {
                    out.push(format!("{prefix}sinusoid parameters must be finite"));
                }
                if *frequency < 0.0 {
                    out.push(format!("{prefix}frequency_hz must be >= 0"));
                }
            }
            Trajectory::Table { times, angles } => {
                if times.len() != angles.len() || times.len() < 2 {
                    out.push(format!("{prefix}table needs >= 2 rows of [t_s, angle_deg]"));
                }
                if !times.windows(2).all(|w| w[1] > w[0]) {
                    out.push(format!("{prefix}table times must be strictly increasing"));
                }
                if !times.iter().chain(angles.iter()).all(|v| v.is_finite()) {
                    out.push(format!("{prefix}table entries must be finite"));
                }
            }
        }
        out
    }
}

/// Travel limits of a free load, enforced by a stiff one-sided spring-damper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadStop {
    pub lower: f64,
    pub upper: f64,
    pub stiffness: f64,
    pub damping: f64,
}

impl LoadStop {
    fn torque(&self, q: f64, q_dot: f64) -> f64 {
        let (excess, sign) = if q > self.upper {
            (q - self.upper, 1.0)
        } else if q < self.lower {
            (self.lower - q, -1.0)
        } else {
            return 0.0;
        };
        // reaction on the load, opposing penetration, never pulling
        let t = -sign * self.stiffness * excess - self.damping * q_dot;
        if t * sign < 0.0 {
            t
        } else {
            0.0
        }
    }
}

/// Free output-side inertia.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertialLoad {
    /// kg·m²
    pub inertia: f64,
    /// N·m·s/rad
    pub damping: f64,
    /// External torque `bias + amplitude·sin(2π·f·t)` (N·m).
    pub external_bias: f64,
    pub external_amplitude: f64,
    pub external_frequency: f64,
    pub stop: Option<LoadStop>,
}

impl InertialLoad {
    pub fn free(inertia: f64, damping: f64) -> Self {
        Self {
            inertia,
            damping,
            external_bias: 0.0,
            external_amplitude: 0.0,
            external_frequency: 0.0,
            stop: None,
        }
    }

    fn external_torque(&self, t: f64) -> f64 {
        self.external_bias + self.external_amplitude * (TAU * self.external_frequency * t).sin()
    }

    fn violations(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.inertia > 0.0 && self.inertia.is_finite()) {
            out.push(format!("{prefix}inertia_kg_m2 must be > 0"));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            out.push(format!("{prefix}damping_nm_s_per_rad must be >= 0"));
        }
        if ![self.external_bias, self.external_amplitude, self.external_frequency]
            .iter()
            .all(|v| v.is_finite())
        {
            out.push(format!("{prefix}external torque parameters must be finite"));
        }
        if let Some(stop) = self.stop {
            if !(stop.lower < stop.upper) {
                out.push(format!("{prefix}stop lower bound must be below upper bound"));
            }
            if !(stop.stiffness >= 0.0 && stop.damping >= 0.0) {
                out.push(format!("{prefix}stop stiffness/damping must be >= 0"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadModel {
    /// Output clamped at a fixed angle (bench test against a torque sensor).
    Locked { angle: f64 },
    /// Output driven along a trajectory regardless of the actuator (a human handle).
    Prescribed(Trajectory),
    Inertial(InertialLoad),
    /// Locked at `hold_angle` until `release_time`, then free.
    Released {
        hold_angle: f64,
        release_time: f64,
        load: InertialLoad,
    },
}

impl Default for LoadModel {
    fn default() -> Self {
        LoadModel::Locked { angle: 0.0 }
    }
}

impl LoadModel {
    pub fn violations(&self, prefix: &str) -> Vec<String> {
        match self {
            LoadModel::Locked { angle } => {
                if angle.is_finite() {
                    vec![]
                } else {
                    vec![format!("{prefix}angle_deg must be finite")]
                }
            }
            LoadModel::Prescribed(traj) => traj.violations(prefix),
            LoadModel::Inertial(load) => load.violations(prefix),
            LoadModel::Released {
                hold_angle,
                release_time,
                load,
            } => {
                let mut out = load.violations(prefix);
                if !hold_angle.is_finite() {
                    out.push(format!("{prefix}angle_deg must be finite"));
                }
                if !(*release_time >= 0.0) {
                    out.push(format!("{prefix}release_time_s must be >= 0"));
                }
                out
            }
        }
    }

    /// Load inertia when the output is free at time `t`.
    fn free_inertia(&self, t: f64) -> Option<&InertialLoad> {
        match self {
            LoadModel::Inertial(load) => Some(load),
            LoadModel::Released {
                release_time, load, ..
            } if t >= *release_time => Some(load),
            _ => None,
        }
    }

    /// Applies kinematic constraints of the load to a state.
    pub fn constrain(&self, state: &mut PlantState) {
        match self {
            LoadModel::Locked { angle } => {
                state.q = *angle;
                state.q_dot = 0.0;
            }
            LoadModel::Prescribed(traj) => {
                let (q, q_dot, _) = traj.sample(state.t);
                state.q = q;
                state.q_dot = q_dot;
            }
            LoadModel::Released {
                hold_angle,
                release_time,
                ..
            } if state.t < *release_time => {
                state.q = *hold_angle;
                state.q_dot = 0.0;
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    /// Inner-plate angle, i.e. motor angle after the transmission (rad).
    pub theta: f64,
    pub theta_dot: f64,
    /// Load-side (outer plate) angle.
    pub q: f64,
    pub q_dot: f64,
    pub t: f64,
}

impl PlantState {
    pub fn deflection(&self) -> f64 {
        self.theta - self.q
    }

    fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.theta_dot.is_finite() && self.q.is_finite() && self.q_dot.is_finite()
    }

    fn is_bounded(&self) -> bool {
        [self.theta, self.theta_dot, self.q, self.q_dot]
            .iter()
            .all(|v| v.abs() <= DIVERGENCE_LIMIT)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateDerivative {
    pub theta_dot: f64,
    pub theta_ddot: f64,
    pub q_dot: f64,
    pub q_ddot: f64,
}

/// Torque transmitted between the plates: spring torque plus the stop reaction.
pub fn coupling_torque(cfg: &RseeConfig, params: &ActuatorParams, state: &PlantState) -> f64 {
    let beta = state.deflection();
    let beta_dot = state.theta_dot - state.q_dot;
    cfg.output_torque(beta) + params.hard_stop.torque(beta, beta_dot, cfg.deflection_limit)
}

/// Right-hand side of the plant at `state` under motor current `current`.
pub fn plant_derivative(
    state: &PlantState,
    current: f64,
    cfg: &RseeConfig,
    params: &ActuatorParams,
    load: &LoadModel,
) -> Result<StateDerivative, SimError> {
    if !state.is_finite() || !current.is_finite() {
        return Err(SimError::NonFinite { time: state.t });
    }
    let coupling = coupling_torque(cfg, params, state);
    let drive = params.current_to_torque() * current;
    let theta_ddot = (drive
        - coupling
        - params.reflected_damping() * state.theta_dot
        - params.friction.torque(state.theta_dot))
        / params.reflected_inertia();

    let (q_dot, q_ddot) = if let Some(free) = load.free_inertia(state.t) {
        let stop = free.stop.map_or(0.0, |s| s.torque(state.q, state.q_dot));
        let acc = (coupling - free.damping * state.q_dot + free.external_torque(state.t) + stop)
            / free.inertia;
        (state.q_dot, acc)
    } else {
        match load {
            LoadModel::Prescribed(traj) => {
                let (_, v, a) = traj.sample(state.t);
                (v, a)
            }
            _ => (0.0, 0.0),
        }
    };
    Ok(StateDerivative {
        theta_dot: state.theta_dot,
        theta_ddot,
        q_dot,
        q_ddot,
    })
}

fn advance(state: &PlantState, d: &StateDerivative, h: f64) -> PlantState {
    PlantState {
        theta: state.theta + h * d.theta_dot,
        theta_dot: state.theta_dot + h * d.theta_ddot,
        q: state.q + h * d.q_dot,
        q_dot: state.q_dot + h * d.q_ddot,
        t: state.t + h,
    }
}

/// One classical fourth-order Runge-Kutta step with the current held constant.
pub fn rk4_step(
    state: &PlantState,
    current: f64,
    cfg: &RseeConfig,
    params: &ActuatorParams,
    load: &LoadModel,
    h: f64,
) -> Result<PlantState, SimError> {
    let k1 = plant_derivative(state, current, cfg, params, load)?;
    let k2 = plant_derivative(&advance(state, &k1, 0.5 * h), current, cfg, params, load)?;
    let k3 = plant_derivative(&advance(state, &k2, 0.5 * h), current, cfg, params, load)?;
    let k4 = plant_derivative(&advance(state, &k3, h), current, cfg, params, load)?;
    let sixth = h / 6.0;
    let mut next = PlantState {
        theta: state.theta + sixth * (k1.theta_dot + 2.0 * k2.theta_dot + 2.0 * k3.theta_dot + k4.theta_dot),
        theta_dot: state.theta_dot
            + sixth * (k1.theta_ddot + 2.0 * k2.theta_ddot + 2.0 * k3.theta_ddot + k4.theta_ddot),
        q: state.q + sixth * (k1.q_dot + 2.0 * k2.q_dot + 2.0 * k3.q_dot + k4.q_dot),
        q_dot: state.q_dot + sixth * (k1.q_ddot + 2.0 * k2.q_ddot + 2.0 * k3.q_ddot + k4.q_ddot),
        t: state.t + h,
    };
    load.constrain(&mut next);
    Ok(next)
}

/// Plant integration step and controller (sampling) period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub plant_step: f64,
    pub control_period: f64,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            plant_step: 1e-4,
            control_period: 1e-3,
        }
    }
}

impl Timing {
    /// Plant steps per control period.
    pub fn substeps(&self) -> Result<usize, SimError> {
        if !(self.plant_step > 0.0 && self.control_period > 0.0) {
            return Err(SimError::InvalidSetup(
                "plant step and control period must be > 0".into(),
            ));
        }
        let ratio = self.control_period / self.plant_step;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-6 * n {
            return Err(SimError::InvalidSetup(format!(
                "control period {} s is not an integer multiple of plant step {} s",
                self.control_period, self.plant_step
            )));
        }
        Ok(n as usize)
    }
}

/// What the current source commands for one control period.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Command {
    pub current: f64,
    /// Recorded alongside the run; for open-loop drives this is the
    /// torque equivalent of the current.
    pub torque_demand: f64,
    pub velocity_demand: f64,
}

impl Command {
    pub fn current(current: f64, params: &ActuatorParams) -> Self {
        Self {
            current,
            torque_demand: params.current_to_torque() * current,
            velocity_demand: 0.0,
        }
    }
}

/// Integrates the plant with a zero-order-hold current source sampled once
/// per control period; the returned record is sampled at the same instants.
pub fn integrate<F>(
    state0: PlantState,
    mut current_fn: F,
    cfg: &RseeConfig,
    params: &ActuatorParams,
    load: &LoadModel,
    timing: Timing,
    duration: f64,
) -> Result<SimRecord, SimError>
where
    F: FnMut(&PlantState) -> Command,
{
    let substeps = timing.substeps()?;
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(SimError::InvalidSetup(format!("duration must be >= 0 (got {duration})")));
    }
    let h = timing.control_period / substeps as f64;
    let periods = (duration / timing.control_period + 1e-9).floor() as usize;
    let mut state = state0;
    load.constrain(&mut state);
    let mut record = SimRecord::with_capacity(periods + 1);

    for k in 0..=periods {
        // re-anchor time to avoid accumulating round-off over long runs
        state.t = state0.t + k as f64 * timing.control_period;
        let mut cmd = current_fn(&state);
        cmd.current = cmd.current.clamp(-params.current_limit, params.current_limit);
        record.push(SimSample::new(&state, cfg, &cmd));
        if !cfg.is_feasible(state.deflection()) {
            record.note_violation(state.t);
        }
        if k == periods {
            break;
        }
        for _ in 0..substeps {
            state = match rk4_step(&state, cmd.current, cfg, params, load, h) {
                Ok(s) => s,
                Err(SimError::NonFinite { time }) => {
                    return Err(SimError::Diverged {
                        time,
                        partial: Box::new(record),
                    })
                }
                Err(e) => return Err(e),
            };
            if !state.is_finite() || !state.is_bounded() {
                return Err(SimError::Diverged {
                    time: state.t,
                    partial: Box::new(record),
                });
            }
        }
    }
    Ok(record)
}

/// Kinetic plus elastic energy; conserved when nothing dissipates.
pub fn mechanical_energy(
    state: &PlantState,
    cfg: &RseeConfig,
    params: &ActuatorParams,
    load: &LoadModel,
) -> f64 {
    let mut e = 0.5 * params.reflected_inertia() * state.theta_dot * state.theta_dot
        + cfg.spring_potential_energy(state.deflection());
    if let Some(free) = load.free_inertia(state.t) {
        e += 0.5 * free.inertia * state.q_dot * state.q_dot;
    }
    e
}

/// Small-signal current-to-torque response about a frozen operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizedResponse {
    pub stiffness: f64,
    pub natural_frequency_hz: f64,
    /// −3 dB frequency relative to the DC gain.
    pub bandwidth_hz: f64,
}

/// Locked-load bandwidth of `K/(J·s² + c·s + K)` with `K` the equivalent
/// stiffness at `deflection` and `c` the linear damping of the drive.
pub fn linearized_bandwidth(
    cfg: &RseeConfig,
    params: &ActuatorParams,
    deflection: f64,
) -> LinearizedResponse {
    let k = cfg.equivalent_stiffness(deflection);
    second_order_bandwidth(
        k,
        params.reflected_inertia(),
        params.reflected_damping() + params.friction.viscous_coefficient(),
    )
}

pub(crate) fn second_order_bandwidth(k: f64, j: f64, c: f64) -> LinearizedResponse {
    let wn = (k / j).sqrt();
    // |H|² = 1/2  ⇔  J²ω⁴ + (c² − 2KJ)ω² − K² = 0
    let b = c * c - 2.0 * k * j;
    let w2 = (-b + (b * b + 4.0 * j * j * k * k).sqrt()) / (2.0 * j * j);
    LinearizedResponse {
        stiffness: k,
        natural_frequency_hz: wn / TAU,
        bandwidth_hz: w2.sqrt() / TAU,
    }
}
