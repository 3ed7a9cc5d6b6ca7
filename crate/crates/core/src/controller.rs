//! Discrete cascade PI torque controller.
//!
//! The outer loop turns the torque error into a velocity demand, the inner
//! loop turns the velocity error into motor current. Velocity feedback comes
//! from a first-order filtered differentiator `ω_c·s/(s + ω_c)`. Integrators
//! and the filter are discretized with backward Euler; both loops saturate
//! and stop integrating while they push further into saturation.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGains {
    /// Outer loop, (rad/s)/(N·m)
    pub torque_kp: f64,
    /// Outer loop, (rad/s)/(N·m·s)
    pub torque_ki: f64,
    /// Inner loop, N·m/(rad/s)
    pub velocity_kp: f64,
    /// Inner loop, N·m/rad
    pub velocity_ki: f64,
    /// Differentiator cut-off (rad/s).
    pub filter_cutoff: f64,
    /// Sample period (s).
    pub sample_period: f64,
    /// Current saturation (A).
    pub current_limit: f64,
    /// Velocity-demand saturation (rad/s).
    pub velocity_limit: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            torque_kp: 1.5,
            torque_ki: 100.0,
            velocity_kp: 0.6,
            velocity_ki: 5.0,
            filter_cutoff: 628.0,
            sample_period: 1e-3,
            current_limit: 34.0,
            velocity_limit: 20.0,
        }
    }
}

impl ControllerGains {
    pub fn violations(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("torque_kp", self.torque_kp),
            ("torque_ki", self.torque_ki),
            ("velocity_kp", self.velocity_kp),
            ("velocity_ki", self.velocity_ki),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                out.push(format!("{prefix}{name} must be >= 0 (got {v})"));
            }
        }
        for (name, v) in [
            ("filter_cutoff_rad_s", self.filter_cutoff),
            ("sample_period_ms", self.sample_period * 1e3),
            ("current_limit_a", self.current_limit),
            ("velocity_limit_rad_s", self.velocity_limit),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{prefix}{name} must be > 0 (got {v})"));
            }
        }
        out
    }
}

/// Controller memory. Integrators are stored in output units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerState {
    /// Outer integral term (rad/s).
    pub torque_integral: f64,
    /// Inner integral term (N·m).
    pub velocity_integral: f64,
    /// Differentiator output (rad/s).
    pub filtered_velocity: f64,
    /// Previous angle sample; `None` until the first sample arrives.
    pub previous_angle: Option<f64>,
    pub faulted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlOutput {
    pub current: f64,
    pub velocity_demand: f64,
    pub velocity_feedback: f64,
}

/// PI term with conditional integration.
///
/// The integral is committed unless the output saturates and the error
/// would drive it deeper into saturation.
fn pi_update(integral: &mut f64, kp: f64, ki: f64, error: f64, dt: f64, limit: f64) -> (f64, bool) {
    let candidate = *integral + ki * dt * error;
    let raw = kp * error + candidate;
    if raw.abs() <= limit {
        *integral = candidate;
        return (raw, false);
    }
    let out = raw.clamp(-limit, limit);
    if error.signum() != raw.signum() {
        *integral = candidate;
    }
    (out, true)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeController {
    gains: ControllerGains,
    /// `N·k_m`, converts the inner-loop torque to motor current.
    current_to_torque: f64,
    state: ControllerState,
}

impl CascadeController {
    pub fn new(gains: ControllerGains, current_to_torque: f64) -> Self {
        Self {
            gains,
            current_to_torque,
            state: ControllerState::default(),
        }
    }

    pub fn gains(&self) -> &ControllerGains {
        &self.gains
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn restore(&mut self, state: ControllerState) {
        self.state = state;
    }

    pub fn is_faulted(&self) -> bool {
        self.state.faulted
    }

    /// Zeroes all memory, including a latched fault.
    pub fn reset(&mut self) {
        self.state = ControllerState::default();
    }

    /// Backward-Euler filtered derivative of the angle; call once per period.
    pub fn filtered_velocity(&mut self, angle: f64) -> f64 {
        let wc = self.gains.filter_cutoff;
        let ts = self.gains.sample_period;
        let prev = self.state.previous_angle.unwrap_or(angle);
        let v = (self.state.filtered_velocity + wc * (angle - prev)) / (1.0 + wc * ts);
        self.state.filtered_velocity = v;
        self.state.previous_angle = Some(angle);
        v
    }

    /// One control period: torque demand, measured spring torque and
    /// inner-plate angle in, motor current out.
    pub fn step(&mut self, torque_demand: f64, measured_torque: f64, angle: f64) -> ControlOutput {
        if self.state.faulted
            || !(torque_demand.is_finite() && measured_torque.is_finite() && angle.is_finite())
        {
            self.state.faulted = true;
            return ControlOutput::default();
        }
        let g = self.gains;
        let velocity = self.filtered_velocity(angle);
        let torque_error = torque_demand - measured_torque;
        let (velocity_demand, _) = pi_update(
            &mut self.state.torque_integral,
            g.torque_kp,
            g.torque_ki,
            torque_error,
            g.sample_period,
            g.velocity_limit,
        );
        let velocity_error = velocity_demand - velocity;
        let torque_limit = g.current_limit * self.current_to_torque;
        let (drive_torque, _) = pi_update(
            &mut self.state.velocity_integral,
            g.velocity_kp,
            g.velocity_ki,
            velocity_error,
            g.sample_period,
            torque_limit,
        );
        ControlOutput {
            current: drive_torque / self.current_to_torque,
            velocity_demand,
            velocity_feedback: velocity,
        }
    }
}
