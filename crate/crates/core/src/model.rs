//! Kinematics of the reconfigurable rotary elastic element.
//!
//! Two coaxial plates are coupled by `m` pairs of linear tension springs.
//! Spring lengths follow from the cosine law on the two hitching radii,
//! forces from Hooke's law, and the output torque from the moment of each
//! spring force about the common axis. Everything in this module is a pure
//! function of its arguments and works in SI units (m, rad, N, N·m).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roots;

/// Smallest pre-tension allowed by the hardware (0.5 mm).
pub const MIN_PRETENSION: f64 = 0.5e-3;
/// Largest number of spring pairs the plates can carry.
pub const MAX_PAIRS: u32 = 6;
/// Default structural deflection stop, 31.4°.
pub const DEFAULT_DEFLECTION_LIMIT: f64 = 31.4 * (std::f64::consts::PI / 180.0);

/// Number of samples used to check that a torque profile is monotone.
const MONOTONICITY_SAMPLES: usize = 513;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("torque {torque} N·m outside reachable range [{min}, {max}] N·m")]
    TorqueOutOfRange { torque: f64, min: f64, max: f64 },
    #[error("torque profile is not monotone in deflection (stiffness {stiffness} N·m/rad at {deflection} rad)")]
    NonMonotonic { deflection: f64, stiffness: f64 },
    #[error("root finding failed: {0}")]
    RootFinding(String),
}

/// A linear tension spring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "crate::config::SpringDoc", into = "crate::config::SpringDoc")]
pub struct SpringSpec {
    /// N/m
    pub stiffness: f64,
    /// m
    pub rest_length: f64,
    /// Largest extension beyond rest length the spring tolerates (m).
    pub max_extension: f64,
}

impl Default for SpringSpec {
    fn default() -> Self {
        Self {
            stiffness: 20_000.0,
            rest_length: 28.5e-3,
            max_extension: 6.5e-3,
        }
    }
}

impl SpringSpec {
    pub fn violations(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.stiffness > 0.0 && self.stiffness.is_finite()) {
            out.push(format!("{prefix}stiffness_n_per_m must be > 0 (got {})", self.stiffness));
        }
        if !(self.rest_length > 0.0 && self.rest_length.is_finite()) {
            out.push(format!("{prefix}rest_length_mm must be > 0 (got {})", self.rest_length * 1e3));
        }
        if !(self.max_extension > 0.0 && self.max_extension.is_finite()) {
            out.push(format!(
                "{prefix}max_extension_mm must be > 0 (got {})",
                self.max_extension * 1e3
            ));
        }
        out
    }
}

/// Full configuration of the elastic element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "crate::config::RseeConfigDoc", into = "crate::config::RseeConfigDoc")]
pub struct RseeConfig {
    pub pair_count: u32,
    /// Spring extension installed at zero deflection (m).
    pub pretension: f64,
    /// Offset angle of the first spring of each pair (rad).
    pub offset_a: f64,
    /// Offset angle of the second spring of each pair (rad).
    pub offset_b: f64,
    /// Hitching radius on the inner plate (m).
    pub inner_radius: f64,
    /// Structural deflection stop (rad).
    pub deflection_limit: f64,
    pub spring: SpringSpec,
}

impl Default for RseeConfig {
    /// Six pairs, 0.5 mm pre-tension, no offset.
    fn default() -> Self {
        Self {
            pair_count: MAX_PAIRS,
            pretension: MIN_PRETENSION,
            offset_a: 0.0,
            offset_b: 0.0,
            inner_radius: 24.5e-3,
            deflection_limit: DEFAULT_DEFLECTION_LIMIT,
            spring: SpringSpec::default(),
        }
    }
}

/// Lengths and tensions of the two springs of one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpringState {
    pub length_a: f64,
    pub length_b: f64,
    pub force_a: f64,
    pub force_b: f64,
    /// Set when either spring is stretched beyond its rated extension.
    pub overextended: bool,
}

impl SpringState {
    pub fn max_extension(&self, rest_length: f64) -> f64 {
        (self.length_a - rest_length).max(self.length_b - rest_length)
    }
}

/// Shape of a torque-deflection curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StiffnessMode {
    Hardening,
    Linear,
    Softening,
}

impl RseeConfig {
    /// Configuration 1: pre-tension only, no offset.
    pub fn with_pretension(pretension: f64) -> Self {
        Self {
            pretension,
            ..Self::default()
        }
    }

    /// Configuration 2: opposed offsets `φ1 = φ, φ2 = −φ`.
    pub fn with_opposed_offset(offset: f64) -> Self {
        Self {
            offset_a: offset,
            offset_b: -offset,
            ..Self::default()
        }
    }

    /// Configuration 3: identical offsets on both springs, at most four pairs.
    pub fn with_aligned_offset(offset: f64) -> Self {
        Self {
            pair_count: 4,
            offset_a: offset,
            offset_b: offset,
            ..Self::default()
        }
    }

    /// Every violated invariant, prefixed with `prefix` for path-qualified reporting.
    pub fn violations(&self, prefix: &str) -> Vec<String> {
        let mut out = self.spring.violations(&format!("{prefix}spring."));
        if !(1..=MAX_PAIRS).contains(&self.pair_count) {
            out.push(format!(
                "{prefix}pair_count must be in 1..={MAX_PAIRS} (got {})",
                self.pair_count
            ));
        }
        // small slack so that 0.5 mm typed in millimetres survives the unit conversion
        if !(self.pretension >= MIN_PRETENSION * (1.0 - 1e-9)) {
            out.push(format!(
                "{prefix}pretension_mm must be >= {} (got {})",
                MIN_PRETENSION * 1e3,
                self.pretension * 1e3
            ));
        }
        if !(self.inner_radius > 0.0 && self.inner_radius.is_finite()) {
            out.push(format!(
                "{prefix}inner_radius_mm must be > 0 (got {})",
                self.inner_radius * 1e3
            ));
        }
        let limit = self.deflection_limit;
        if !(limit > 0.0 && limit <= std::f64::consts::FRAC_PI_2) {
            out.push(format!(
                "{prefix}deflection_limit_deg must be in (0, 90] (got {})",
                limit.to_degrees()
            ));
        }
        for (name, offset) in [("offset_a_deg", self.offset_a), ("offset_b_deg", self.offset_b)] {
            if !(offset.abs() <= limit * (1.0 + 1e-12)) {
                out.push(format!(
                    "{prefix}{name} magnitude must not exceed the deflection limit {:.3} (got {})",
                    limit.to_degrees(),
                    offset.to_degrees()
                ));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let v = self.violations("");
        if v.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidConfig(v))
        }
    }

    /// Hitching radius of the outer plate: `r2 = r1 + l0 + Δl`.
    pub fn outer_radius(&self) -> f64 {
        self.inner_radius + self.spring.rest_length + self.pretension
    }

    fn spring_length(&self, angle: f64) -> f64 {
        let r1 = self.inner_radius;
        let r2 = self.outer_radius();
        // clamp guards against a tiny negative radicand when r1 == r2 and angle == 0
        (r1 * r1 + r2 * r2 - 2.0 * r1 * r2 * angle.cos()).max(0.0).sqrt()
    }

    fn tension(&self, length: f64) -> f64 {
        let stretch = length - self.spring.rest_length;
        if stretch > 0.0 {
            self.spring.stiffness * stretch
        } else {
            0.0
        }
    }

    pub fn spring_state(&self, deflection: f64) -> SpringState {
        let length_a = self.spring_length(deflection + self.offset_a);
        let length_b = self.spring_length(deflection + self.offset_b);
        let l0 = self.spring.rest_length;
        let rated = self.spring.max_extension * (1.0 + 1e-12);
        let overextended = length_a - l0 > rated || length_b - l0 > rated;
        SpringState {
            length_a,
            length_b,
            force_a: self.tension(length_a),
            force_b: self.tension(length_b),
            overextended,
        }
    }

    /// Largest spring extension at `deflection` (m); negative when both springs are slack.
    pub fn max_spring_extension(&self, deflection: f64) -> f64 {
        self.spring_state(deflection).max_extension(self.spring.rest_length)
    }

    /// True when neither spring exceeds its rated extension and the deflection stop is respected.
    pub fn is_feasible(&self, deflection: f64) -> bool {
        deflection.abs() <= self.deflection_limit * (1.0 + 1e-12)
            && !self.spring_state(deflection).overextended
    }

    /// Output torque τ_e at deflection `β = θ − q` (N·m).
    ///
    /// Each spring contributes `(1 − l0/l)·sin(β + φ)`; a slack spring
    /// (l < l0) contributes nothing.
    pub fn output_torque(&self, deflection: f64) -> f64 {
        let r1 = self.inner_radius;
        let r2 = self.outer_radius();
        let l0 = self.spring.rest_length;
        let term = |offset: f64| {
            let angle = deflection + offset;
            let length = self.spring_length(angle);
            if length > l0 {
                (1.0 - l0 / length) * angle.sin()
            } else {
                0.0
            }
        };
        let sum = term(self.offset_a) + term(self.offset_b);
        f64::from(self.pair_count) * self.spring.stiffness * r1 * r2 * sum
    }

    /// Analytic slope dτ_e/dβ (N·m/rad); slack springs drop out.
    pub fn equivalent_stiffness(&self, deflection: f64) -> f64 {
        let r1 = self.inner_radius;
        let r2 = self.outer_radius();
        let l0 = self.spring.rest_length;
        let term = |offset: f64| {
            let angle = deflection + offset;
            let length = self.spring_length(angle);
            if length > l0 {
                let s = angle.sin();
                (1.0 - l0 / length) * angle.cos() + l0 * r1 * r2 * s * s / length.powi(3)
            } else {
                0.0
            }
        };
        let sum = term(self.offset_a) + term(self.offset_b);
        f64::from(self.pair_count) * self.spring.stiffness * r1 * r2 * sum
    }

    /// Elastic energy stored in all springs (J).
    pub fn spring_potential_energy(&self, deflection: f64) -> f64 {
        let state = self.spring_state(deflection);
        let l0 = self.spring.rest_length;
        let stretch_a = (state.length_a - l0).max(0.0);
        let stretch_b = (state.length_b - l0).max(0.0);
        f64::from(self.pair_count)
            * 0.5
            * self.spring.stiffness
            * (stretch_a * stretch_a + stretch_b * stretch_b)
    }

    /// Inverts the torque-deflection law on `[−β_max, β_max]`.
    ///
    /// The profile is first checked for monotonicity on a dense grid; the
    /// root is then bracketed and refined until the torque residual is
    /// below 1e-9 N·m.
    pub fn deflection_for_torque(&self, torque: f64) -> Result<f64, ModelError> {
        self.validate()?;
        let limit = self.deflection_limit;
        for i in 0..MONOTONICITY_SAMPLES {
            let beta = -limit + 2.0 * limit * i as f64 / (MONOTONICITY_SAMPLES - 1) as f64;
            let k = self.equivalent_stiffness(beta);
            if k < 0.0 {
                return Err(ModelError::NonMonotonic {
                    deflection: beta,
                    stiffness: k,
                });
            }
        }
        let lo = self.output_torque(-limit);
        let hi = self.output_torque(limit);
        if !(torque >= lo && torque <= hi) {
            return Err(ModelError::TorqueOutOfRange {
                torque,
                min: lo,
                max: hi,
            });
        }
        if torque == lo {
            return Ok(-limit);
        }
        if torque == hi {
            return Ok(limit);
        }
        roots::brent(|beta| self.output_torque(beta) - torque, -limit, limit, 1e-12)
            .map_err(|e| ModelError::RootFinding(e.to_string()))
    }

    /// Classifies the curve by how the stiffness changes away from zero deflection.
    pub fn stiffness_trend(&self, half_range: f64) -> StiffnessMode {
        let center = self.equivalent_stiffness(0.0);
        let edge = 0.5 * (self.equivalent_stiffness(half_range) + self.equivalent_stiffness(-half_range));
        if edge >= center {
            StiffnessMode::Hardening
        } else {
            StiffnessMode::Softening
        }
    }

    /// Largest symmetric deflection range inside the working space, found by
    /// bisection on the feasibility boundary.
    pub fn feasible_half_range(&self) -> f64 {
        let limit = self.deflection_limit;
        let ok = |b: f64| self.is_feasible(b) && self.is_feasible(-b);
        if ok(limit) {
            return limit;
        }
        if !ok(0.0) {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, limit);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}
