//! Reference computations that do not go through the library's closed-form
//! torque law: springs are modeled as 2-D vectors between their hitching
//! points and torques are taken as cross products.

#![allow(dead_code)]

use rsee_core::RseeConfig;

/// Hitching points of one spring: inner plate at `r1` rotated by `angle`,
/// outer plate at `r2` on the x axis.
fn endpoints(cfg: &RseeConfig, angle: f64) -> ([f64; 2], [f64; 2]) {
    let r1 = cfg.inner_radius;
    let r2 = r1 + cfg.spring.rest_length + cfg.pretension;
    ([r1 * angle.cos(), r1 * angle.sin()], [r2, 0.0])
}

pub fn spring_lengths(cfg: &RseeConfig, beta: f64) -> [f64; 2] {
    [cfg.offset_a, cfg.offset_b].map(|phi| {
        let (p, q) = endpoints(cfg, beta + phi);
        (q[0] - p[0]).hypot(q[1] - p[1])
    })
}

/// Torque on the outer plate from all springs, as `r × F`.
pub fn vector_torque(cfg: &RseeConfig, beta: f64) -> f64 {
    let l0 = cfg.spring.rest_length;
    let mut total = 0.0;
    for phi in [cfg.offset_a, cfg.offset_b] {
        let (p, q) = endpoints(cfg, beta + phi);
        let d = [p[0] - q[0], p[1] - q[1]];
        let len = d[0].hypot(d[1]);
        let tension = cfg.spring.stiffness * (len - l0).max(0.0);
        let f = [tension * d[0] / len, tension * d[1] / len];
        total += q[0] * f[1] - q[1] * f[0];
    }
    f64::from(cfg.pair_count) * total
}

pub fn hooke_energy(cfg: &RseeConfig, beta: f64) -> f64 {
    let l0 = cfg.spring.rest_length;
    spring_lengths(cfg, beta)
        .iter()
        .map(|l| 0.5 * cfg.spring.stiffness * (l - l0).max(0.0).powi(2))
        .sum::<f64>()
        * f64::from(cfg.pair_count)
}

/// Inside the deflection stop and no spring past its rated extension.
pub fn feasible(cfg: &RseeConfig, beta: f64) -> bool {
    let l0 = cfg.spring.rest_length;
    let tol = 1.0 + 1e-12;
    beta.abs() <= cfg.deflection_limit * tol
        && spring_lengths(cfg, beta)
            .iter()
            .all(|l| l - l0 <= cfg.spring.max_extension * tol)
}

pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn opposed(pretension_mm: f64, offset_deg: f64, pairs: u32) -> RseeConfig {
    RseeConfig {
        pair_count: pairs,
        pretension: pretension_mm / 1e3,
        ..RseeConfig::with_opposed_offset(offset_deg.to_radians())
    }
}

/// Fourth-order Runge-Kutta step of `x'' + 2ζω x' + ω² x = ω² u(t)`.
pub fn second_order_step(x: [f64; 2], t: f64, h: f64, wn: f64, zeta: f64, u: &impl Fn(f64) -> f64) -> [f64; 2] {
    let f = |t: f64, s: [f64; 2]| [s[1], wn * wn * (u(t) - s[0]) - 2.0 * zeta * wn * s[1]];
    let k1 = f(t, x);
    let k2 = f(t + h / 2.0, [x[0] + h / 2.0 * k1[0], x[1] + h / 2.0 * k1[1]]);
    let k3 = f(t + h / 2.0, [x[0] + h / 2.0 * k2[0], x[1] + h / 2.0 * k2[1]]);
    let k4 = f(t + h, [x[0] + h * k3[0], x[1] + h * k3[1]]);
    [
        x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}
