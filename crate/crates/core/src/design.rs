//! Configuration search against a target torque-deflection profile.
//!
//! For every allowed pair count the pre-tension/offset box is scanned on a
//! coarse grid, and the best feasible grid points are polished with a
//! Nelder-Mead simplex. Only opposed-offset configurations are searched.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{RseeConfig, MAX_PAIRS, MIN_PRETENSION};
use crate::workspace::Grid;

const COARSE_PRETENSION_POINTS: usize = 13;
const COARSE_OFFSET_POINTS: usize = 16;
/// Grid points refined per pair count.
const REFINED_STARTS: usize = 3;
const SIMPLEX_MAX_ITER: usize = 4000;
const SIMPLEX_TOL: f64 = 1e-12;
/// Residuals closer than this (relative) count as tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("invalid design target: {}", .0.join("; "))]
    InvalidTarget(Vec<String>),
    #[error("no configuration in the search box keeps every sample feasible; best infeasible candidate has m = {}, pretension {:.3} mm, offset {:.3} deg, residual {:.4} N·m", .0.config.pair_count, .0.config.pretension * 1e3, .0.config.offset_a.to_degrees(), .0.residual)]
    NoFeasibleConfiguration(Box<Candidate>),
}

/// Bounds of the searched parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub min_pairs: u32,
    pub max_pairs: u32,
    /// m
    pub pretension: (f64, f64),
    /// rad, opposed offset
    pub offset: (f64, f64),
}

impl Default for SearchBox {
    fn default() -> Self {
        Self {
            min_pairs: 1,
            max_pairs: MAX_PAIRS,
            pretension: (MIN_PRETENSION, 6.5e-3),
            offset: (0.0, 30f64.to_radians()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignTarget {
    /// `(deflection rad, torque N·m)`
    pub samples: Vec<(f64, f64)>,
    pub weights: Vec<f64>,
    pub bounds: SearchBox,
    /// Spring, radius and deflection stop shared by all candidates.
    pub base: RseeConfig,
}

impl DesignTarget {
    /// Unit weights, default box and hardware.
    pub fn new(samples: Vec<(f64, f64)>) -> Self {
        let weights = vec![1.0; samples.len()];
        Self {
            samples,
            weights,
            bounds: SearchBox::default(),
            base: RseeConfig::default(),
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.samples.len() < 2 {
            out.push("at least 2 samples are required".to_string());
        }
        if self.weights.len() != self.samples.len() {
            out.push("one weight per sample is required".to_string());
        }
        if !self.weights.iter().all(|w| *w > 0.0 && w.is_finite()) {
            out.push("weights must be > 0".to_string());
        }
        if !self.samples.iter().all(|(b, t)| b.is_finite() && t.is_finite()) {
            out.push("samples must be finite".to_string());
        }
        let b = &self.bounds;
        if !(1 <= b.min_pairs && b.min_pairs <= b.max_pairs && b.max_pairs <= MAX_PAIRS) {
            out.push(format!("pair counts must satisfy 1 <= min <= max <= {MAX_PAIRS}"));
        }
        if !(b.pretension.0 >= MIN_PRETENSION * (1.0 - 1e-9) && b.pretension.0 <= b.pretension.1) {
            out.push("pretension box must be ordered and >= 0.5 mm".to_string());
        }
        if !(b.offset.0 <= b.offset.1 && b.offset.0.is_finite() && b.offset.1.is_finite()) {
            out.push("offset box must be ordered".to_string());
        }
        out.extend(self.base.violations("base."));
        out
    }

    fn residual(&self, cfg: &RseeConfig) -> f64 {
        let wsum: f64 = self.weights.iter().sum();
        let sq: f64 = self
            .samples
            .iter()
            .zip(&self.weights)
            .map(|(&(b, t), w)| w * (cfg.output_torque(b) - t).powi(2))
            .sum();
        (sq / wsum).sqrt()
    }

    fn feasible(&self, cfg: &RseeConfig) -> bool {
        self.samples.iter().all(|&(b, _)| cfg.is_feasible(b))
    }

    fn candidate(&self, m: u32, pretension: f64, offset: f64) -> RseeConfig {
        RseeConfig {
            pair_count: m,
            pretension,
            offset_a: offset,
            offset_b: -offset,
            ..self.base
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub config: RseeConfig,
    /// Weighted RMS torque error (N·m).
    pub residual: f64,
    pub feasible: bool,
}

impl Candidate {
    /// Ordering by residual, then the smallest pair count, pre-tension and |offset|.
    fn better_than(&self, other: &Candidate) -> bool {
        let scale = self.residual.abs().max(other.residual.abs()).max(1e-300);
        if (self.residual - other.residual).abs() > TIE_TOL * scale {
            return self.residual < other.residual;
        }
        let key = |c: &Candidate| (c.config.pair_count, c.config.pretension, c.config.offset_a.abs());
        let (a, b) = (key(self), key(other));
        (a.0, a.1, a.2) < (b.0, b.1, b.2)
    }
}

/// Weighted least-squares fit of the target over the search box.
pub fn search_configuration(target: &DesignTarget) -> Result<Candidate, DesignError> {
    let problems = target.violations();
    if !problems.is_empty() {
        return Err(DesignError::InvalidTarget(problems));
    }
    let b = target.bounds;
    let dl_grid = Grid::new(b.pretension.0, b.pretension.1, grid_points(b.pretension, COARSE_PRETENSION_POINTS));
    let phi_grid = Grid::new(b.offset.0, b.offset.1, grid_points(b.offset, COARSE_OFFSET_POINTS));

    let mut best: Option<Candidate> = None;
    let mut best_infeasible: Option<Candidate> = None;
    let keep = |slot: &mut Option<Candidate>, c: Candidate| {
        if slot.as_ref().is_none_or(|s| c.better_than(s)) {
            *slot = Some(c);
        }
    };

    for m in b.min_pairs..=b.max_pairs {
        let mut coarse: Vec<Candidate> = Vec::new();
        for &dl in &dl_grid.values() {
            for &phi in &phi_grid.values() {
                let config = target.candidate(m, dl, phi);
                let c = Candidate {
                    config,
                    residual: target.residual(&config),
                    feasible: target.feasible(&config),
                };
                if c.feasible {
                    coarse.push(c);
                } else {
                    keep(&mut best_infeasible, c);
                }
            }
        }
        // stable sort keeps grid order (smallest pre-tension, then offset) among ties
        coarse.sort_by(|x, y| x.residual.total_cmp(&y.residual));
        for start in coarse.iter().take(REFINED_STARTS) {
            let polished = refine(target, m, start);
            keep(&mut best, polished);
        }
    }

    best.ok_or_else(|| {
        DesignError::NoFeasibleConfiguration(Box::new(
            best_infeasible.expect("a non-empty box always yields at least one candidate"),
        ))
    })
}

fn grid_points(range: (f64, f64), n: usize) -> usize {
    if range.0 == range.1 {
        1
    } else {
        n
    }
}

/// Nelder-Mead over the free box dimensions, in units of mm and 0.1 rad.
fn refine(target: &DesignTarget, m: u32, start: &Candidate) -> Candidate {
    let b = target.bounds;
    let scales = [1e-3, 0.1];
    let lo = [b.pretension.0 / scales[0], b.offset.0 / scales[1]];
    let hi = [b.pretension.1 / scales[0], b.offset.1 / scales[1]];
    let free: Vec<usize> = (0..2).filter(|&d| hi[d] > lo[d]).collect();
    let x0 = [start.config.pretension / scales[0], start.config.offset_a / scales[1]];
    if free.is_empty() {
        return *start;
    }
    let to_cfg = |y: &[f64]| {
        let mut x = x0;
        for (k, &d) in free.iter().enumerate() {
            x[d] = y[k];
        }
        target.candidate(m, x[0] * scales[0], x[1] * scales[1])
    };
    let cost = |y: &[f64]| {
        let inside = free.iter().enumerate().all(|(k, &d)| y[k] >= lo[d] && y[k] <= hi[d]);
        if !inside {
            return f64::INFINITY;
        }
        let cfg = to_cfg(y);
        if target.feasible(&cfg) {
            target.residual(&cfg)
        } else {
            f64::INFINITY
        }
    };
    let y0: Vec<f64> = free.iter().map(|&d| x0[d]).collect();
    let steps: Vec<f64> = free.iter().map(|&d| 0.05 * (hi[d] - lo[d])).collect();
    let y = nelder_mead(&cost, &y0, &steps);
    let config = to_cfg(&y);
    let refined = Candidate {
        config,
        residual: target.residual(&config),
        feasible: target.feasible(&config),
    };
    if refined.feasible && refined.residual <= start.residual {
        refined
    } else {
        *start
    }
}

/// Minimizes `f` from `x0`; initial simplex edges along each axis of length
/// `steps[i]` (stepping backwards when the forward vertex is not finite).
fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], steps: &[f64]) -> Vec<f64> {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += steps[i];
        let mut fx = f(&x);
        if !fx.is_finite() {
            x[i] = x0[i] - steps[i];
            fx = f(&x);
        }
        simplex.push((x, fx));
    }
    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + t * (q - p)).collect() };

    for _ in 0..SIMPLEX_MAX_ITER {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex
            .iter()
            .skip(1)
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread < SIMPLEX_TOL {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|d| simplex[..n].iter().map(|(x, _)| x[d]).sum::<f64>() / n as f64)
            .collect();
        let (worst, f_worst) = simplex[n].clone();
        let reflected = lerp(&centroid, &worst, -1.0);
        let f_r = f(&reflected);
        if f_r < simplex[0].1 {
            let expanded = lerp(&centroid, &worst, -2.0);
            let f_e = f(&expanded);
            simplex[n] = if f_e < f_r { (expanded, f_e) } else { (reflected, f_r) };
        } else if f_r < simplex[n - 1].1 {
            simplex[n] = (reflected, f_r);
        } else {
            let (contracted, f_c) = if f_r < f_worst {
                let c = lerp(&centroid, &reflected, 0.5);
                let fc = f(&c);
                (c, fc)
            } else {
                let c = lerp(&centroid, &worst, 0.5);
                let fc = f(&c);
                (c, fc)
            };
            if f_c < f_worst.min(f_r) {
                simplex[n] = (contracted, f_c);
            } else {
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    v.0 = lerp(&best, &v.0, 0.5);
                    v.1 = f(&v.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0).0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(cfg: &RseeConfig, half: f64, n: usize) -> Vec<(f64, f64)> {
        Grid::new(-half, half, n)
            .values()
            .into_iter()
            .map(|b| (b, cfg.output_torque(b)))
            .collect()
    }

    #[test]
    fn simplex_finds_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2);
        let x = nelder_mead(&f, &[0.0, 0.0], &[0.5, 0.5]);
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn recovers_a_known_profile() {
        let truth = RseeConfig {
            pair_count: 5,
            pretension: 1.7e-3,
            offset_a: 12f64.to_radians(),
            offset_b: -12f64.to_radians(),
            ..RseeConfig::default()
        };
        let target = DesignTarget::new(profile(&truth, 10f64.to_radians(), 31));
        let found = search_configuration(&target).unwrap();
        assert!(found.residual < 1e-6, "residual {}", found.residual);
        assert!(found.feasible);
    }

    #[test]
    fn is_deterministic() {
        let cfg = RseeConfig::with_opposed_offset(8f64.to_radians());
        let target = DesignTarget::new(profile(&cfg, 0.15, 21));
        assert_eq!(search_configuration(&target), search_configuration(&target));
    }

    #[test]
    fn infeasible_targets_report_a_candidate() {
        let mut target = DesignTarget::new(vec![(0.0, 0.0), (0.6, 40.0)]);
        target.bounds.offset = (0.0, 0.0);
        match search_configuration(&target) {
            Err(DesignError::NoFeasibleConfiguration(c)) => assert!(!c.feasible),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_targets() {
        let mut target = DesignTarget::new(vec![(0.1, 1.0)]);
        target.weights = vec![-1.0];
        match search_configuration(&target) {
            Err(DesignError::InvalidTarget(v)) => assert_eq!(v.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
