//! Quasi-static torque-deflection fitting.
//!
//! Levenberg-Marquardt on the torque law over a chosen subset of spring
//! stiffness, pre-tension and opposed offset angle. Parameters are scaled to
//! order one, the Jacobian is a central difference and the start point is
//! the nominal configuration.
//!
//! The torque law is even in the opposed offset, so the offset is fitted
//! through its square: the sensitivity stays finite at zero offset and
//! `φ = 0` becomes a plain lower bound enforced by projection. The fitted
//! offset is reported as a magnitude.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::model::RseeConfig;

const MAX_ITER: usize = 200;
/// Relative singular value below which a Jacobian column is considered dependent.
const RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitParam {
    /// Spring stiffness (N/m).
    SpringStiffness,
    /// Pre-tension (m).
    Pretension,
    /// Opposed offset `φ1 = φ, φ2 = −φ` (rad).
    Offset,
}

impl FitParam {
    fn scale(self) -> f64 {
        match self {
            FitParam::SpringStiffness => 1e4,
            FitParam::Pretension => 1e-3,
            FitParam::Offset => 0.1,
        }
    }

    fn get(self, cfg: &RseeConfig) -> f64 {
        match self {
            FitParam::SpringStiffness => cfg.spring.stiffness,
            FitParam::Pretension => cfg.pretension,
            FitParam::Offset => cfg.offset_a.abs(),
        }
    }

    /// Internal coordinate of `value`.
    fn encode(self, value: f64) -> f64 {
        match self {
            FitParam::Offset => (value / self.scale()).powi(2),
            _ => value / self.scale(),
        }
    }

    fn decode(self, x: f64) -> f64 {
        match self {
            FitParam::Offset => x.max(0.0).sqrt() * self.scale(),
            _ => x * self.scale(),
        }
    }

    fn lower_bound(self) -> f64 {
        match self {
            FitParam::Offset => 0.0,
            _ => f64::NEG_INFINITY,
        }
    }

    fn set(self, cfg: &mut RseeConfig, value: f64) {
        match self {
            FitParam::SpringStiffness => cfg.spring.stiffness = value,
            FitParam::Pretension => cfg.pretension = value,
            FitParam::Offset => {
                cfg.offset_a = value;
                cfg.offset_b = -value;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Fitted value of each free parameter, SI units.
    pub fitted: Vec<(FitParam, f64)>,
    pub config: RseeConfig,
    pub residual_rms: f64,
    pub residual_max: f64,
    pub samples: usize,
    pub iterations: usize,
}

impl FitReport {
    pub fn value(&self, p: FitParam) -> Option<f64> {
        self.fitted.iter().find(|(q, _)| *q == p).map(|&(_, v)| v)
    }
}

struct Problem<'a> {
    nominal: RseeConfig,
    free: &'a [FitParam],
    samples: &'a [(f64, f64)],
}

impl Problem<'_> {
    fn config(&self, x: &DVector<f64>) -> RseeConfig {
        let mut cfg = self.nominal;
        for (p, &xi) in self.free.iter().zip(x.iter()) {
            p.set(&mut cfg, p.decode(xi));
        }
        cfg
    }

    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let cfg = self.config(x);
        DVector::from_iterator(
            self.samples.len(),
            self.samples.iter().map(|&(b, tau)| cfg.output_torque(b) - tau),
        )
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.samples.len(), x.len());
        for c in 0..x.len() {
            let h = 1e-6 * x[c].abs().max(1.0);
            let mut xp = x.clone();
            xp[c] += h;
            let mut xm = x.clone();
            xm[c] -= h;
            // one-sided at an active bound
            let d = if xm[c] < self.free[c].lower_bound() {
                (self.residuals(&xp) - self.residuals(x)) / h
            } else {
                (self.residuals(&xp) - self.residuals(&xm)) / (2.0 * h)
            };
            j.set_column(c, &d);
        }
        j
    }

    fn project(&self, x: &mut DVector<f64>) {
        for (p, xi) in self.free.iter().zip(x.iter_mut()) {
            *xi = xi.max(p.lower_bound());
        }
    }

    fn admissible(&self, x: &DVector<f64>) -> bool {
        let cfg = self.config(x);
        cfg.spring.stiffness > 0.0 && x.iter().all(|v| v.is_finite())
    }
}

/// Fits the free parameters of `nominal` to `(deflection rad, torque N·m)` samples.
pub fn fit_quasi_static(
    samples: &[(f64, f64)],
    nominal: &RseeConfig,
    free: &[FitParam],
) -> Result<FitReport, AnalysisError> {
    let mut free: Vec<FitParam> = free.to_vec();
    free.sort();
    free.dedup();
    let needed = 3 * free.len().max(1);
    if samples.len() < needed {
        return Err(AnalysisError::TooFewSamples {
            got: samples.len(),
            needed,
        });
    }
    if samples.iter().any(|(b, t)| !b.is_finite() || !t.is_finite()) {
        return Err(AnalysisError::Invalid("samples must be finite".into()));
    }

    let problem = Problem {
        nominal: *nominal,
        free: &free,
        samples,
    };
    let mut x = DVector::from_iterator(free.len(), free.iter().map(|p| p.encode(p.get(nominal))));

    let mut iterations = 0;
    if !free.is_empty() {
        let j0 = problem.jacobian(&x);
        let sv = j0.clone().svd(false, false).singular_values;
        let smax = sv.max();
        if !(smax > 0.0) || sv.min() <= RANK_TOL * smax {
            return Err(AnalysisError::NotIdentifiable(format!(
                "sensitivity matrix is rank deficient for {:?}",
                free
            )));
        }

        let mut r = problem.residuals(&x);
        let mut cost = r.norm_squared();
        let mut lambda = 1e-3;
        for it in 0..MAX_ITER {
            iterations = it + 1;
            let j = problem.jacobian(&x);
            let jtj = j.transpose() * &j;
            let mut g = j.transpose() * &r;
            // parameters held at their bound by the gradient stay there this step
            let active: Vec<bool> = (0..x.len())
                .map(|c| x[c] <= free[c].lower_bound() && g[c] > 0.0)
                .collect();
            for c in (0..x.len()).filter(|&c| active[c]) {
                g[c] = 0.0;
            }
            if g.amax() <= 1e-15 * (1.0 + cost) {
                break;
            }
            let mut improved = false;
            let mut step_small = false;
            for _ in 0..30 {
                let mut a = jtj.clone();
                for d in 0..a.nrows() {
                    a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
                }
                for c in (0..x.len()).filter(|&c| active[c]) {
                    a.row_mut(c).fill(0.0);
                    a.column_mut(c).fill(0.0);
                    a[(c, c)] = 1.0;
                }
                let Some(delta) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                    lambda *= 10.0;
                    continue;
                };
                let mut x_new = &x + &delta;
                problem.project(&mut x_new);
                let delta = &x_new - &x;
                if problem.admissible(&x_new) {
                    let r_new = problem.residuals(&x_new);
                    let c_new = r_new.norm_squared();
                    if c_new < cost {
                        step_small = delta.norm() <= 1e-13 * (x.norm() + 1e-13);
                        let rel = (cost - c_new) / cost.max(f64::MIN_POSITIVE);
                        x = x_new;
                        r = r_new;
                        cost = c_new;
                        lambda = (lambda / 10.0).max(1e-12);
                        improved = true;
                        step_small |= rel < 1e-15;
                        break;
                    }
                }
                lambda *= 10.0;
            }
            if !improved || step_small {
                break;
            }
        }
    }

    let config = problem.config(&x);
    let residuals = problem.residuals(&x);
    let n = samples.len() as f64;
    Ok(FitReport {
        fitted: free.iter().map(|&p| (p, p.get(&config))).collect(),
        config,
        residual_rms: (residuals.norm_squared() / n).sqrt(),
        residual_max: residuals.amax(),
        samples: samples.len(),
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sweep(cfg: &RseeConfig, n: usize) -> Vec<(f64, f64)> {
        let half = cfg.feasible_half_range();
        (0..n)
            .map(|k| {
                let b = -half + 2.0 * half * k as f64 / (n - 1) as f64;
                (b, cfg.output_torque(b))
            })
            .collect()
    }

    #[test]
    fn recovers_noiseless_parameters() {
        let mut truth = RseeConfig::with_opposed_offset(12f64.to_radians());
        truth.spring.stiffness = 21_500.0;
        truth.pretension = 1.1e-3;
        let samples = sweep(&truth, 61);
        let nominal = RseeConfig::with_opposed_offset(10f64.to_radians());
        let all = [FitParam::SpringStiffness, FitParam::Pretension, FitParam::Offset];
        let rep = fit_quasi_static(&samples, &nominal, &all).unwrap();
        assert!(rep.residual_rms < 1e-9, "rms {}", rep.residual_rms);
        for p in all {
            let rel = (rep.value(p).unwrap() - p.get(&truth)).abs() / p.get(&truth).abs();
            assert!(rel < 1e-6, "{p:?} rel {rel}");
        }
        assert!(rep.residual_rms <= rep.residual_max);
    }

    #[test]
    fn offset_is_found_from_a_zero_start() {
        let truth = RseeConfig::with_opposed_offset(12f64.to_radians());
        let rep = fit_quasi_static(&sweep(&truth, 61), &RseeConfig::default(), &[FitParam::Offset]).unwrap();
        assert!((rep.value(FitParam::Offset).unwrap() - 12f64.to_radians()).abs() < 1e-8);

        let flat = fit_quasi_static(&sweep(&RseeConfig::default(), 61), &RseeConfig::default(), &[FitParam::Offset])
            .unwrap();
        assert_eq!(flat.value(FitParam::Offset), Some(0.0));
    }

    #[test]
    fn too_few_samples() {
        let cfg = RseeConfig::default();
        let samples = sweep(&cfg, 5);
        let err = fit_quasi_static(&samples, &cfg, &[FitParam::SpringStiffness, FitParam::Pretension]);
        assert_eq!(err.unwrap_err(), AnalysisError::TooFewSamples { got: 5, needed: 6 });
    }

    #[test]
    fn zero_deflection_samples_are_not_identifiable() {
        let cfg = RseeConfig::default();
        let samples = vec![(0.0, 0.0); 12];
        let err = fit_quasi_static(&samples, &cfg, &[FitParam::SpringStiffness]).unwrap_err();
        assert!(matches!(err, AnalysisError::NotIdentifiable(_)));
    }

    #[test]
    fn empty_free_set_reports_nominal_residual() {
        let cfg = RseeConfig::default();
        let samples: Vec<(f64, f64)> = sweep(&cfg, 11).into_iter().map(|(b, t)| (b, t + 0.5)).collect();
        let rep = fit_quasi_static(&samples, &cfg, &[]).unwrap();
        assert!((rep.residual_rms - 0.5).abs() < 1e-12);
        assert_eq!(rep.iterations, 0);
    }
}
