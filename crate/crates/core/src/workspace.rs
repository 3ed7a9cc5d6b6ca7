//! Torque and stiffness maps over a configuration axis and the deflection
//! angle, with working-space masks, performance bounds and a linearity
//! measure of individual torque curves.

use std::io::Write;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, RseeConfig, StiffnessMode, MIN_PRETENSION};

/// Default number of deflection samples.
pub const DEFAULT_DEFLECTION_POINTS: usize = 181;
/// Default number of samples on the configuration axis.
pub const DEFAULT_AXIS_POINTS: usize = 121;
/// `1 − R²` below which a torque curve counts as linear.
pub const LINEARITY_THRESHOLD: f64 = 5e-3;
/// Fewest samples accepted by the linearity measure.
pub const MIN_LINEARITY_SAMPLES: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkspaceError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("no feasible cell in the swept region")]
    EmptyFeasibleRegion,
    #[error("{count} of {total} samples lie outside the working space")]
    InfeasibleSamples { count: usize, total: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { got: usize, needed: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Evenly spaced closed interval; the end points are hit exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl Grid {
    pub fn new(start: f64, end: f64, points: usize) -> Self {
        Self { start, end, points }
    }

    /// Symmetric deflection grid over the structural stop of `cfg`.
    pub fn deflections(cfg: &RseeConfig, points: usize) -> Self {
        Self::new(-cfg.deflection_limit, cfg.deflection_limit, points)
    }

    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => vec![],
            1 => vec![self.start],
            n => (0..n)
                .map(|k| {
                    if k == n - 1 {
                        self.end
                    } else {
                        self.start + (self.end - self.start) * k as f64 / (n - 1) as f64
                    }
                })
                .collect(),
        }
    }

    /// Same interval with twice the spacing density.
    pub fn refined(&self) -> Self {
        Self {
            points: 2 * self.points.max(1) - 1,
            ..*self
        }
    }

    fn check(&self, name: &str) -> Result<(), WorkspaceError> {
        if self.points == 0 {
            return Err(WorkspaceError::InvalidGrid(format!("{name} has no points")));
        }
        if !(self.start.is_finite() && self.end.is_finite()) || self.end < self.start {
            return Err(WorkspaceError::InvalidGrid(format!(
                "{name} must satisfy start <= end (got {} .. {})",
                self.start, self.end
            )));
        }
        if self.points == 1 && self.start != self.end {
            return Err(WorkspaceError::InvalidGrid(format!(
                "{name} with one point must have start == end"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    /// Spring pre-tension (m).
    Pretension,
    /// Opposed offset angle `φ1 = φ, φ2 = −φ` (rad).
    Offset,
}

impl AxisKind {
    pub fn apply(self, base: &RseeConfig, value: f64) -> RseeConfig {
        let mut cfg = *base;
        match self {
            AxisKind::Pretension => cfg.pretension = value,
            AxisKind::Offset => {
                cfg.offset_a = value;
                cfg.offset_b = -value;
            }
        }
        cfg
    }
}

/// Rows follow the configuration axis, columns the deflection axis.
#[derive(Debug, Clone, PartialEq)]
pub struct StiffnessMap {
    pub base: RseeConfig,
    pub axis_kind: AxisKind,
    pub axis: Vec<f64>,
    pub deflections: Vec<f64>,
    pub torque: Array2<f64>,
    pub stiffness: Array2<f64>,
    pub feasible: Array2<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceBounds {
    /// N·m/rad
    pub k_min: f64,
    /// N·m/rad
    pub k_max: f64,
    /// Largest |τ_e| over feasible cells (N·m).
    pub tau_max: f64,
    /// Deflection at which `tau_max` occurs (rad).
    pub beta_at_tau_max: f64,
    /// Configuration-axis value at which `tau_max` occurs.
    pub axis_at_tau_max: f64,
    pub feasible_cells: usize,
}

/// Sweeps the pre-tension of `base`, keeping its offsets and spring.
pub fn sweep_pretension(
    base: &RseeConfig,
    pretension: Grid,
    deflection: Grid,
) -> Result<StiffnessMap, WorkspaceError> {
    pretension.check("pretension grid")?;
    if pretension.start < MIN_PRETENSION * (1.0 - 1e-9) {
        return Err(WorkspaceError::InvalidGrid(format!(
            "pretension must be >= {} mm",
            MIN_PRETENSION * 1e3
        )));
    }
    sweep(base, AxisKind::Pretension, pretension, deflection)
}

/// Sweeps the opposed offset angle of `base`, keeping its pre-tension and spring.
pub fn sweep_offset(base: &RseeConfig, offset: Grid, deflection: Grid) -> Result<StiffnessMap, WorkspaceError> {
    offset.check("offset grid")?;
    sweep(base, AxisKind::Offset, offset, deflection)
}

fn sweep(base: &RseeConfig, kind: AxisKind, axis: Grid, deflection: Grid) -> Result<StiffnessMap, WorkspaceError> {
    deflection.check("deflection grid")?;
    base.validate()?;
    let axis_values = axis.values();
    let betas = deflection.values();
    let rows: Vec<Vec<(f64, f64, bool)>> = axis_values
        .par_iter()
        .map(|&a| {
            let cfg = kind.apply(base, a);
            betas
                .iter()
                .map(|&b| (cfg.output_torque(b), cfg.equivalent_stiffness(b), cfg.is_feasible(b)))
                .collect()
        })
        .collect();
    let shape = (axis_values.len(), betas.len());
    let cell = |f: fn(&(f64, f64, bool)) -> f64| Array2::from_shape_fn(shape, |(i, j)| f(&rows[i][j]));
    let torque = cell(|c| c.0);
    let stiffness = cell(|c| c.1);
    let feasible = Array2::from_shape_fn(shape, |(i, j)| rows[i][j].2);
    if !feasible.iter().any(|&f| f) {
        return Err(WorkspaceError::EmptyFeasibleRegion);
    }
    Ok(StiffnessMap {
        base: *base,
        axis_kind: kind,
        axis: axis_values,
        deflections: betas,
        torque,
        stiffness,
        feasible,
    })
}

impl StiffnessMap {
    /// Configuration at row `i`.
    pub fn config(&self, i: usize) -> RseeConfig {
        self.axis_kind.apply(&self.base, self.axis[i])
    }

    pub fn feasible_cells(&self) -> usize {
        self.feasible.iter().filter(|&&f| f).count()
    }

    /// Extrema over feasible cells. Ties in |τ| go to the positive deflection.
    pub fn performance_bounds(&self) -> Result<PerformanceBounds, WorkspaceError> {
        let mut k_min = f64::INFINITY;
        let mut k_max = f64::NEG_INFINITY;
        let mut best: Option<(f64, f64, f64)> = None;
        for ((i, j), &ok) in self.feasible.indexed_iter() {
            if !ok {
                continue;
            }
            let k = self.stiffness[(i, j)];
            k_min = k_min.min(k);
            k_max = k_max.max(k);
            let tau = self.torque[(i, j)].abs();
            let beta = self.deflections[j];
            let better = match best {
                None => true,
                Some((t, b, _)) => tau > t || (tau == t && beta > b),
            };
            if better {
                best = Some((tau, beta, self.axis[i]));
            }
        }
        let (tau_max, beta_at_tau_max, axis_at_tau_max) = best.ok_or(WorkspaceError::EmptyFeasibleRegion)?;
        Ok(PerformanceBounds {
            k_min,
            k_max,
            tau_max,
            beta_at_tau_max,
            axis_at_tau_max,
            feasible_cells: self.feasible_cells(),
        })
    }

    /// Long format: one row per cell.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["axis1", "beta", "torque", "stiffness", "feasible"])?;
        for ((i, j), &ok) in self.feasible.indexed_iter() {
            wr.write_record([
                self.axis[i].to_string(),
                self.deflections[j].to_string(),
                self.torque[(i, j)].to_string(),
                self.stiffness[(i, j)].to_string(),
                ok.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// `1 − R²` of the least-squares line through the origin fitted to
/// `(deflection, torque)` samples; 0 for an exactly linear curve, clamped to [0, 1].
pub fn linearity_index_of(samples: &[(f64, f64)]) -> Result<f64, WorkspaceError> {
    if samples.len() < MIN_LINEARITY_SAMPLES {
        return Err(WorkspaceError::TooFewSamples {
            got: samples.len(),
            needed: MIN_LINEARITY_SAMPLES,
        });
    }
    let sbb: f64 = samples.iter().map(|(b, _)| b * b).sum();
    let sbt: f64 = samples.iter().map(|(b, t)| b * t).sum();
    if sbb == 0.0 {
        return Err(WorkspaceError::InvalidGrid("deflection samples are all zero".into()));
    }
    let slope = sbt / sbb;
    let mean = samples.iter().map(|(_, t)| t).sum::<f64>() / samples.len() as f64;
    let ss_res: f64 = samples.iter().map(|(b, t)| (t - slope * b).powi(2)).sum();
    let ss_tot: f64 = samples.iter().map(|(_, t)| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Ok(if ss_res == 0.0 { 0.0 } else { 1.0 });
    }
    Ok((ss_res / ss_tot).clamp(0.0, 1.0))
}

/// Linearity of `cfg` sampled at `points` deflections over `±half_range`.
pub fn linearity_index(cfg: &RseeConfig, half_range: f64, points: usize) -> Result<f64, WorkspaceError> {
    let grid = Grid::new(-half_range, half_range, points);
    grid.check("deflection grid")?;
    let samples: Vec<(f64, f64)> = grid.values().into_iter().map(|b| (b, cfg.output_torque(b))).collect();
    let bad = samples.iter().filter(|(b, _)| !cfg.is_feasible(*b)).count();
    if bad > 0 {
        return Err(WorkspaceError::InfeasibleSamples {
            count: bad,
            total: samples.len(),
        });
    }
    linearity_index_of(&samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearityReport {
    pub index: f64,
    pub mode: StiffnessMode,
}

/// Linear when the index is below `threshold`, otherwise hardening or
/// softening according to the stiffness trend over the range.
pub fn classify(
    cfg: &RseeConfig,
    half_range: f64,
    points: usize,
    threshold: f64,
) -> Result<LinearityReport, WorkspaceError> {
    let index = linearity_index(cfg, half_range, points)?;
    let mode = if index < threshold {
        StiffnessMode::Linear
    } else {
        cfg.stiffness_trend(half_range)
    };
    Ok(LinearityReport { index, mode })
}
