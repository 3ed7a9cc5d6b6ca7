//! Step-response and RMS metrics on recorded channels.

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::record::{Channel, SimRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// 10 % to 90 % of the step (s).
    pub rise_time: f64,
    /// Peak excursion beyond the target, as a percentage of the step size.
    pub overshoot_pct: f64,
    /// Time after the step until the response stays within 2 % of the step
    /// size; `None` if it never settles within the record.
    pub settling_time: Option<f64>,
    /// |target − mean of the last 10 % of the record| (channel units).
    pub steady_state_error: f64,
}

impl StepMetrics {
    pub fn settled(&self) -> bool {
        self.settling_time.is_some()
    }
}

/// Step metrics on the output torque of a record whose demand steps from
/// `initial` to `target` at `step_time`.
pub fn step_metrics(
    record: &SimRecord,
    step_time: f64,
    initial: f64,
    target: f64,
) -> Result<StepMetrics, AnalysisError> {
    step_metrics_from(
        &record.times(),
        &record.channel(Channel::Torque),
        step_time,
        initial,
        target,
    )
}

pub fn step_metrics_from(
    times: &[f64],
    values: &[f64],
    step_time: f64,
    initial: f64,
    target: f64,
) -> Result<StepMetrics, AnalysisError> {
    if times.is_empty() {
        return Err(AnalysisError::Empty("record"));
    }
    if times.len() != values.len() {
        return Err(AnalysisError::Invalid("times and values differ in length".into()));
    }
    let size = target - initial;
    if size == 0.0 || !size.is_finite() {
        return Err(AnalysisError::Invalid("step size must be nonzero".into()));
    }
    let start = times.partition_point(|&t| t < step_time);
    if start == times.len() {
        return Err(AnalysisError::Invalid("no samples after the step".into()));
    }
    let t = &times[start..];
    // Progress towards the target, 0 at the initial value and 1 at the target.
    let p: Vec<f64> = values[start..].iter().map(|v| (v - initial) / size).collect();

    let crossing = |level: f64| p.iter().position(|&x| x >= level).map(|i| t[i]);
    let rise_time = match (crossing(0.1), crossing(0.9)) {
        (Some(a), Some(b)) => b - a,
        _ => f64::INFINITY,
    };
    let peak = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let overshoot_pct = ((peak - 1.0) * 100.0).max(0.0);
    let settling_time = settling_time(t, &p, 1.0, 0.02).map(|ts| ts - step_time);

    let tail = (values.len() / 10).max(1);
    let mean_tail = values[values.len() - tail..].iter().sum::<f64>() / tail as f64;
    Ok(StepMetrics {
        rise_time,
        overshoot_pct,
        settling_time: settling_time.map(|s| s.max(0.0)),
        steady_state_error: (target - mean_tail).abs(),
    })
}

/// First time after which every sample stays within `band` of `target`.
pub fn settling_time(times: &[f64], values: &[f64], target: f64, band: f64) -> Option<f64> {
    match values.iter().rposition(|v| (v - target).abs() > band) {
        None => times.first().copied(),
        Some(i) if i + 1 < times.len() => Some(times[i + 1]),
        Some(_) => None,
    }
}

/// Portion of a record a metric is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Trailing fraction of the samples.
    LastFraction(f64),
    /// Samples at or after this time (s).
    FromTime(f64),
    All,
}

impl Default for Window {
    fn default() -> Self {
        Window::LastFraction(0.5)
    }
}

impl Window {
    fn start(&self, times: &[f64]) -> usize {
        match *self {
            Window::LastFraction(f) => {
                let f = f.clamp(0.0, 1.0);
                let keep = ((times.len() as f64) * f).round() as usize;
                times.len() - keep.clamp(1.min(times.len()), times.len())
            }
            Window::FromTime(t0) => times.partition_point(|&t| t < t0),
            Window::All => 0,
        }
    }
}

/// What a channel is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    Channel(Channel),
    Constant(f64),
}

pub fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// RMS of `channel − reference` over `window`.
pub fn rms_error(
    record: &SimRecord,
    channel: Channel,
    reference: Reference,
    window: Window,
) -> Result<f64, AnalysisError> {
    if record.is_empty() {
        return Err(AnalysisError::Empty("record"));
    }
    let times = record.times();
    let start = window.start(&times);
    let samples = &record.samples()[start..];
    if samples.is_empty() {
        return Err(AnalysisError::Empty("window"));
    }
    let errors: Vec<f64> = samples
        .iter()
        .map(|s| {
            let r = match reference {
                Reference::Channel(c) => c.of(s),
                Reference::Constant(c) => c,
            };
            channel.of(s) - r
        })
        .collect();
    Ok(rms(&errors))
}
