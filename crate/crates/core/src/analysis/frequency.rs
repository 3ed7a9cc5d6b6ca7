//! Sine-sweep frequency-response estimation.
//!
//! Each frequency is a separate simulation. After discarding the start-up
//! transient, input and output are each fitted with
//! `a·sin(ωt) + b·cos(ωt) + c + d·t` by linear least squares; gain and phase
//! follow from the fundamental components. For a nonlinear plant the result
//! is a describing-function estimate tagged with the excitation amplitude.

use std::f64::consts::TAU;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointFlag {
    /// The run left the working space (spring over-extension or deflection stop).
    WorkingSpace,
    /// The simulation diverged; gain and phase are not available.
    Diverged,
}

/// Sampled excitation and response of one sine run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SineRun {
    pub times: Vec<f64>,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    pub flag: Option<PointFlag>,
}

/// Anything that can be excited with a sinusoid of a given frequency and
/// amplitude for a given duration.
pub trait SineExperiment {
    fn run_sine(&self, frequency_hz: f64, amplitude: f64, duration: f64) -> SineRun;
}

impl<F> SineExperiment for F
where
    F: Fn(f64, f64, f64) -> SineRun,
{
    fn run_sine(&self, frequency_hz: f64, amplitude: f64, duration: f64) -> SineRun {
        self(frequency_hz, amplitude, duration)
    }
}

/// What the magnitude is normalized against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DcReference {
    /// The gain measured at the first (lowest) frequency of the grid.
    FirstPoint,
    /// A known static gain.
    Known(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSettings {
    /// Periods simulated per point (at least 8).
    pub periods: usize,
    /// Periods discarded as transient (at least 2).
    pub discard_periods: usize,
    /// Lower bound on the discarded time, for slow closed-loop modes (s).
    pub min_discard_s: f64,
    pub dc: DcReference,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            periods: 8,
            discard_periods: 2,
            min_discard_s: 0.0,
            dc: DcReference::FirstPoint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyResponse {
    pub frequencies_hz: Vec<f64>,
    /// dB relative to `dc_gain`.
    pub magnitude_db: Vec<f64>,
    /// Output phase relative to the input, unwrapped along the grid (deg).
    pub phase_deg: Vec<f64>,
    /// Raw output/input amplitude ratio.
    pub gain: Vec<f64>,
    /// Excitation amplitude used at each point.
    pub amplitude: Vec<f64>,
    pub flags: Vec<Option<PointFlag>>,
    pub dc_gain: f64,
}

impl FrequencyResponse {
    /// First −3 dB crossing, interpolated linearly in log-frequency.
    /// Diverged points carry no magnitude and are skipped; points flagged for
    /// leaving the working space are measured values and take part.
    pub fn bandwidth_hz(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .frequencies_hz
            .iter()
            .zip(&self.magnitude_db)
            .zip(&self.flags)
            .filter(|(_, flag)| **flag != Some(PointFlag::Diverged))
            .map(|((&f, &m), _)| (f, m))
            .filter(|(_, m)| m.is_finite())
            .collect();
        if pts.first().is_some_and(|&(_, m)| m <= -3.0) {
            return Some(pts[0].0);
        }
        pts.windows(2).find_map(|w| {
            let ((f0, m0), (f1, m1)) = (w[0], w[1]);
            (m0 > -3.0 && m1 <= -3.0).then(|| {
                let s = (-3.0 - m0) / (m1 - m0);
                (f0.ln() + s * (f1.ln() - f0.ln())).exp()
            })
        })
    }

    pub fn has_flags(&self) -> bool {
        self.flags.iter().any(Option::is_some)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["frequency_hz", "magnitude_db", "phase_deg", "gain", "amplitude", "flag"])?;
        for i in 0..self.frequencies_hz.len() {
            let flag = match self.flags[i] {
                None => "",
                Some(PointFlag::WorkingSpace) => "working_space",
                Some(PointFlag::Diverged) => "diverged",
            };
            wr.write_record([
                self.frequencies_hz[i].to_string(),
                self.magnitude_db[i].to_string(),
                self.phase_deg[i].to_string(),
                self.gain[i].to_string(),
                self.amplitude[i].to_string(),
                flag.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Least-squares fit of `a·sin(ωt) + b·cos(ωt) + c + d·(t − t̄)`; returns
/// the amplitude and phase of the fundamental.
pub fn fit_sinusoid(times: &[f64], values: &[f64], frequency_hz: f64) -> Option<(f64, f64)> {
    if times.len() < 4 || times.len() != values.len() {
        return None;
    }
    let w = TAU * frequency_hz;
    let t_mean = times.iter().sum::<f64>() / times.len() as f64;
    let mut ata = Matrix4::<f64>::zeros();
    let mut aty = Vector4::<f64>::zeros();
    for (&t, &y) in times.iter().zip(values) {
        let row = Vector4::new((w * t).sin(), (w * t).cos(), 1.0, t - t_mean);
        ata += row * row.transpose();
        aty += row * y;
    }
    let x = ata.lu().solve(&aty)?;
    let (a, b) = (x[0], x[1]);
    Some(((a * a + b * b).sqrt(), b.atan2(a)))
}

fn wrap_near(phase: f64, reference: f64) -> f64 {
    let mut p = phase;
    while p - reference > 180.0 {
        p -= 360.0;
    }
    while p - reference < -180.0 {
        p += 360.0;
    }
    p
}

/// Runs `system` at every frequency of `frequencies_hz` (strictly increasing).
pub fn estimate_frequency_response<S: SineExperiment + Sync>(
    system: &S,
    amplitude: f64,
    frequencies_hz: &[f64],
    settings: &EstimatorSettings,
) -> Result<FrequencyResponse, AnalysisError> {
    use rayon::prelude::*;

    if frequencies_hz.is_empty() {
        return Err(AnalysisError::Empty("frequency grid"));
    }
    if !frequencies_hz.windows(2).all(|w| w[1] > w[0]) || frequencies_hz[0] <= 0.0 {
        return Err(AnalysisError::Invalid(
            "frequencies must be positive and strictly increasing".into(),
        ));
    }
    if settings.periods < 8 || settings.discard_periods < 2 || settings.discard_periods >= settings.periods {
        return Err(AnalysisError::Invalid(
            "need >= 8 periods with >= 2 discarded and at least one kept".into(),
        ));
    }

    let points: Vec<(f64, f64, Option<PointFlag>)> = frequencies_hz
        .par_iter()
        .map(|&f| {
            let period = 1.0 / f;
            let discard = (settings.discard_periods as f64 * period).max(settings.min_discard_s);
            let kept = (settings.periods - settings.discard_periods) as f64 * period;
            let run = system.run_sine(f, amplitude, discard + kept);
            if run.flag == Some(PointFlag::Diverged) {
                return (f64::NAN, f64::NAN, run.flag);
            }
            let start = run.times.partition_point(|&t| t < discard - 1e-12);
            let t = &run.times[start..];
            let fit_in = fit_sinusoid(t, &run.input[start..], f);
            let fit_out = fit_sinusoid(t, &run.output[start..], f);
            match (fit_in, fit_out) {
                (Some((ai, pi)), Some((ao, po))) if ai > 0.0 => {
                    (ao / ai, (po - pi).to_degrees(), run.flag)
                }
                _ => (f64::NAN, f64::NAN, Some(PointFlag::Diverged)),
            }
        })
        .collect();

    let gain: Vec<f64> = points.iter().map(|p| p.0).collect();
    let flags: Vec<Option<PointFlag>> = points.iter().map(|p| p.2).collect();
    let dc_gain = match settings.dc {
        DcReference::Known(g) => g,
        DcReference::FirstPoint => gain[0],
    };
    let magnitude_db = gain.iter().map(|g| 20.0 * (g / dc_gain).log10()).collect();
    let mut phase_deg = Vec::with_capacity(points.len());
    let mut reference = 0.0;
    for p in &points {
        let unwrapped = if p.1.is_finite() {
            let u = wrap_near(p.1, reference);
            reference = u;
            u
        } else {
            f64::NAN
        };
        phase_deg.push(unwrapped);
    }
    Ok(FrequencyResponse {
        frequencies_hz: frequencies_hz.to_vec(),
        magnitude_db,
        phase_deg,
        gain,
        amplitude: vec![amplitude; frequencies_hz.len()],
        flags,
        dc_gain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pure_gain(gain: f64, lag: f64) -> impl Fn(f64, f64, f64) -> SineRun {
        move |f, a, dur| {
            let n = (dur * 1000.0) as usize;
            let times: Vec<f64> = (0..=n).map(|k| k as f64 * 1e-3).collect();
            SineRun {
                input: times.iter().map(|t| a * (TAU * f * t).sin()).collect(),
                output: times.iter().map(|t| gain * a * (TAU * f * t - lag).sin() + 0.3).collect(),
                times,
                flag: None,
            }
        }
    }

    #[test]
    fn sinusoid_fit_ignores_offset_and_drift() {
        let times: Vec<f64> = (0..2000).map(|k| k as f64 * 1e-3).collect();
        let y: Vec<f64> = times
            .iter()
            .map(|t| 2.0 * (TAU * 3.0 * t + 0.4).sin() + 1.0 + 0.5 * t)
            .collect();
        let (amp, ph) = fit_sinusoid(&times, &y, 3.0).unwrap();
        assert!((amp - 2.0).abs() < 1e-9);
        assert!((ph - 0.4).abs() < 1e-9);
    }

    #[test]
    fn constant_gain_and_lag() {
        let sys = pure_gain(0.5, 0.3);
        let fr = estimate_frequency_response(&sys, 1.0, &[1.0, 2.0, 5.0], &EstimatorSettings::default())
            .unwrap();
        for (m, p) in fr.magnitude_db.iter().zip(&fr.phase_deg) {
            assert!(m.abs() < 1e-9);
            assert!((p + 0.3f64.to_degrees()).abs() < 1e-6);
        }
        assert!((fr.dc_gain - 0.5).abs() < 1e-9);
        assert_eq!(fr.bandwidth_hz(), None);
    }

    #[test]
    fn rejects_bad_grids() {
        let sys = pure_gain(1.0, 0.0);
        let s = EstimatorSettings::default();
        assert!(estimate_frequency_response(&sys, 1.0, &[], &s).is_err());
        assert!(estimate_frequency_response(&sys, 1.0, &[2.0, 1.0], &s).is_err());
        let short = EstimatorSettings { periods: 4, ..s };
        assert!(estimate_frequency_response(&sys, 1.0, &[1.0], &short).is_err());
    }

    #[test]
    fn flagged_points_are_kept_and_reported() {
        let sys = |f: f64, a: f64, d: f64| {
            let mut run = pure_gain(1.0, 0.0)(f, a, d);
            if f > 3.0 {
                run.flag = Some(PointFlag::Diverged);
            }
            run
        };
        let fr = estimate_frequency_response(&sys, 1.0, &[1.0, 2.0, 4.0], &EstimatorSettings::default())
            .unwrap();
        assert_eq!(fr.frequencies_hz.len(), 3);
        assert_eq!(fr.flags[2], Some(PointFlag::Diverged));
        assert!(fr.gain[2].is_nan());
        assert!(fr.has_flags());
    }

    #[test]
    fn bandwidth_interpolates_in_log_frequency() {
        let fr = FrequencyResponse {
            frequencies_hz: vec![1.0, 10.0, 100.0],
            magnitude_db: vec![0.0, -2.0, -4.0],
            phase_deg: vec![0.0; 3],
            gain: vec![1.0; 3],
            amplitude: vec![1.0; 3],
            flags: vec![None; 3],
            dc_gain: 1.0,
        };
        assert!((fr.bandwidth_hz().unwrap() - 10f64.powf(1.5)).abs() < 1e-9);
    }

    #[test]
    fn working_space_points_count_toward_bandwidth() {
        let mut fr = FrequencyResponse {
            frequencies_hz: vec![1.0, 10.0, 100.0],
            magnitude_db: vec![0.0, -4.0, -6.0],
            phase_deg: vec![0.0; 3],
            gain: vec![1.0; 3],
            amplitude: vec![1.0; 3],
            flags: vec![None, Some(PointFlag::WorkingSpace), None],
            dc_gain: 1.0,
        };
        assert!(fr.bandwidth_hz().unwrap() < 10.0);
        fr.flags[1] = Some(PointFlag::Diverged);
        fr.magnitude_db[1] = f64::NAN;
        assert!(fr.bandwidth_hz().unwrap() > 10.0);
    }
}
