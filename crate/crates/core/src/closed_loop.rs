//! Plant plus controller harnesses used by the analysis layer and scenarios.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::analysis::{PointFlag, SineExperiment, SineRun};
use crate::controller::{CascadeController, ControllerGains};
use crate::model::RseeConfig;
use crate::plant::{integrate, ActuatorParams, Command, LoadModel, PlantState, SimError, Timing};
use crate::record::{Channel, SimRecord};

/// Commanded output torque over time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TorqueDemand {
    Constant(f64),
    Step { time: f64, initial: f64, target: f64 },
    /// `bias + amplitude·sin(2π·f·t)`
    Sinusoid { amplitude: f64, frequency: f64, bias: f64 },
}

impl TorqueDemand {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            TorqueDemand::Constant(v) => v,
            TorqueDemand::Step {
                time,
                initial,
                target,
            } => {
                if t >= time {
                    target
                } else {
                    initial
                }
            }
            TorqueDemand::Sinusoid {
                amplitude,
                frequency,
                bias,
            } => bias + amplitude * (TAU * frequency * t).sin(),
        }
    }
}

/// How the controller sees the spring torque: deflection from the two
/// encoders mapped through the torque law, optionally quantized and noisy.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Measurement {
    /// Deflection quantization step (rad).
    pub deflection_quantum: Option<f64>,
    /// Standard deviation of additive torque noise (N·m); zero disables noise.
    pub torque_noise: f64,
    pub seed: u64,
}

struct Sensor {
    model: Measurement,
    rng: Option<(ChaCha8Rng, Normal<f64>)>,
}

impl Sensor {
    fn new(model: Measurement) -> Self {
        let rng = (model.torque_noise > 0.0).then(|| {
            (
                ChaCha8Rng::seed_from_u64(model.seed),
                Normal::new(0.0, model.torque_noise).expect("finite noise level"),
            )
        });
        Self { model, rng }
    }

    fn torque(&mut self, cfg: &RseeConfig, deflection: f64) -> f64 {
        let beta = match self.model.deflection_quantum {
            Some(step) if step > 0.0 => (deflection / step).round() * step,
            _ => deflection,
        };
        let noise = self
            .rng
            .as_mut()
            .map_or(0.0, |(rng, normal)| normal.sample(rng));
        cfg.output_torque(beta) + noise
    }
}

/// Actuator, elastic element, controller and load wired together.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub cfg: RseeConfig,
    pub params: ActuatorParams,
    pub gains: ControllerGains,
    pub load: LoadModel,
    pub plant_step: f64,
    pub measurement: Measurement,
}

impl ClosedLoop {
    pub fn new(cfg: RseeConfig, params: ActuatorParams, gains: ControllerGains, load: LoadModel) -> Self {
        Self {
            cfg,
            params,
            gains,
            load,
            plant_step: 1e-4,
            measurement: Measurement::default(),
        }
    }

    pub fn timing(&self) -> Timing {
        Timing {
            plant_step: self.plant_step,
            control_period: self.gains.sample_period,
        }
    }

    /// Torque-controlled run from rest.
    pub fn run(&self, demand: &TorqueDemand, duration: f64) -> Result<SimRecord, SimError> {
        self.run_from(PlantState::default(), demand, duration)
    }

    pub fn run_from(
        &self,
        state0: PlantState,
        demand: &TorqueDemand,
        duration: f64,
    ) -> Result<SimRecord, SimError> {
        let mut ctrl = CascadeController::new(self.gains, self.params.current_to_torque());
        let mut sensor = Sensor::new(self.measurement);
        let cfg = self.cfg;
        integrate(
            state0,
            |s: &PlantState| {
                let tau_d = demand.at(s.t);
                let measured = sensor.torque(&cfg, s.deflection());
                let out = ctrl.step(tau_d, measured, s.theta);
                Command {
                    current: out.current,
                    torque_demand: tau_d,
                    velocity_demand: out.velocity_demand,
                }
            },
            &self.cfg,
            &self.params,
            &self.load,
            self.timing(),
            duration,
        )
    }

    /// Open-loop run with a prescribed current profile (A).
    pub fn run_current<F>(&self, current: F, duration: f64) -> Result<SimRecord, SimError>
    where
        F: Fn(f64) -> f64,
    {
        let params = self.params;
        integrate(
            PlantState::default(),
            |s: &PlantState| Command::current(current(s.t), &params),
            &self.cfg,
            &self.params,
            &self.load,
            self.timing(),
            duration,
        )
    }

    /// Unpowered actuator (zero current) moved by its load.
    pub fn run_unpowered(&self, duration: f64) -> Result<SimRecord, SimError> {
        self.run_current(|_| 0.0, duration)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopMode {
    /// Current command to spring torque.
    Open,
    /// Torque demand to spring torque through the cascade controller.
    Closed,
}

/// Sine excitation of a [`ClosedLoop`] for frequency-response estimation.
/// The amplitude is always a torque: for the open loop it is converted to
/// current through `N·k_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct BodeHarness {
    pub system: ClosedLoop,
    pub mode: LoopMode,
}

impl SineExperiment for BodeHarness {
    fn run_sine(&self, frequency_hz: f64, amplitude: f64, duration: f64) -> SineRun {
        let result = match self.mode {
            LoopMode::Open => {
                let amp_current = amplitude / self.system.params.current_to_torque();
                self.system
                    .run_current(|t| amp_current * (TAU * frequency_hz * t).sin(), duration)
            }
            LoopMode::Closed => self.system.run(
                &TorqueDemand::Sinusoid {
                    amplitude,
                    frequency: frequency_hz,
                    bias: 0.0,
                },
                duration,
            ),
        };
        match result {
            Ok(rec) => SineRun {
                times: rec.times(),
                input: rec.channel(Channel::TorqueDemand),
                output: rec.channel(Channel::Torque),
                flag: (rec.violation_count() > 0).then_some(PointFlag::WorkingSpace),
            },
            Err(e) => {
                let partial = e.partial_record().cloned().unwrap_or_default();
                SineRun {
                    times: partial.times(),
                    input: partial.channel(Channel::TorqueDemand),
                    output: partial.channel(Channel::Torque),
                    flag: Some(PointFlag::Diverged),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demand_profiles() {
        let s = TorqueDemand::Step {
            time: 0.1,
            initial: 0.0,
            target: 2.0,
        };
        assert_eq!(s.at(0.05), 0.0);
        assert_eq!(s.at(0.1), 2.0);
        let sine = TorqueDemand::Sinusoid {
            amplitude: 10.0,
            frequency: 0.25,
            bias: 1.0,
        };
        assert!((sine.at(1.0) - 11.0).abs() < 1e-12);
    }

    #[test]
    fn quantized_sensor_rounds_deflection() {
        let cfg = RseeConfig::default();
        let mut s = Sensor::new(Measurement {
            deflection_quantum: Some(0.01),
            ..Measurement::default()
        });
        assert_eq!(s.torque(&cfg, 0.104), cfg.output_torque(0.1));
    }

    #[test]
    fn noisy_sensor_is_seeded() {
        let cfg = RseeConfig::default();
        let m = Measurement {
            torque_noise: 0.1,
            seed: 7,
            ..Measurement::default()
        };
        let a: Vec<f64> = {
            let mut s = Sensor::new(m);
            (0..5).map(|_| s.torque(&cfg, 0.1)).collect()
        };
        let b: Vec<f64> = {
            let mut s = Sensor::new(m);
            (0..5).map(|_| s.torque(&cfg, 0.1)).collect()
        };
        assert_eq!(a, b);
        assert!(a.windows(2).any(|w| w[0] != w[1]));
    }
}
