//! Uniformly sampled time series produced by a simulation run.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::RseeConfig;
use crate::plant::{Command, PlantState};

/// One row of a run. Field names are the CSV column names.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSample {
    pub t_s: f64,
    pub theta_rad: f64,
    pub theta_dot_rad_s: f64,
    pub q_rad: f64,
    pub q_dot_rad_s: f64,
    pub beta_rad: f64,
    #[serde(rename = "tau_e_Nm")]
    pub tau_e_nm: f64,
    #[serde(rename = "tau_d_Nm")]
    pub tau_d_nm: f64,
    #[serde(rename = "i_m_A")]
    pub i_m_a: f64,
    pub theta_dot_d_rad_s: f64,
}

impl SimSample {
    pub fn new(state: &PlantState, cfg: &RseeConfig, cmd: &Command) -> Self {
        let beta = state.deflection();
        Self {
            t_s: state.t,
            theta_rad: state.theta,
            theta_dot_rad_s: state.theta_dot,
            q_rad: state.q,
            q_dot_rad_s: state.q_dot,
            beta_rad: beta,
            tau_e_nm: cfg.output_torque(beta),
            tau_d_nm: cmd.torque_demand,
            i_m_a: cmd.current,
            theta_dot_d_rad_s: cmd.velocity_demand,
        }
    }
}

/// Signals that metrics can be computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Time,
    Theta,
    ThetaDot,
    Q,
    QDot,
    Deflection,
    Torque,
    TorqueDemand,
    Current,
    VelocityDemand,
}

impl Channel {
    pub fn of(self, s: &SimSample) -> f64 {
        match self {
            Channel::Time => s.t_s,
            Channel::Theta => s.theta_rad,
            Channel::ThetaDot => s.theta_dot_rad_s,
            Channel::Q => s.q_rad,
            Channel::QDot => s.q_dot_rad_s,
            Channel::Deflection => s.beta_rad,
            Channel::Torque => s.tau_e_nm,
            Channel::TorqueDemand => s.tau_d_nm,
            Channel::Current => s.i_m_a,
            Channel::VelocityDemand => s.theta_dot_d_rad_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimRecord {
    samples: Vec<SimSample>,
    first_violation: Option<f64>,
    violation_count: usize,
}

impl SimRecord {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            samples: Vec::with_capacity(n),
            ..Self::default()
        }
    }

    pub fn from_samples(samples: Vec<SimSample>) -> Self {
        Self {
            samples,
            ..Self::default()
        }
    }

    pub fn push(&mut self, s: SimSample) {
        self.samples.push(s);
    }

    pub(crate) fn note_violation(&mut self, t: f64) {
        self.first_violation.get_or_insert(t);
        self.violation_count += 1;
    }

    pub fn samples(&self) -> &[SimSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&SimSample> {
        self.samples.last()
    }

    /// Time of the first sample outside the working space, if any.
    pub fn first_violation(&self) -> Option<f64> {
        self.first_violation
    }

    /// Number of samples outside the working space.
    pub fn violation_count(&self) -> usize {
        self.violation_count
    }

    pub fn channel(&self, ch: Channel) -> Vec<f64> {
        self.samples.iter().map(|s| ch.of(s)).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.channel(Channel::Time)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for s in &self.samples {
            wr.serialize(s)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> csv::Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv<R: Read>(r: R) -> csv::Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let samples = rd.deserialize().collect::<Result<Vec<SimSample>, _>>()?;
        Ok(Self::from_samples(samples))
    }

    pub fn load_csv(path: &Path) -> csv::Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}
