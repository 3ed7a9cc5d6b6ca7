//! Declarative experiments: JSON scenario documents in, CSV records and JSON
//! summaries out.
//!
//! A document names a scenario `kind` and overrides any subset of the
//! prototype defaults. Omitted kind-specific sections (load, duration,
//! commanded torque, sweep grids, ...) are filled from per-kind defaults, and
//! the normalized document is echoed in every summary together with its
//! SHA-256 hash.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{
    self, estimate_frequency_response, fit_quasi_static, step_metrics, DcReference, EstimatorSettings, FitParam,
    Reference, Window,
};
use crate::closed_loop::{BodeHarness, ClosedLoop, LoopMode, Measurement, TorqueDemand};
use crate::config::{
    ActuatorDoc, FrictionDoc, FrictionKind, GainsDoc, InertialDoc, LoadDoc, LoadStopDoc, LockedDoc, ReleasedDoc,
    RseeConfigDoc, SineDoc,
};
use crate::controller::ControllerGains;
use crate::design::{search_configuration, DesignError, DesignTarget, SearchBox};
use crate::model::RseeConfig;
use crate::plant::{ActuatorParams, FrictionModel, LoadModel, SimError, Timing};
use crate::record::{Channel, SimRecord};
use crate::workspace::{sweep_offset, sweep_pretension, Grid, DEFAULT_AXIS_POINTS, DEFAULT_DEFLECTION_POINTS};

/// Tolerance band for collision recovery, as a fraction of the held torque.
pub const RECOVERY_BAND: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{0}")]
    Parse(String),
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("simulation failed: {message}")]
    Simulation {
        message: String,
        /// Record written up to the failure, if any.
        partial: Option<PathBuf>,
    },
    #[error("analysis failed: {0}")]
    Analysis(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl ScenarioError {
    /// True for errors caused by the input document rather than the run.
    pub fn is_validation(&self) -> bool {
        matches!(self, ScenarioError::Parse(_) | ScenarioError::Invalid(_))
    }
}

impl From<std::io::Error> for ScenarioError {
    fn from(e: std::io::Error) -> Self {
        ScenarioError::Io(e.to_string())
    }
}

impl From<csv::Error> for ScenarioError {
    fn from(e: csv::Error) -> Self {
        ScenarioError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for ScenarioError {
    fn from(e: serde_json::Error) -> Self {
        ScenarioError::Io(e.to_string())
    }
}

impl From<analysis::AnalysisError> for ScenarioError {
    fn from(e: analysis::AnalysisError) -> Self {
        ScenarioError::Analysis(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    QuasiStatic,
    #[default]
    TrackSine,
    Step,
    Collision,
    PhriPassive,
    PhriTransparent,
    PhriAssistive,
    BodeOpen,
    BodeClosed,
    SweepMap,
    DesignSearch,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 11] = [
        ScenarioKind::QuasiStatic,
        ScenarioKind::TrackSine,
        ScenarioKind::Step,
        ScenarioKind::Collision,
        ScenarioKind::PhriPassive,
        ScenarioKind::PhriTransparent,
        ScenarioKind::PhriAssistive,
        ScenarioKind::BodeOpen,
        ScenarioKind::BodeClosed,
        ScenarioKind::SweepMap,
        ScenarioKind::DesignSearch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::QuasiStatic => "quasi_static",
            ScenarioKind::TrackSine => "track_sine",
            ScenarioKind::Step => "step",
            ScenarioKind::Collision => "collision",
            ScenarioKind::PhriPassive => "phri_passive",
            ScenarioKind::PhriTransparent => "phri_transparent",
            ScenarioKind::PhriAssistive => "phri_assistive",
            ScenarioKind::BodeOpen => "bode_open",
            ScenarioKind::BodeClosed => "bode_closed",
            ScenarioKind::SweepMap => "sweep_map",
            ScenarioKind::DesignSearch => "design_search",
        }
    }

    pub fn is_phri(self) -> bool {
        matches!(
            self,
            ScenarioKind::PhriPassive | ScenarioKind::PhriTransparent | ScenarioKind::PhriAssistive
        )
    }

    fn is_bode(self) -> bool {
        matches!(self, ScenarioKind::BodeOpen | ScenarioKind::BodeClosed)
    }

    fn default_duration(self) -> f64 {
        match self {
            ScenarioKind::TrackSine => 10.0,
            ScenarioKind::Step => 1.2,
            ScenarioKind::Collision => 1.5,
            ScenarioKind::PhriPassive => 8.0,
            ScenarioKind::PhriTransparent | ScenarioKind::PhriAssistive => 10.0,
            _ => 1.0,
        }
    }

    fn default_torque(self) -> f64 {
        match self {
            ScenarioKind::TrackSine => 10.0,
            ScenarioKind::Step => 6.0,
            ScenarioKind::Collision | ScenarioKind::PhriAssistive => 5.0,
            ScenarioKind::BodeOpen | ScenarioKind::BodeClosed => 1.0,
            _ => 0.0,
        }
    }

    fn default_load(self) -> LoadDoc {
        match self {
            ScenarioKind::Collision => LoadDoc::Released(ReleasedDoc {
                angle_deg: 0.0,
                release_time_s: 0.5,
                load: InertialDoc {
                    stop: Some(LoadStopDoc {
                        lower_deg: -90.0,
                        upper_deg: 10.0,
                        ..LoadStopDoc::default()
                    }),
                    ..InertialDoc::default()
                },
            }),
            ScenarioKind::PhriPassive => LoadDoc::PrescribedSine(SineDoc {
                frequency_hz: 0.25,
                ..SineDoc::default()
            }),
            ScenarioKind::PhriTransparent | ScenarioKind::PhriAssistive => LoadDoc::PrescribedSine(SineDoc::default()),
            _ => LoadDoc::default(),
        }
    }

    /// Interaction and frequency-response scenarios emulate the bench and
    /// include gearbox friction; torque-control scenarios use the nominal
    /// frictionless drive.
    fn default_actuator(self) -> ActuatorDoc {
        let mut doc = ActuatorDoc::default();
        if self.is_phri() || self.is_bode() {
            doc.friction = FrictionModel::bench().into();
        }
        doc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementDoc {
    pub deflection_quantum_deg: Option<f64>,
    pub torque_noise_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BodeDoc {
    /// Explicit grid; when empty a log-spaced grid `min_hz..max_hz` is used.
    pub frequencies_hz: Vec<f64>,
    pub min_hz: f64,
    pub max_hz: f64,
    pub points: usize,
    pub periods: usize,
    pub discard_periods: usize,
    pub min_discard_s: f64,
}

impl Default for BodeDoc {
    fn default() -> Self {
        Self {
            frequencies_hz: vec![],
            min_hz: 0.5,
            max_hz: 100.0,
            points: 25,
            periods: 8,
            discard_periods: 2,
            min_discard_s: 0.0,
        }
    }
}

impl BodeDoc {
    pub fn grid(&self) -> Vec<f64> {
        if !self.frequencies_hz.is_empty() {
            return self.frequencies_hz.clone();
        }
        Grid::new(self.min_hz.ln(), self.max_hz.ln(), self.points)
            .values()
            .into_iter()
            .map(f64::exp)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Pretension,
    #[default]
    Offset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepDoc {
    pub axis: SweepAxis,
    /// mm for pre-tension, degrees for offset; per-axis default when omitted.
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub axis_points: usize,
    pub deflection_points: usize,
}

impl Default for SweepDoc {
    fn default() -> Self {
        Self {
            axis: SweepAxis::Offset,
            min: None,
            max: None,
            axis_points: DEFAULT_AXIS_POINTS,
            deflection_points: DEFAULT_DEFLECTION_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuasiStaticDoc {
    /// Standard deviation of the additive torque noise (N·m).
    pub noise_nm: f64,
    pub points: usize,
    pub free: Vec<FitParam>,
}

impl Default for QuasiStaticDoc {
    fn default() -> Self {
        Self {
            noise_nm: 0.25,
            points: 61,
            free: vec![FitParam::SpringStiffness, FitParam::Pretension],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignDoc {
    /// Rows of `[deflection_deg, torque_nm]`; when empty the profile of
    /// `config` over its feasible range is used.
    pub samples: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub min_pairs: u32,
    pub max_pairs: u32,
    pub pretension_mm: [f64; 2],
    pub offset_deg: [f64; 2],
}

impl Default for DesignDoc {
    fn default() -> Self {
        let b = SearchBox::default();
        Self {
            samples: vec![],
            weights: vec![],
            min_pairs: b.min_pairs,
            max_pairs: b.max_pairs,
            pretension_mm: [b.pretension.0 * 1e3, b.pretension.1 * 1e3],
            offset_deg: [b.offset.0.to_degrees(), b.offset.1.to_degrees()],
        }
    }
}

/// Scenario document as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioDoc {
    pub kind: ScenarioKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub seed: u64,
    pub duration_s: Option<f64>,
    pub plant_step_ms: f64,
    pub config: RseeConfigDoc,
    pub actuator: Option<ActuatorDoc>,
    pub gains: GainsDoc,
    pub load: Option<LoadDoc>,
    /// Commanded torque: sine amplitude, step target, held or assistive
    /// torque, or Bode excitation amplitude depending on the kind.
    pub torque_nm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frequency_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_time_s: Option<f64>,
    pub measurement: MeasurementDoc,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bode: Option<BodeDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quasi_static: Option<QuasiStaticDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignDoc>,
}

impl Default for ScenarioDoc {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::default(),
            name: None,
            seed: 0,
            duration_s: None,
            plant_step_ms: 0.1,
            config: RseeConfigDoc::default(),
            actuator: None,
            gains: GainsDoc::default(),
            load: None,
            torque_nm: None,
            frequency_hz: None,
            step_time_s: None,
            measurement: MeasurementDoc::default(),
            bode: None,
            sweep: None,
            quasi_static: None,
            design: None,
        }
    }
}

impl ScenarioDoc {
    pub fn of_kind(kind: ScenarioKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    /// Fills every kind-relevant optional field with its default and drops
    /// sections that do not apply to the kind.
    pub fn normalized(&self) -> Self {
        let k = self.kind;
        let mut d = self.clone();
        d.duration_s = Some(d.duration_s.unwrap_or(k.default_duration()));
        d.actuator = Some(d.actuator.unwrap_or_else(|| k.default_actuator()));
        d.load = Some(d.load.take().unwrap_or_else(|| k.default_load()));
        d.torque_nm = Some(d.torque_nm.unwrap_or(k.default_torque()));
        d.frequency_hz = match k {
            ScenarioKind::TrackSine => Some(d.frequency_hz.unwrap_or(0.3)),
            _ => None,
        };
        d.step_time_s = match k {
            ScenarioKind::Step => Some(d.step_time_s.unwrap_or(0.1)),
            _ => None,
        };
        d.bode = k.is_bode().then(|| d.bode.take().unwrap_or_default());
        d.sweep = (k == ScenarioKind::SweepMap).then(|| {
            let mut s = d.sweep.unwrap_or_default();
            let (lo, hi) = match s.axis {
                SweepAxis::Pretension => (0.5, 6.5),
                SweepAxis::Offset => (0.0, 30.0),
            };
            s.min = Some(s.min.unwrap_or(lo));
            s.max = Some(s.max.unwrap_or(hi));
            s
        });
        d.quasi_static = (k == ScenarioKind::QuasiStatic).then(|| d.quasi_static.take().unwrap_or_default());
        d.design = (k == ScenarioKind::DesignSearch).then(|| d.design.take().unwrap_or_default());
        d
    }

    /// SHA-256 of the normalized document's JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.normalized()).expect("scenario documents serialize");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// A validated scenario with its SI-unit parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Normalized document.
    pub doc: ScenarioDoc,
    pub cfg: RseeConfig,
    pub params: ActuatorParams,
    pub gains: ControllerGains,
    pub load: LoadModel,
    pub measurement: Measurement,
}

impl Scenario {
    pub fn kind(&self) -> ScenarioKind {
        self.doc.kind
    }

    pub fn duration(&self) -> f64 {
        self.doc.duration_s.expect("normalized")
    }

    pub fn torque(&self) -> f64 {
        self.doc.torque_nm.expect("normalized")
    }

    pub fn plant_step(&self) -> f64 {
        self.doc.plant_step_ms / 1e3
    }

    pub fn system(&self) -> ClosedLoop {
        ClosedLoop {
            cfg: self.cfg,
            params: self.params,
            gains: self.gains,
            load: self.load.clone(),
            plant_step: self.plant_step(),
            measurement: self.measurement,
        }
    }

    pub fn from_doc(doc: &ScenarioDoc) -> Result<Self, ScenarioError> {
        let doc = doc.normalized();
        let cfg: RseeConfig = doc.config.into();
        let params: ActuatorParams = doc.actuator.expect("normalized").into();
        let gains: ControllerGains = doc.gains.into();
        let load: LoadModel = doc.load.clone().expect("normalized").into();
        let measurement = Measurement {
            deflection_quantum: doc.measurement.deflection_quantum_deg.map(f64::to_radians),
            torque_noise: doc.measurement.torque_noise_nm,
            seed: doc.seed,
        };

        let mut errs = cfg.violations("config.");
        errs.extend(params.violations("actuator."));
        errs.extend(gains.violations("gains."));
        errs.extend(load.violations("load."));
        let duration = doc.duration_s.expect("normalized");
        if !(duration > 0.0 && duration.is_finite()) {
            errs.push(format!("duration_s must be > 0 (got {duration})"));
        }
        if !(doc.torque_nm.expect("normalized").is_finite()) {
            errs.push("torque_nm must be finite".into());
        }
        if let Err(e) = (Timing {
            plant_step: doc.plant_step_ms / 1e3,
            control_period: gains.sample_period,
        })
        .substeps()
        {
            errs.push(format!("plant_step_ms: {e}"));
        }
        if let Some(q) = doc.measurement.deflection_quantum_deg {
            if !(q > 0.0 && q.is_finite()) {
                errs.push("measurement.deflection_quantum_deg must be > 0".into());
            }
        }
        if !(doc.measurement.torque_noise_nm >= 0.0 && doc.measurement.torque_noise_nm.is_finite()) {
            errs.push("measurement.torque_noise_nm must be >= 0".into());
        }
        if let Some(f) = doc.frequency_hz {
            if !(f > 0.0 && f.is_finite()) {
                errs.push(format!("frequency_hz must be > 0 (got {f})"));
            }
        }
        if let Some(t) = doc.step_time_s {
            if !(t >= 0.0 && t < duration) {
                errs.push("step_time_s must lie inside the run".into());
            }
        }
        if let Some(b) = &doc.bode {
            let grid = b.grid();
            if grid.is_empty() || !grid.windows(2).all(|w| w[1] > w[0]) || grid[0] <= 0.0 {
                errs.push("bode: frequencies must be positive and strictly increasing".into());
            }
            if b.periods < 8 || b.discard_periods < 2 || b.discard_periods >= b.periods {
                errs.push("bode: need periods >= 8 and 2 <= discard_periods < periods".into());
            }
        }
        if let Some(s) = &doc.sweep {
            let (lo, hi) = (s.min.expect("normalized"), s.max.expect("normalized"));
            if !(lo <= hi) {
                errs.push("sweep.min must be <= sweep.max".into());
            }
            if s.axis == SweepAxis::Pretension && lo < 0.5 {
                errs.push(format!("sweep.min must be >= 0.5 mm for a pretension sweep (got {lo})"));
            }
            if s.axis_points == 0 || s.deflection_points == 0 {
                errs.push("sweep: grids need at least one point".into());
            }
        }
        if let Some(q) = &doc.quasi_static {
            if !(q.noise_nm >= 0.0 && q.noise_nm.is_finite()) {
                errs.push("quasi_static.noise_nm must be >= 0".into());
            }
            let needed = 3 * q.free.len().max(1);
            if q.points < needed.max(2) {
                errs.push(format!("quasi_static.points must be >= {}", needed.max(2)));
            }
        }
        if let Some(d) = &doc.design {
            if !d.weights.is_empty() && d.weights.len() != d.samples.len() {
                errs.push("design.weights must match design.samples".into());
            }
        }
        if !errs.is_empty() {
            return Err(ScenarioError::Invalid(errs));
        }
        Ok(Self {
            doc,
            cfg,
            params,
            gains,
            load,
            measurement,
        })
    }
}

/// Parses a JSON scenario document without validating it. Unknown keys and
/// type errors are reported with the path of the offending field.
pub fn parse_document(text: &str) -> Result<ScenarioDoc, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            ScenarioError::Parse(e.into_inner().to_string())
        } else {
            ScenarioError::Parse(format!("{path}: {}", e.into_inner()))
        }
    })
}

/// Parses and validates a JSON scenario document.
pub fn validate_config(text: &str) -> Result<Scenario, ScenarioError> {
    Scenario::from_doc(&parse_document(text)?)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
    validate_config(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub plant_step_s: f64,
    pub control_period_s: f64,
    pub gains: GainsDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: ScenarioDoc,
    pub metrics: BTreeMap<String, Value>,
    /// Output files, relative to the run directory.
    pub outputs: Vec<String>,
    pub provenance: Provenance,
}

impl RunSummary {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).and_then(Value::as_f64)
    }
}

pub const SUMMARY_FILE: &str = "summary.json";

fn provenance(s: &Scenario) -> Provenance {
    Provenance {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: s.doc.hash(),
        seed: s.doc.seed,
        plant_step_s: s.plant_step(),
        control_period_s: s.gains.sample_period,
        gains: s.doc.gains,
    }
}

fn finish(
    s: &Scenario,
    out_dir: &Path,
    metrics: BTreeMap<String, Value>,
    outputs: Vec<String>,
) -> Result<RunSummary, ScenarioError> {
    let mut outputs = outputs;
    outputs.push(SUMMARY_FILE.to_string());
    let summary = RunSummary {
        scenario: s.doc.clone(),
        metrics,
        outputs,
        provenance: provenance(s),
    };
    fs::write(out_dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

fn sim_failure(e: SimError, out_dir: &Path) -> ScenarioError {
    let partial = e.partial_record().and_then(|rec| {
        let path = out_dir.join("partial.csv");
        rec.save_csv(&path).ok().map(|_| path)
    });
    ScenarioError::Simulation {
        message: e.to_string(),
        partial,
    }
}

fn save_record(rec: &SimRecord, out_dir: &Path) -> Result<String, ScenarioError> {
    const RECORD_FILE: &str = "record.csv";
    rec.save_csv(&out_dir.join(RECORD_FILE))?;
    Ok(RECORD_FILE.to_string())
}

fn num(v: f64) -> Value {
    json!(v)
}

fn opt(v: Option<f64>) -> Value {
    v.map_or(Value::Null, |x| json!(x))
}

/// Executes the scenario, writing its artifacts into `out_dir`.
pub fn run(s: &Scenario, out_dir: &Path) -> Result<RunSummary, ScenarioError> {
    fs::create_dir_all(out_dir)?;
    match s.kind() {
        ScenarioKind::QuasiStatic => run_quasi_static(s, out_dir),
        ScenarioKind::TrackSine => run_track_sine(s, out_dir),
        ScenarioKind::Step => run_step(s, out_dir),
        ScenarioKind::Collision => collision_scenario(s, out_dir),
        ScenarioKind::PhriPassive | ScenarioKind::PhriTransparent | ScenarioKind::PhriAssistive => {
            run_phri(s, out_dir)
        }
        ScenarioKind::BodeOpen | ScenarioKind::BodeClosed => run_bode(s, out_dir),
        ScenarioKind::SweepMap => run_sweep(s, out_dir),
        ScenarioKind::DesignSearch => run_design(s, out_dir),
    }
}

fn run_track_sine(s: &Scenario, out_dir: &Path) -> Result<RunSummary, ScenarioError> {
    let demand = TorqueDemand::Sinusoid {
        amplitude: s.torque(),
        frequency: s.doc.frequency_hz.expect("normalized"),
        bias: 0.0,
    };
    let rec = s.system().run(&demand, s.duration()).map_err(|e| sim_failure(e, out_dir))?;
    let file = save_record(&rec, out_dir)?;
    let mut m = tracking_metrics(&rec)?;
    m.insert("working_space_violations".into(), json!(rec.violation_count()));
    finish(s, out_dir, m, vec![file])
}

fn tracking_metrics(rec: &SimRecord) -> Result<BTreeMap<String, Value>, ScenarioError> {
    let rms = analysis::rms_error(
        rec,
        Channel::Torque,
        Reference::Channel(Channel::TorqueDemand),
        Window::default(),
    )?;
    let half = rec.len() / 2;
    let max_err = rec.samples()[half..]
        .iter()
        .map(|x| (x.tau_e_nm - x.tau_d_nm).abs())
        .fold(0.0, f64::max);
    Ok(BTreeMap::from([
        ("rms_torque_error_nm".to_string(), num(rms)),
        ("max_torque_error_nm".to_string(), num(max_err)),
    ]))
}

fn run_step(s: &Scenario, out_dir: &Path) -> Result<RunSummary, ScenarioError> {
    let step_time = s.doc.step_time_s.expect("normalized");
    let demand = TorqueDemand::Step {
        time: step_time,
        initial: 0.0,
        target: s.torque(),
    };
    let rec = s.system().run(&demand, s.duration()).map_err(|e| sim_failure(e, out_dir))?;
    let file = save_record(&rec, out_dir)?;
    let sm = step_metrics(&rec, step_time, 0.0, s.torque())?;
    let m = BTreeMap::from([
        ("rise_time_s".to_string(), num(sm.rise_time)),
        ("overshoot_pct".to_string(), num(sm.overshoot_pct)),
        ("settling_time_s".to_string(), opt(sm.settling_time)),
        ("steady_state_error_nm".to_string(), num(sm.steady_state_error)),
        ("working_space_violations".to_string(), json!(rec.violation_count())),
    ]);
    finish(s, out_dir, m, vec![file])
}

/// Time after `release` from which the torque stays within the recovery
/// band around `target` until the end of the record.
pub fn recovery_time(rec: &SimRecord, release: f64, target: f64) -> Option<f64> {
    let band = RECOVERY_BAND * target.abs();
    let after: Vec<_> = rec.samples().iter().filter(|x| x.t_s >= release).collect();
    let times: Vec<f64> = after.iter().map(|x| x.t_s).collect();
    let torque: Vec<f64> = after.iter().map(|x| x.tau_e_nm).collect();
    analysis::settling_time(&times, &torque, target, band).map(|t| t - release)
}

/// Holds the commanded torque against a locked output, releases it at the
/// load's release time and reports how long the torque takes to return to
/// within 5 % of the command.
pub fn collision_scenario(s: &Scenario, out_dir: &Path) -> Result<RunSummary, ScenarioError> {
    if s.kind() != ScenarioKind::Collision {
        return Err(ScenarioError::Invalid(vec![format!(
            "kind must be collision (got {})",
            s.kind().as_str()
        )]));
    }
    fs::create_dir_all(out_dir)?;
    let rec = s
        .system()
        .run(&TorqueDemand::Constant(s.torque()), s.duration())
        .map_err(|e| sim_failure(e, out_dir))?;
    let file = save_record(&rec, out_dir)?;
    let release = match s.load {
        LoadModel::Released { release_time, .. } => Some(release_time).filter(|&t| t < s.duration()),
        _ => None,
    };
    let torque = rec.channel(Channel::Torque);
    let mut m = BTreeMap::new();
    match release {
        Some(t_rel) => {
            m.insert("release_time_s".into(), num(t_rel));
            m.insert("recovery_time_s".into(), opt(recovery_time(&rec, t_rel, s.torque())));
        }
        None => {
            m.insert("release_time_s".into(), Value::Null);
            m.insert("recovery_time_s".into(), num(0.0));
        }
    }
    let after: Vec<f64> = rec
        .samples()
        .iter()
        .filter(|x| release.is_none_or(|t| x.t_s >= t))
        .map(|x| x.tau_e_nm)
        .collect();
    m.insert("peak_torque_nm".into(), num(after.iter().cloned().fold(f64::NEG_INFINITY, f64::max)));
    m.insert("min_torque_nm".into(), num(after.iter().cloned().fold(f64::INFINITY, f64::min)));
    m.insert(
        "final_torque_error_nm".into(),
        num((torque.last().copied().unwrap_or(0.0) - s.torque()).abs()),
    );
    finish(s, out_dir, m, vec![file])
}

fn run_phri(s: &Scenario, out_dir: &Path) -> Result<RunSummary, ScenarioError> {
    let system = s.system();
    let rec = match s.kind() {
        ScenarioKind::PhriPassive => system.run_unpowered(s.duration()),
        _ => system.run(&TorqueDemand::Constant(s.torque()), s.duration()),
    }
    .map_err(|e| sim_failure(e, out_dir))?;
    let file = save_record(&rec, out_dir)?;
    let metrics = phri_metrics(&rec, &s.cfg)?;
    finish(s, out_dir, metrics, vec![file])
}

/// RMS torque error against the demand and RMS deflection error against
/// the deflection that would deliver the demand, both over the default window.
pub fn phri_metrics(rec: &SimRecord, cfg: &RseeConfig) -> Result<BTreeMap<String, Value>, ScenarioError> {
    let tau = analysis::rms_error(
        rec,
        Channel::Torque,
        Reference::Channel(Channel::TorqueDemand),
        Window::default(),
    )?;
    let start = rec.len() - rec.len() / 2;
    let mut errs = Vec::with_capacity(rec.len() - start);
    for x in &rec.samples()[start..] {
        let target = cfg
            .deflection_for_torque(x.tau_d_nm)
            .map_err(|e| ScenarioError::Analysis(e.to_string()))?;
        errs.push(x.beta_rad - target);
    }
    let defl = analysis::rms(&errs);
    let mut m = BTreeMap::new();
    m.insert("rms_torque_error_nm".into(), num(tau));
    m.insert("rms_deflection_error_rad".into(), num(defl));
    m.insert("rms_deflection_error_deg".into(), num(defl.to_degrees()));
    m.insert("working_space_violations".into(), json!(rec.violation_count()));
    Ok(m)
}

fn run_bode(s: &Scenario, out_dir: &Path) -> Result<RunSummary, ScenarioError> {
    let b = s.doc.bode.clone().expect("normalized");
    let harness = BodeHarness {
        system: s.system(),
        mode: if s.kind() == ScenarioKind::BodeOpen {
            LoopMode::Open
        } else {
            LoopMode::Closed
        },
    };
    let settings = EstimatorSettings {
        periods: b.periods,
        discard_periods: b.discard_periods,
        min_discard_s: b.min_discard_s,
        dc: DcReference::FirstPoint,
    };
    let fr = estimate_frequency_response(&harness, s.torque(), &b.grid(), &settings)?;
    const RESPONSE_FILE: &str = "response.csv";
    fr.write_csv(fs::File::create(out_dir.join(RESPONSE_FILE))?)?;
    let flagged = fr.flags.iter().filter(|f| f.is_some()).count();
    let m = BTreeMap::from([
        ("bandwidth_hz".to_string(), opt(fr.bandwidth_hz())),
        ("dc_gain".to_string(), num(fr.dc_gain)),
        ("flagged_points".to_string(), json!(flagged)),
        ("amplitude_nm".to_string(), num(s.torque())),
    ]);
    finish(s, out_dir, m, vec![RESPONSE_FILE.to_string()])
}

fn run_sweep(s: &Scenario, out_dir: &Path) -> Result<RunSummary, ScenarioError> {
    let sw = s.doc.sweep.expect("normalized");
    let (lo, hi) = (sw.min.expect("normalized"), sw.max.expect("normalized"));
    let betas = Grid::deflections(&s.cfg, sw.deflection_points);
    let points = |n: usize| if lo == hi { 1 } else { n };
    let map = match sw.axis {
        SweepAxis::Pretension => sweep_pretension(&s.cfg, Grid::new(lo * 1e-3, hi * 1e-3, points(sw.axis_points)), betas),
        SweepAxis::Offset => sweep_offset(
            &s.cfg,
            Grid::new(lo.to_radians(), hi.to_radians(), points(sw.axis_points)),
            betas,
        ),
    }
    .map_err(|e| ScenarioError::Analysis(e.to_string()))?;
    let bounds = map
        .performance_bounds()
        .map_err(|e| ScenarioError::Analysis(e.to_string()))?;
    const MAP_FILE: &str = "map.csv";
    map.write_csv(fs::File::create(out_dir.join(MAP_FILE))?)?;
    let m = BTreeMap::from([
        ("k_min_nm_per_rad".to_string(), num(bounds.k_min)),
        ("k_max_nm_per_rad".to_string(), num(bounds.k_max)),
        ("tau_max_nm".to_string(), num(bounds.tau_max)),
        ("beta_at_tau_max_rad".to_string(), num(bounds.beta_at_tau_max)),
        ("axis_at_tau_max".to_string(), num(bounds.axis_at_tau_max)),
        ("feasible_cells".to_string(), json!(bounds.feasible_cells)),
    ]);
    finish(s, out_dir, m, vec![MAP_FILE.to_string()])
}

fn write_profile(path: &Path, header: [&str; 3], rows: impl Iterator<Item = [f64; 3]>) -> Result<(), ScenarioError> {
    let mut wr = csv::Writer::from_path(path)?;
    wr.write_record(header)?;
    for r in rows {
        wr.write_record(r.iter().map(|v| v.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

/// Noisy torque-deflection samples of `cfg` over its feasible range.
pub fn synthetic_samples(cfg: &RseeConfig, points: usize, noise: f64, seed: u64) -> Vec<(f64, f64)> {
    let half = cfg.feasible_half_range();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = (noise > 0.0).then(|| Normal::new(0.0, noise).expect("finite noise level"));
    Grid::new(-half, half, points)
        .values()
        .into_iter()
        .map(|b| {
            let e = normal.as_ref().map_or(0.0, |n| n.sample(&mut rng));
            (b, cfg.output_torque(b) + e)
        })
        .collect()
}

fn run_quasi_static(s: &Scenario, out_dir: &Path) -> Result<RunSummary, ScenarioError> {
    let q = s.doc.quasi_static.clone().expect("normalized");
    let samples = synthetic_samples(&s.cfg, q.points, q.noise_nm, s.doc.seed);
    let report = fit_quasi_static(&samples, &s.cfg, &q.free)?;
    const SAMPLES_FILE: &str = "samples.csv";
    write_profile(
        &out_dir.join(SAMPLES_FILE),
        ["beta_rad", "tau_measured_Nm", "tau_fit_Nm"],
        samples.iter().map(|&(b, t)| [b, t, report.config.output_torque(b)]),
    )?;
    let peak = samples.iter().map(|(_, t)| t.abs()).fold(0.0, f64::max);
    let mut m = BTreeMap::from([
        ("residual_rms_nm".to_string(), num(report.residual_rms)),
        ("residual_max_nm".to_string(), num(report.residual_max)),
        ("residual_rms_pct_of_peak".to_string(), num(100.0 * report.residual_rms / peak)),
        ("samples".to_string(), json!(report.samples)),
        ("iterations".to_string(), json!(report.iterations)),
    ]);
    for (p, v) in &report.fitted {
        let (key, value) = match p {
            FitParam::SpringStiffness => ("fitted_stiffness_n_per_m", *v),
            FitParam::Pretension => ("fitted_pretension_mm", v * 1e3),
            FitParam::Offset => ("fitted_offset_deg", v.to_degrees()),
        };
        m.insert(key.to_string(), num(value));
    }
    finish(s, out_dir, m, vec![SAMPLES_FILE.to_string()])
}

fn run_design(s: &Scenario, out_dir: &Path) -> Result<RunSummary, ScenarioError> {
    let d = s.doc.design.clone().expect("normalized");
    let samples: Vec<(f64, f64)> = if d.samples.is_empty() {
        synthetic_samples(&s.cfg, 31, 0.0, 0)
    } else {
        d.samples.iter().map(|r| (r[0].to_radians(), r[1])).collect()
    };
    let weights = if d.weights.is_empty() {
        vec![1.0; samples.len()]
    } else {
        d.weights.clone()
    };
    let target = DesignTarget {
        samples: samples.clone(),
        weights,
        bounds: SearchBox {
            min_pairs: d.min_pairs,
            max_pairs: d.max_pairs,
            pretension: (d.pretension_mm[0] * 1e-3, d.pretension_mm[1] * 1e-3),
            offset: (d.offset_deg[0].to_radians(), d.offset_deg[1].to_radians()),
        },
        base: s.cfg,
    };
    let (cand, feasible) = match search_configuration(&target) {
        Ok(c) => (c, true),
        Err(DesignError::NoFeasibleConfiguration(c)) => (*c, false),
        Err(e @ DesignError::InvalidTarget(_)) => return Err(ScenarioError::Invalid(vec![format!("design: {e}")])),
    };
    const PROFILE_FILE: &str = "profile.csv";
    write_profile(
        &out_dir.join(PROFILE_FILE),
        ["beta_rad", "tau_target_Nm", "tau_found_Nm"],
        samples.iter().map(|&(b, t)| [b, t, cand.config.output_torque(b)]),
    )?;
    let m = BTreeMap::from([
        ("residual_rms_nm".to_string(), num(cand.residual)),
        ("feasible".to_string(), json!(feasible)),
        ("pair_count".to_string(), json!(cand.config.pair_count)),
        ("pretension_mm".to_string(), num(cand.config.pretension * 1e3)),
        ("offset_deg".to_string(), num(cand.config.offset_a.to_degrees())),
    ]);
    finish(s, out_dir, m, vec![PROFILE_FILE.to_string()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub name: String,
    pub kind: ScenarioKind,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
}

/// One bar of the interaction comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhriRow {
    pub mode: ScenarioKind,
    pub name: String,
    pub offset_deg: f64,
    pub rms_torque_error_nm: f64,
    pub rms_deflection_error_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub entries: Vec<BatchEntry>,
    pub phri_table: Vec<PhriRow>,
    pub failures: usize,
}

pub const BATCH_REPORT_FILE: &str = "batch.json";

/// Directory-safe name of the `index`-th scenario.
pub fn entry_name(index: usize, s: &Scenario) -> String {
    let raw = s
        .doc
        .name
        .clone()
        .unwrap_or_else(|| format!("{index:02}_{}", s.kind().as_str()));
    raw.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Runs every scenario in its own subdirectory of `out_dir`, in parallel.
/// Failures are recorded per entry and do not stop the batch.
pub fn batch(scenarios: &[Scenario], out_dir: &Path) -> Result<BatchReport, ScenarioError> {
    if scenarios.is_empty() {
        return Err(ScenarioError::Invalid(vec!["batch needs at least one scenario".into()]));
    }
    fs::create_dir_all(out_dir)?;
    let mut names: Vec<String> = scenarios.iter().enumerate().map(|(i, s)| entry_name(i, s)).collect();
    // keep subdirectories disjoint when documents share a name
    for i in 0..names.len() {
        if names[..i].contains(&names[i]) {
            names[i] = format!("{:02}_{}", i, names[i]);
        }
    }
    let entries: Vec<BatchEntry> = scenarios
        .par_iter()
        .zip(names.par_iter())
        .map(|(s, name)| {
            let result = run(s, &out_dir.join(name));
            let (summary, error) = match result {
                Ok(sum) => (Some(sum), None),
                Err(e) => (None, Some(e.to_string())),
            };
            BatchEntry {
                name: name.clone(),
                kind: s.kind(),
                summary,
                error,
            }
        })
        .collect();
    let phri_table = entries
        .iter()
        .filter(|e| e.kind.is_phri())
        .filter_map(|e| {
            let sum = e.summary.as_ref()?;
            Some(PhriRow {
                mode: e.kind,
                name: e.name.clone(),
                offset_deg: sum.scenario.config.offset_a_deg,
                rms_torque_error_nm: sum.metric("rms_torque_error_nm")?,
                rms_deflection_error_deg: sum.metric("rms_deflection_error_deg")?,
            })
        })
        .collect();
    let failures = entries.iter().filter(|e| e.error.is_some()).count();
    let report = BatchReport {
        entries,
        phri_table,
        failures,
    };
    fs::write(out_dir.join(BATCH_REPORT_FILE), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

/// Reads every `*.json` scenario in `dir`, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<Scenario>, ScenarioError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            load_scenario(p).map_err(|e| match e {
                ScenarioError::Parse(m) => ScenarioError::Parse(format!("{}: {m}", p.display())),
                ScenarioError::Invalid(v) => {
                    ScenarioError::Invalid(v.into_iter().map(|m| format!("{}: {m}", p.display())).collect())
                }
                other => other,
            })
        })
        .collect()
}

/// The three interaction modes for the high-nonlinearity (φ = 0) and the
/// linear (φ = 20°) configurations.
pub fn phri_battery() -> Vec<Scenario> {
    let mut out = Vec::new();
    for kind in [
        ScenarioKind::PhriPassive,
        ScenarioKind::PhriTransparent,
        ScenarioKind::PhriAssistive,
    ] {
        for offset in [0.0, 20.0] {
            let mut doc = ScenarioDoc::of_kind(kind);
            doc.name = Some(format!("{}_phi{}", kind.as_str(), offset as i32));
            doc.config = RseeConfig::with_opposed_offset(f64::to_radians(offset)).into();
            out.push(Scenario::from_doc(&doc).expect("battery scenarios are valid"));
        }
    }
    out
}

/// Default-friction override helper used by callers that want the bench
/// friction on an otherwise frictionless kind.
pub fn with_bench_friction(mut doc: ScenarioDoc) -> ScenarioDoc {
    let mut act = doc.actuator.unwrap_or_else(|| doc.kind.default_actuator());
    act.friction = FrictionModel::bench().into();
    doc.actuator = Some(act);
    doc
}

/// Frictionless drive regardless of kind.
pub fn without_friction(mut doc: ScenarioDoc) -> ScenarioDoc {
    let mut act = doc.actuator.unwrap_or_else(|| doc.kind.default_actuator());
    act.friction = FrictionDoc {
        kind: FrictionKind::None,
        ..FrictionDoc::default()
    };
    doc.actuator = Some(act);
    doc
}

/// Offset of the three nonlinearity presets: high (0°), medium (10°), low (20°).
pub const NONLINEARITY_PRESETS_DEG: [f64; 3] = [0.0, 10.0, 20.0];

/// Scenario of `kind` on the opposed-offset configuration `offset_deg`.
pub fn preset(kind: ScenarioKind, offset_deg: f64) -> ScenarioDoc {
    ScenarioDoc {
        kind,
        config: RseeConfig::with_opposed_offset(offset_deg.to_radians()).into(),
        ..ScenarioDoc::default()
    }
}

/// Zero-amplitude sine used to check that an idle run stays at rest.
pub fn still_handle() -> LoadDoc {
    LoadDoc::PrescribedSine(SineDoc {
        amplitude_deg: 0.0,
        ..SineDoc::default()
    })
}

/// Locked load at zero angle.
pub fn locked() -> LoadDoc {
    LoadDoc::Locked(LockedDoc { angle_deg: 0.0 })
}

/// Release time far past the end of a run.
pub fn never_released(duration: f64) -> LoadDoc {
    match ScenarioKind::Collision.default_load() {
        LoadDoc::Released(mut r) => {
            r.release_time_s = duration * 10.0 + 1.0;
            LoadDoc::Released(r)
        }
        other => other,
    }
}
