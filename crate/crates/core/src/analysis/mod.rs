//! Metrics on simulation records: frequency responses, step metrics, RMS
//! errors and quasi-static torque-deflection fits.

mod fit;
mod frequency;
mod metrics;

pub use fit::{fit_quasi_static, FitParam, FitReport};
pub use frequency::{
    estimate_frequency_response, fit_sinusoid, DcReference, EstimatorSettings, FrequencyResponse,
    PointFlag, SineExperiment, SineRun,
};
pub use metrics::{
    rms, rms_error, settling_time, step_metrics, step_metrics_from, Reference, StepMetrics, Window,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("parameters are not identifiable from the samples: {0}")]
    NotIdentifiable(String),
    #[error("too few samples: {got} given, {needed} needed")]
    TooFewSamples { got: usize, needed: usize },
}
