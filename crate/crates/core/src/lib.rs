//! Simulation and design toolkit for a rotary series elastic actuator whose
//! elastic element is a reconfigurable set of tension-spring pairs.
//!
//! - [`model`]: torque and stiffness of a spring configuration.
//! - [`workspace`] and [`design`]: configuration sweeps, performance bounds
//!   and design search.
//! - [`plant`], [`controller`], [`closed_loop`]: time-domain simulation of
//!   the actuator under cascade torque control.
//! - [`analysis`]: frequency responses, step and RMS metrics, fitting.
//! - [`scenario`]: declarative experiments producing CSV and JSON artifacts.

pub mod analysis;
pub mod closed_loop;
pub mod config;
pub mod controller;
pub mod design;
pub mod model;
pub mod plant;
pub mod record;
pub mod roots;
pub mod scenario;
pub mod workspace;

pub use closed_loop::{BodeHarness, ClosedLoop, LoopMode, Measurement, TorqueDemand};
pub use controller::{CascadeController, ControllerGains};
pub use model::{ModelError, RseeConfig, SpringSpec, StiffnessMode};
pub use plant::{ActuatorParams, FrictionModel, LoadModel, SimError};
pub use record::{Channel, SimRecord, SimSample};
