//! JSON documents with unit-suffixed keys and their conversion to the SI
//! types used internally. Every document fills omitted fields with the
//! prototype defaults and rejects unknown keys.

use serde::{Deserialize, Serialize};

use crate::controller::ControllerGains;
use crate::model::{RseeConfig, SpringSpec};
use crate::plant::{ActuatorParams, FrictionModel, HardStop, InertialLoad, LoadModel, LoadStop, Trajectory};

fn mm(v: f64) -> f64 {
    v / 1e3
}

fn to_mm(v: f64) -> f64 {
    v * 1e3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpringDoc {
    pub stiffness_n_per_m: f64,
    pub rest_length_mm: f64,
    pub max_extension_mm: f64,
}

impl Default for SpringDoc {
    fn default() -> Self {
        SpringSpec::default().into()
    }
}

impl From<SpringDoc> for SpringSpec {
    fn from(d: SpringDoc) -> Self {
        Self {
            stiffness: d.stiffness_n_per_m,
            rest_length: mm(d.rest_length_mm),
            max_extension: mm(d.max_extension_mm),
        }
    }
}

impl From<SpringSpec> for SpringDoc {
    fn from(s: SpringSpec) -> Self {
        Self {
            stiffness_n_per_m: s.stiffness,
            rest_length_mm: to_mm(s.rest_length),
            max_extension_mm: to_mm(s.max_extension),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RseeConfigDoc {
    pub pair_count: u32,
    pub pretension_mm: f64,
    pub offset_a_deg: f64,
    pub offset_b_deg: f64,
    pub inner_radius_mm: f64,
    pub deflection_limit_deg: f64,
    pub spring: SpringDoc,
}

impl Default for RseeConfigDoc {
    fn default() -> Self {
        RseeConfig::default().into()
    }
}

impl From<RseeConfigDoc> for RseeConfig {
    fn from(d: RseeConfigDoc) -> Self {
        Self {
            pair_count: d.pair_count,
            pretension: mm(d.pretension_mm),
            offset_a: d.offset_a_deg.to_radians(),
            offset_b: d.offset_b_deg.to_radians(),
            inner_radius: mm(d.inner_radius_mm),
            deflection_limit: d.deflection_limit_deg.to_radians(),
            spring: d.spring.into(),
        }
    }
}

impl From<RseeConfig> for RseeConfigDoc {
    fn from(c: RseeConfig) -> Self {
        Self {
            pair_count: c.pair_count,
            pretension_mm: to_mm(c.pretension),
            offset_a_deg: c.offset_a.to_degrees(),
            offset_b_deg: c.offset_b.to_degrees(),
            inner_radius_mm: to_mm(c.inner_radius),
            deflection_limit_deg: c.deflection_limit.to_degrees(),
            spring: c.spring.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrictionKind {
    #[default]
    None,
    Viscous,
    ViscousCoulomb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrictionDoc {
    pub kind: FrictionKind,
    pub viscous_nm_s_per_rad: f64,
    pub coulomb_nm: f64,
    pub smoothing_rad_s: f64,
}

impl Default for FrictionDoc {
    fn default() -> Self {
        Self {
            kind: FrictionKind::None,
            viscous_nm_s_per_rad: 0.0,
            coulomb_nm: 0.0,
            smoothing_rad_s: 0.02,
        }
    }
}

impl From<FrictionDoc> for FrictionModel {
    fn from(d: FrictionDoc) -> Self {
        match d.kind {
            FrictionKind::None => FrictionModel::None,
            FrictionKind::Viscous => FrictionModel::Viscous {
                viscous: d.viscous_nm_s_per_rad,
            },
            FrictionKind::ViscousCoulomb => FrictionModel::ViscousCoulomb {
                viscous: d.viscous_nm_s_per_rad,
                coulomb: d.coulomb_nm,
                smoothing_velocity: d.smoothing_rad_s,
            },
        }
    }
}

impl From<FrictionModel> for FrictionDoc {
    fn from(f: FrictionModel) -> Self {
        let base = FrictionDoc::default();
        match f {
            FrictionModel::None => base,
            FrictionModel::Viscous { viscous } => Self {
                kind: FrictionKind::Viscous,
                viscous_nm_s_per_rad: viscous,
                ..base
            },
            FrictionModel::ViscousCoulomb {
                viscous,
                coulomb,
                smoothing_velocity,
            } => Self {
                kind: FrictionKind::ViscousCoulomb,
                viscous_nm_s_per_rad: viscous,
                coulomb_nm: coulomb,
                smoothing_rad_s: smoothing_velocity,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorDoc {
    pub motor_inertia_kg_m2: f64,
    pub motor_damping_nm_s_per_rad: f64,
    pub torque_constant_nm_per_a: f64,
    pub structural_inertia_kg_m2: f64,
    pub ratio: f64,
    pub current_limit_a: f64,
    pub hard_stop_stiffness_nm_per_rad: f64,
    pub hard_stop_damping_nm_s_per_rad: f64,
    pub friction: FrictionDoc,
}

impl Default for ActuatorDoc {
    fn default() -> Self {
        ActuatorParams::default().into()
    }
}

impl From<ActuatorDoc> for ActuatorParams {
    fn from(d: ActuatorDoc) -> Self {
        Self {
            motor_inertia: d.motor_inertia_kg_m2,
            motor_damping: d.motor_damping_nm_s_per_rad,
            torque_constant: d.torque_constant_nm_per_a,
            structural_inertia: d.structural_inertia_kg_m2,
            ratio: d.ratio,
            current_limit: d.current_limit_a,
            friction: d.friction.into(),
            hard_stop: HardStop {
                stiffness: d.hard_stop_stiffness_nm_per_rad,
                damping: d.hard_stop_damping_nm_s_per_rad,
            },
        }
    }
}

impl From<ActuatorParams> for ActuatorDoc {
    fn from(p: ActuatorParams) -> Self {
        Self {
            motor_inertia_kg_m2: p.motor_inertia,
            motor_damping_nm_s_per_rad: p.motor_damping,
            torque_constant_nm_per_a: p.torque_constant,
            structural_inertia_kg_m2: p.structural_inertia,
            ratio: p.ratio,
            current_limit_a: p.current_limit,
            hard_stop_stiffness_nm_per_rad: p.hard_stop.stiffness,
            hard_stop_damping_nm_s_per_rad: p.hard_stop.damping,
            friction: p.friction.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainsDoc {
    pub torque_kp: f64,
    pub torque_ki: f64,
    pub velocity_kp: f64,
    pub velocity_ki: f64,
    pub filter_cutoff_rad_s: f64,
    pub sample_period_ms: f64,
    pub current_limit_a: f64,
    pub velocity_limit_rad_s: f64,
}

impl Default for GainsDoc {
    fn default() -> Self {
        ControllerGains::default().into()
    }
}

impl From<GainsDoc> for ControllerGains {
    fn from(d: GainsDoc) -> Self {
        Self {
            torque_kp: d.torque_kp,
            torque_ki: d.torque_ki,
            velocity_kp: d.velocity_kp,
            velocity_ki: d.velocity_ki,
            filter_cutoff: d.filter_cutoff_rad_s,
            sample_period: mm(d.sample_period_ms),
            current_limit: d.current_limit_a,
            velocity_limit: d.velocity_limit_rad_s,
        }
    }
}

impl From<ControllerGains> for GainsDoc {
    fn from(g: ControllerGains) -> Self {
        Self {
            torque_kp: g.torque_kp,
            torque_ki: g.torque_ki,
            velocity_kp: g.velocity_kp,
            velocity_ki: g.velocity_ki,
            filter_cutoff_rad_s: g.filter_cutoff,
            sample_period_ms: to_mm(g.sample_period),
            current_limit_a: g.current_limit,
            velocity_limit_rad_s: g.velocity_limit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadStopDoc {
    pub lower_deg: f64,
    pub upper_deg: f64,
    pub stiffness_nm_per_rad: f64,
    pub damping_nm_s_per_rad: f64,
}

impl Default for LoadStopDoc {
    fn default() -> Self {
        Self {
            lower_deg: -90.0,
            upper_deg: 90.0,
            stiffness_nm_per_rad: 500.0,
            damping_nm_s_per_rad: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InertialDoc {
    pub inertia_kg_m2: f64,
    pub damping_nm_s_per_rad: f64,
    pub external_bias_nm: f64,
    pub external_amplitude_nm: f64,
    pub external_frequency_hz: f64,
    pub stop: Option<LoadStopDoc>,
}

impl Default for InertialDoc {
    fn default() -> Self {
        Self {
            inertia_kg_m2: 0.01,
            damping_nm_s_per_rad: 0.05,
            external_bias_nm: 0.0,
            external_amplitude_nm: 0.0,
            external_frequency_hz: 0.0,
            stop: None,
        }
    }
}

impl From<InertialDoc> for InertialLoad {
    fn from(d: InertialDoc) -> Self {
        Self {
            inertia: d.inertia_kg_m2,
            damping: d.damping_nm_s_per_rad,
            external_bias: d.external_bias_nm,
            external_amplitude: d.external_amplitude_nm,
            external_frequency: d.external_frequency_hz,
            stop: d.stop.map(|s| LoadStop {
                lower: s.lower_deg.to_radians(),
                upper: s.upper_deg.to_radians(),
                stiffness: s.stiffness_nm_per_rad,
                damping: s.damping_nm_s_per_rad,
            }),
        }
    }
}

impl From<InertialLoad> for InertialDoc {
    fn from(l: InertialLoad) -> Self {
        Self {
            inertia_kg_m2: l.inertia,
            damping_nm_s_per_rad: l.damping,
            external_bias_nm: l.external_bias,
            external_amplitude_nm: l.external_amplitude,
            external_frequency_hz: l.external_frequency,
            stop: l.stop.map(|s| LoadStopDoc {
                lower_deg: s.lower.to_degrees(),
                upper_deg: s.upper.to_degrees(),
                stiffness_nm_per_rad: s.stiffness,
                damping_nm_s_per_rad: s.damping,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LockedDoc {
    pub angle_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SineDoc {
    pub amplitude_deg: f64,
    pub frequency_hz: f64,
    pub phase_deg: f64,
    pub offset_deg: f64,
}

impl Default for SineDoc {
    fn default() -> Self {
        Self {
            amplitude_deg: 30.0,
            frequency_hz: 0.2,
            phase_deg: 0.0,
            offset_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableDoc {
    /// Rows of `[t_s, angle_deg]`.
    pub rows: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReleasedDoc {
    pub angle_deg: f64,
    pub release_time_s: f64,
    pub load: InertialDoc,
}

impl Default for ReleasedDoc {
    fn default() -> Self {
        Self {
            angle_deg: 0.0,
            release_time_s: 0.5,
            load: InertialDoc::default(),
        }
    }
}

/// Output-side load, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoadDoc {
    Locked(LockedDoc),
    PrescribedSine(SineDoc),
    PrescribedTable(TableDoc),
    Inertial(InertialDoc),
    Released(ReleasedDoc),
}

impl Default for LoadDoc {
    fn default() -> Self {
        LoadDoc::Locked(LockedDoc::default())
    }
}

impl From<LoadDoc> for LoadModel {
    fn from(d: LoadDoc) -> Self {
        match d {
            LoadDoc::Locked(l) => LoadModel::Locked {
                angle: l.angle_deg.to_radians(),
            },
            LoadDoc::PrescribedSine(s) => LoadModel::Prescribed(Trajectory::Sinusoid {
                amplitude: s.amplitude_deg.to_radians(),
                frequency: s.frequency_hz,
                phase: s.phase_deg.to_radians(),
                offset: s.offset_deg.to_radians(),
            }),
            LoadDoc::PrescribedTable(t) => LoadModel::Prescribed(Trajectory::Table {
                times: t.rows.iter().map(|r| r[0]).collect(),
                angles: t.rows.iter().map(|r| r[1].to_radians()).collect(),
            }),
            LoadDoc::Inertial(i) => LoadModel::Inertial(i.into()),
            LoadDoc::Released(r) => LoadModel::Released {
                hold_angle: r.angle_deg.to_radians(),
                release_time: r.release_time_s,
                load: r.load.into(),
            },
        }
    }
}

impl From<LoadModel> for LoadDoc {
    fn from(m: LoadModel) -> Self {
        match m {
            LoadModel::Locked { angle } => LoadDoc::Locked(LockedDoc {
                angle_deg: angle.to_degrees(),
            }),
            LoadModel::Prescribed(Trajectory::Sinusoid {
                amplitude,
                frequency,
                phase,
                offset,
            }) => LoadDoc::PrescribedSine(SineDoc {
                amplitude_deg: amplitude.to_degrees(),
                frequency_hz: frequency,
                phase_deg: phase.to_degrees(),
                offset_deg: offset.to_degrees(),
            }),
            LoadModel::Prescribed(Trajectory::Table { times, angles }) => {
                LoadDoc::PrescribedTable(TableDoc {
                    rows: times
                        .iter()
                        .zip(&angles)
                        .map(|(&t, &a)| [t, a.to_degrees()])
                        .collect(),
                })
            }
            LoadModel::Inertial(l) => LoadDoc::Inertial(l.into()),
            LoadModel::Released {
                hold_angle,
                release_time,
                load,
            } => LoadDoc::Released(ReleasedDoc {
                angle_deg: hold_angle.to_degrees(),
                release_time_s: release_time,
                load: load.into(),
            }),
        }
    }
}
