mod common;

use common::*;
use rsee_core::analysis::{rms_error, step_metrics, Reference, Window};
use rsee_core::plant::{integrate, mechanical_energy, Command, InertialLoad, PlantState, Timing};
use rsee_core::{ActuatorParams, Channel, ClosedLoop, ControllerGains, LoadModel, RseeConfig, TorqueDemand};

fn free_swing(theta0: f64, plant_step: f64, duration: f64) -> (rsee_core::SimRecord, RseeConfig, ActuatorParams, LoadModel) {
    let cfg = RseeConfig::default();
    let params = ActuatorParams::default();
    let load = LoadModel::Inertial(InertialLoad::free(0.01, 0.0));
    let state0 = PlantState {
        theta: theta0,
        ..PlantState::default()
    };
    let timing = Timing {
        plant_step,
        control_period: 1e-3,
    };
    let rec = integrate(state0, |_| Command::default(), &cfg, &params, &load, timing, duration).unwrap();
    (rec, cfg, params, load)
}

fn state_of(s: &rsee_core::SimSample) -> PlantState {
    PlantState {
        theta: s.theta_rad,
        theta_dot: s.theta_dot_rad_s,
        q: s.q_rad,
        q_dot: s.q_dot_rad_s,
        t: s.t_s,
    }
}

#[test]
fn conservative_plant_keeps_its_energy() {
    let (rec, cfg, params, load) = free_swing(0.2, 1e-4, 10.0);
    let e0 = mechanical_energy(&state_of(&rec.samples()[0]), &cfg, &params, &load);
    let drift = rec
        .samples()
        .iter()
        .map(|s| (mechanical_energy(&state_of(s), &cfg, &params, &load) - e0).abs() / e0)
        .fold(0.0, f64::max);
    assert!(drift < 1e-6, "relative drift {drift}");
    assert!(rec.samples().iter().any(|s| s.q_rad.abs() > 1e-3), "load must move");
}

#[test]
fn step_refinement_converges_at_fourth_order() {
    let finals = |theta0: f64| {
        [1e-4, 5e-5, 2.5e-5].map(|h| {
            let (rec, ..) = free_swing(theta0, h, 10.0);
            let last = *rec.last().unwrap();
            [last.theta_rad, last.q_rad]
        })
    };
    let [c, h, q] = finals(0.2);
    for i in 0..2 {
        let order = ((c[i] - h[i]) / (h[i] - q[i])).log2();
        assert!((3.5..5.0).contains(&order), "observed order {order}");
    }
    let [c, h, _] = finals(0.1);
    for i in 0..2 {
        assert!((c[i] - h[i]).abs() < 1e-8, "{:e}", c[i] - h[i]);
    }
}

#[test]
fn constant_current_on_locked_load_balances_the_spring() {
    let cfg = RseeConfig::default();
    let params = ActuatorParams {
        motor_damping: 0.01,
        ..ActuatorParams::default()
    };
    let ten = 10f64.to_radians();
    let tau = vector_torque(&cfg, ten);
    let current = tau / (2.0 * 0.44);
    let rec = integrate(
        PlantState::default(),
        |_| Command::current(current, &params),
        &cfg,
        &params,
        &LoadModel::Locked { angle: 0.0 },
        Timing::default(),
        4.0,
    )
    .unwrap();
    let last = rec.last().unwrap();
    assert!((last.beta_rad - ten).abs() < 1e-6, "{}", last.beta_rad.to_degrees());
    assert!((last.tau_e_nm - tau).abs() < 1e-5);
    assert_eq!(last.q_rad, 0.0);
}

fn locked_loop(plant_step: f64) -> ClosedLoop {
    ClosedLoop {
        plant_step,
        ..ClosedLoop::new(
            RseeConfig::default(),
            ActuatorParams::default(),
            ControllerGains::default(),
            LoadModel::Locked { angle: 0.0 },
        )
    }
}

#[test]
fn torque_steps_settle_like_the_fine_step_reference() {
    for target in [5.0, 6.0] {
        let demand = TorqueDemand::Step {
            time: 0.1,
            initial: 0.0,
            target,
        };
        let nominal = locked_loop(1e-4).run(&demand, 1.2).unwrap();
        let reference = locked_loop(1e-5).run(&demand, 1.2).unwrap();
        let m = step_metrics(&nominal, 0.1, 0.0, target).unwrap();
        let r = step_metrics(&reference, 0.1, 0.0, target).unwrap();
        assert!(m.steady_state_error < 0.01 * target, "{m:?}");
        assert!(r.steady_state_error < 0.01 * target);
        assert!(m.settling_time.is_some_and(|t| t < 1.0));
        assert!((m.overshoot_pct - r.overshoot_pct).abs() < 0.5);
        assert!((m.rise_time - r.rise_time).abs() < 2e-3);
        let after = nominal.samples().iter().filter(|s| s.t_s >= 1.1);
        assert!(after.map(|s| (s.tau_e_nm - target).abs()).fold(0.0, f64::max) < 0.01 * target);
    }
}

#[test]
fn sinusoid_tracking_matches_the_fine_step_reference() {
    let demand = TorqueDemand::Sinusoid {
        amplitude: 10.0,
        frequency: 0.3,
        bias: 0.0,
    };
    let rms = |rec: &rsee_core::SimRecord| {
        rms_error(rec, Channel::Torque, Reference::Channel(Channel::TorqueDemand), Window::default()).unwrap()
    };
    let nominal = rms(&locked_loop(1e-4).run(&demand, 10.0).unwrap());
    let reference = rms(&locked_loop(1e-5).run(&demand, 10.0).unwrap());
    assert!(nominal <= 0.2, "{nominal}");
    assert!((nominal - reference).abs() < 0.01, "{nominal} vs {reference}");
}
