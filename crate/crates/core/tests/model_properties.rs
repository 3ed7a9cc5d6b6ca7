mod common;

use common::*;
use proptest::prelude::*;
use rsee_core::RseeConfig;

fn any_config() -> impl Strategy<Value = RseeConfig> {
    (0.5f64..6.5, -25.0f64..25.0, -25.0f64..25.0, 1u32..=6).prop_map(|(dl, a, b, m)| RseeConfig {
        pair_count: m,
        pretension: dl / 1e3,
        offset_a: a.to_radians(),
        offset_b: b.to_radians(),
        ..RseeConfig::default()
    })
}

fn any_opposed() -> impl Strategy<Value = RseeConfig> {
    (0.5f64..6.5, 0.0f64..25.0, 1u32..=6).prop_map(|(dl, phi, m)| opposed(dl, phi, m))
}

fn deflection() -> impl Strategy<Value = f64> {
    -0.548f64..0.548
}

proptest! {
    #[test]
    fn torque_matches_vector_mechanics(cfg in any_config(), beta in deflection()) {
        let oracle = vector_torque(&cfg, beta);
        prop_assert!((cfg.output_torque(beta) - oracle).abs() <= 1e-9 * oracle.abs().max(1.0));
    }

    #[test]
    fn stiffness_is_the_torque_slope(cfg in any_config(), beta in deflection()) {
        let fd = central_difference(|b| vector_torque(&cfg, b), beta, 1e-6);
        let k = cfg.equivalent_stiffness(beta);
        prop_assert!((k - fd).abs() <= 1e-6 * k.abs().max(1.0), "k = {k}, fd = {fd}");
    }

    #[test]
    fn energy_slope_is_the_torque(cfg in any_config(), beta in deflection()) {
        let fd = central_difference(|b| cfg.spring_potential_energy(b), beta, 1e-6);
        let tau = cfg.output_torque(beta);
        prop_assert!((tau - fd).abs() <= 1e-6 * tau.abs().max(1e-2), "tau = {tau}, fd = {fd}");
        prop_assert!((cfg.spring_potential_energy(beta) - hooke_energy(&cfg, beta)).abs() < 1e-12);
    }

    #[test]
    fn six_pairs_give_one_and_a_half_times_four(cfg in any_config(), beta in deflection()) {
        let six = RseeConfig { pair_count: 6, ..cfg };
        let four = RseeConfig { pair_count: 4, ..cfg };
        let tau4 = four.output_torque(beta);
        let k4 = four.equivalent_stiffness(beta);
        prop_assume!(tau4.abs() > 1e-12);
        prop_assert!((six.output_torque(beta) / tau4 - 1.5).abs() <= 4.0 * f64::EPSILON);
        prop_assert!((six.equivalent_stiffness(beta) / k4 - 1.5).abs() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn opposed_offsets_are_odd_in_deflection(cfg in any_opposed(), beta in deflection()) {
        let tau = cfg.output_torque(beta);
        prop_assert!((cfg.output_torque(-beta) + tau).abs() <= 1e-12 * tau.abs().max(1.0));
        let k = cfg.equivalent_stiffness(beta);
        prop_assert!((cfg.equivalent_stiffness(-beta) - k).abs() <= 1e-12 * k.abs().max(1.0));
    }

    #[test]
    fn feasibility_matches_spring_lengths(cfg in any_config(), beta in -0.7f64..0.7) {
        prop_assert_eq!(cfg.is_feasible(beta), feasible(&cfg, beta));
    }

    #[test]
    fn inverse_torque_round_trips(dl in 0.5f64..6.5, frac in -1.0f64..1.0) {
        let cfg = opposed(dl, 0.0, 6);
        let tau = frac * cfg.output_torque(cfg.deflection_limit);
        let beta = cfg.deflection_for_torque(tau).unwrap();
        prop_assert!((cfg.output_torque(beta) - tau).abs() < 1e-9);
    }
}

#[test]
fn spring_lengths_at_reference_points() {
    let cfg = RseeConfig::default();
    let [a, b] = spring_lengths(&cfg, 0.0);
    assert!((a - 29.0e-3).abs() < 1e-12 && (b - 29.0e-3).abs() < 1e-12);
    let s = cfg.spring_state(0.0);
    assert!((s.force_a - 10.0).abs() < 1e-9);

    let corner = cfg.spring_state(31.4f64.to_radians());
    let [la, _] = spring_lengths(&cfg, 31.4f64.to_radians());
    assert!((corner.length_a - la).abs() < 1e-12);
    assert!((la - 35.0e-3).abs() < 0.1e-3);
    assert!((corner.force_a - 130.0).abs() < 2.0);

    let off = opposed(0.5, 20.0, 6).spring_state(0.0);
    assert!((off.length_a - 31.6e-3).abs() < 0.05e-3);
    assert_eq!(off.length_a, off.length_b);
}

#[test]
fn torque_and_stiffness_at_reference_points() {
    let cfg = RseeConfig::default();
    let ten = 10f64.to_radians();
    let tau10 = vector_torque(&cfg, ten);
    assert!((cfg.output_torque(ten) - tau10).abs() < 1e-12);
    assert!((tau10 - 2.17).abs() < 0.01, "{tau10}");
    let back = cfg.deflection_for_torque(tau10).unwrap();
    assert!((back - ten).abs() < 1e-9);

    let linear = opposed(0.5, 20.0, 6);
    let fd = central_difference(|b| vector_torque(&linear, b), 0.0, 1e-6);
    assert!(rel_err(linear.equivalent_stiffness(0.0), fd) < 1e-6);
    assert!((fd - 72.6).abs() < 0.1, "{fd}");
}

#[test]
fn rest_energy_is_hooke_energy_of_the_pretension() {
    let e = RseeConfig::default().spring_potential_energy(0.0);
    assert!((e - 6.0 * 10000.0 * 0.0005f64.powi(2) * 2.0).abs() < 1e-15);
    let cfg = RseeConfig::default();
    let b = 15f64.to_radians();
    let fd = central_difference(|x| cfg.spring_potential_energy(x), b, 1e-6);
    assert!(rel_err(fd, cfg.output_torque(b)) < 1e-6);
}

#[test]
fn outer_radius_sums_the_lengths() {
    for (dl, r2) in [(0.0, 53.0e-3), (0.5, 53.5e-3), (2.0, 55.0e-3)] {
        let cfg = RseeConfig {
            pretension: dl / 1e3,
            ..RseeConfig::default()
        };
        assert!((cfg.outer_radius() - r2).abs() < 1e-15);
    }
}
