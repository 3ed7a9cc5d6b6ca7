mod common;

use common::*;
use rsee_core::design::{search_configuration, DesignTarget};
use rsee_core::workspace::{classify, LINEARITY_THRESHOLD};
use rsee_core::{RseeConfig, StiffnessMode};

fn profile(cfg: &RseeConfig, half: f64, n: usize, scale: f64) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let b = -half + 2.0 * half * i as f64 / (n - 1) as f64;
            (b, scale * vector_torque(cfg, b))
        })
        .collect()
}

#[test]
fn recovers_the_profile_of_a_known_configuration() {
    let truth = opposed(2.0, 12.0, 4);
    let target = DesignTarget::new(profile(&truth, truth.feasible_half_range(), 41, 1.0));
    let found = search_configuration(&target).unwrap();
    assert!(found.residual < 1e-6, "{found:?}");
    assert_eq!(found.config.pair_count, 4);
}

#[test]
fn straight_lines_land_in_the_linear_family() {
    let half = 10f64.to_radians();
    for slope in [20.0, 40.0, 60.0] {
        let line: Vec<(f64, f64)> = (0..31)
            .map(|i| {
                let b = -half + 2.0 * half * i as f64 / 30.0;
                (b, slope * b)
            })
            .collect();
        let found = search_configuration(&DesignTarget::new(line)).unwrap();
        let phi = found.config.offset_a.abs().to_degrees();
        assert!((15.0..=25.0).contains(&phi), "slope {slope}: phi {phi}");
        let report = classify(&found.config, half, 61, LINEARITY_THRESHOLD).unwrap();
        assert_eq!(report.mode, StiffnessMode::Linear, "slope {slope}");
    }
}

#[test]
fn scaling_a_four_pair_target_by_one_and_a_half_gives_six_pairs() {
    let four = opposed(1.5, 8.0, 4);
    let half = four.feasible_half_range();
    let base = search_configuration(&DesignTarget::new(profile(&four, half, 41, 1.0))).unwrap();
    let scaled = search_configuration(&DesignTarget::new(profile(&four, half, 41, 1.5))).unwrap();
    assert_eq!(base.config.pair_count, 4);
    assert_eq!(scaled.config.pair_count, 6);
    assert!((scaled.config.pretension - base.config.pretension).abs() < 1e-6);
    assert!((scaled.config.offset_a - base.config.offset_a).abs() < 1e-5);
    assert!(scaled.residual < 1e-6);
}
