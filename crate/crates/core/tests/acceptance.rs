//! Acceptance suite: every criterion is evaluated at its stated tolerance and
//! reported on one line. The process exits non-zero when any criterion fails.

mod common;

use std::f64::consts::TAU;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsee_core::analysis::{estimate_frequency_response, fit_quasi_static, DcReference, EstimatorSettings, FitParam};
use rsee_core::scenario::{
    preset, run, synthetic_samples, RunSummary, Scenario, ScenarioDoc, ScenarioKind, NONLINEARITY_PRESETS_DEG,
};
use rsee_core::workspace::{
    classify, linearity_index, sweep_offset, Grid, DEFAULT_AXIS_POINTS, DEFAULT_DEFLECTION_POINTS,
    LINEARITY_THRESHOLD,
};
use rsee_core::{RseeConfig, StiffnessMode};

const CORNER_DEG: f64 = 31.4;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

fn per_degree(k: f64) -> f64 {
    k * std::f64::consts::PI / 180.0
}

fn run_doc(doc: ScenarioDoc) -> RunSummary {
    let dir = tempfile::tempdir().expect("temporary directory");
    let s = Scenario::from_doc(&doc).expect("valid scenario");
    run(&s, dir.path()).unwrap_or_else(|e| panic!("{}: {e}", s.kind().as_str()))
}

fn torque_corner() -> Outcome {
    let cfg = RseeConfig::default();
    let beta = CORNER_DEG.to_radians();
    let start = Instant::now();
    let mut tau = 0.0;
    for _ in 0..1000 {
        tau = std::hint::black_box(cfg.output_torque(std::hint::black_box(beta)));
    }
    let per_call = start.elapsed().as_secs_f64() / 1000.0;
    let oracle = vector_torque(&cfg, beta);
    outcome(
        within(tau, 30.4, 0.01) && (tau - oracle).abs() < 1e-9 && per_call < 1e-3,
        format!("tau = {tau:.4} N·m (30.4 ± 1%), {:.2} µs per call", per_call * 1e6),
    )
}

fn minimum_stiffness() -> Outcome {
    let k = RseeConfig::default().equivalent_stiffness(0.0);
    outcome(
        within(k, 5.4, 0.02),
        format!("K(0) = {k:.4} N·m/rad = {:.4} N·m/° (5.4 ± 2%)", per_degree(k)),
    )
}

fn pretension_maximum_stiffness() -> Outcome {
    let k = per_degree(RseeConfig::default().equivalent_stiffness(CORNER_DEG.to_radians()));
    outcome(within(k, 2.18, 0.03), format!("K(31.4°) = {k:.4} N·m/° (2.18 ± 3%)"))
}

fn offset_maxima() -> Outcome {
    let mut base = RseeConfig::default();
    base.spring.max_extension = 11.8e-3;
    let map = sweep_offset(
        &base,
        Grid::new(0.0, 30f64.to_radians(), DEFAULT_AXIS_POINTS),
        Grid::deflections(&base, DEFAULT_DEFLECTION_POINTS),
    )
    .expect("offset sweep");
    let b = map.performance_bounds().expect("feasible cells");
    let k_max = per_degree(b.k_max);
    let tau_ok = within(b.tau_max, 36.5, 0.02);
    let k_ok = within(k_max, 2.33, 0.05);
    outcome(
        tau_ok && k_ok,
        format!(
            "tau_max = {:.3} N·m at β = {:.2}°, φ = {:.2}° (36.5 ± 2%: {}); k_max = {k_max:.4} N·m/° (2.33 ± 5%: {})",
            b.tau_max,
            b.beta_at_tau_max.to_degrees(),
            b.axis_at_tau_max.to_degrees(),
            if tau_ok { "ok" } else { "out" },
            if k_ok { "ok" } else { "out" },
        ),
    )
}

fn proportionality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 100 {
        let cfg = RseeConfig {
            pretension: rng.random_range(0.5e-3..6.5e-3),
            ..RseeConfig::with_opposed_offset(rng.random_range(0.0..25f64.to_radians()))
        };
        let beta = rng.random_range(-cfg.deflection_limit..cfg.deflection_limit);
        let four = RseeConfig { pair_count: 4, ..cfg };
        let six = RseeConfig { pair_count: 6, ..cfg };
        if !six.is_feasible(beta) || four.output_torque(beta).abs() < 1e-9 {
            continue;
        }
        worst = worst
            .max((six.output_torque(beta) / four.output_torque(beta) - 1.5).abs())
            .max((six.equivalent_stiffness(beta) / four.equivalent_stiffness(beta) - 1.5).abs());
        checked += 1;
    }
    outcome(
        worst <= 4.0 * f64::EPSILON,
        format!("max |ratio − 1.5| = {worst:.2e} over {checked} feasible points"),
    )
}

fn gradient_oracles() -> Outcome {
    let start = Instant::now();
    let (mut worst_k, mut worst_u): (f64, f64) = (0.0, 0.0);
    for c in 0..50 {
        let cfg = RseeConfig {
            pair_count: 1 + (c % 6) as u32,
            ..opposed(0.5 + 6.0 * (c % 10) as f64 / 9.0, 25.0 * (c / 10) as f64 / 4.0, 6)
        };
        let half = cfg.feasible_half_range();
        for i in 0..50 {
            let beta = -half + 2.0 * half * i as f64 / 49.0;
            let k = cfg.equivalent_stiffness(beta);
            let fd_k = central_difference(|b| cfg.output_torque(b), beta, 1e-6);
            worst_k = worst_k.max(rel_err(k, fd_k));
            let tau = cfg.output_torque(beta);
            let fd_u = central_difference(|b| cfg.spring_potential_energy(b), beta, 1e-6);
            // near the rest point the difference quotient of U is roundoff-limited
            worst_u = worst_u.max((fd_u - tau).abs() / tau.abs().max(1e-2));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    outcome(
        worst_k < 1e-6 && worst_u < 1e-6 && elapsed < 1.0,
        format!("stiffness rel err {worst_k:.2e}, energy slope rel err {worst_u:.2e}, {elapsed:.3} s"),
    )
}

fn linearity_classification() -> Outcome {
    let half = 10f64.to_radians();
    let idx: Vec<f64> = NONLINEARITY_PRESETS_DEG
        .iter()
        .map(|&phi| linearity_index(&opposed(0.5, phi, 6), half, 61).expect("feasible range"))
        .collect();
    let hard = classify(&opposed(0.5, 0.0, 6), half, 61, LINEARITY_THRESHOLD).expect("classify");
    let lin = classify(&opposed(0.5, 20.0, 6), half, 61, LINEARITY_THRESHOLD).expect("classify");
    outcome(
        idx[2] < idx[1] && idx[1] < idx[0] && hard.mode == StiffnessMode::Hardening && lin.mode == StiffnessMode::Linear,
        format!(
            "index φ=0/10/20 = {:.2e}/{:.2e}/{:.2e}; φ=0 {:?}, φ=20° {:?}",
            idx[0], idx[1], idx[2], hard.mode, lin.mode
        ),
    )
}

fn quasi_static_fit() -> Outcome {
    let cfg = RseeConfig::default();
    let free = [FitParam::SpringStiffness, FitParam::Pretension];
    let rms: Vec<f64> = (0..100)
        .map(|seed| {
            fit_quasi_static(&synthetic_samples(&cfg, 61, 0.25, seed), &cfg, &free)
                .expect("fit")
                .residual_rms
        })
        .collect();
    let inside = rms.iter().filter(|r| (0.20..=0.30).contains(*r)).count();
    let (lo, hi) = rms.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    outcome(
        inside >= 95,
        format!("{inside}/100 seeds in [0.20, 0.30] N·m (range {lo:.3}..{hi:.3})"),
    )
}

fn tracking() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for phi in NONLINEARITY_PRESETS_DEG {
        let start = Instant::now();
        let s = run_doc(preset(ScenarioKind::TrackSine, phi));
        let secs = start.elapsed().as_secs_f64();
        let rms = s.metric("rms_torque_error_nm").unwrap_or(f64::NAN);
        let max = s.metric("max_torque_error_nm").unwrap_or(f64::NAN);
        let stable = s.metric("working_space_violations") == Some(0.0) && max < 1.0;
        pass &= rms <= 0.2 && stable && secs < 5.0;
        parts.push(format!("φ={phi}: {rms:.4} N·m ({secs:.2} s)"));
    }
    outcome(pass, format!("RMS ≤ 0.2 N·m: {}", parts.join(", ")))
}

fn steps() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for phi in NONLINEARITY_PRESETS_DEG {
        for target in [2.0, 6.0] {
            let mut doc = preset(ScenarioKind::Step, phi);
            doc.torque_nm = Some(target);
            let s = run_doc(doc);
            let os = s.metric("overshoot_pct").unwrap_or(f64::NAN);
            let sse = s.metric("steady_state_error_nm").unwrap_or(f64::NAN);
            let settle = s.metric("settling_time_s").unwrap_or(f64::INFINITY);
            let ok = os < 20.0 && sse < 0.01 * target && settle <= 1.0;
            pass &= ok;
            parts.push(format!(
                "φ={phi} {target} N·m: os {os:.1}%, ts {settle:.3} s{}",
                if ok { "" } else { " ✗" }
            ));
        }
    }
    outcome(pass, parts.join("; "))
}

fn collision() -> Outcome {
    let s = run_doc(ScenarioDoc::of_kind(ScenarioKind::Collision));
    let t = s.metric("recovery_time_s").unwrap_or(f64::INFINITY);
    let final_err = s.metric("final_torque_error_nm").unwrap_or(f64::INFINITY);
    outcome(
        t <= 0.5 && final_err < 0.05 * 5.0,
        format!("recovery {t:.3} s (≤ 0.5 s), final error {final_err:.2e} N·m"),
    )
}

fn bode(kind: ScenarioKind, phi: f64, amplitude: f64) -> f64 {
    let mut doc = preset(kind, phi);
    doc.torque_nm = Some(amplitude);
    run_doc(doc).metric("bandwidth_hz").unwrap_or(f64::NAN)
}

fn bandwidth_orderings() -> Outcome {
    let (low, high) = (1.0, 8.0);
    let mut rows = Vec::new();
    let mut slowest: f64 = 0.0;
    for phi in NONLINEARITY_PRESETS_DEG {
        let start = Instant::now();
        let row = [
            bode(ScenarioKind::BodeOpen, phi, low),
            bode(ScenarioKind::BodeOpen, phi, high),
            bode(ScenarioKind::BodeClosed, phi, low),
            bode(ScenarioKind::BodeClosed, phi, high),
        ];
        slowest = slowest.max(start.elapsed().as_secs_f64());
        rows.push(row);
    }
    let open_low_increases = rows[0][0] < rows[1][0] && rows[1][0] < rows[2][0];
    let high_above_low = rows.iter().all(|r| r[1] > r[0]);
    let closed_below_open = rows.iter().all(|r| r[2] <= r[0] && r[3] <= r[1]);
    let detail = NONLINEARITY_PRESETS_DEG
        .iter()
        .zip(&rows)
        .map(|(phi, r)| format!("φ={phi}: open {:.1}/{:.1}, closed {:.1}/{:.1}", r[0], r[1], r[2], r[3]))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(
        open_low_increases && high_above_low && closed_below_open && slowest < 60.0,
        format!("Hz low/high amplitude: {detail}; slowest battery {slowest:.1} s"),
    )
}

fn interaction_orderings() -> Outcome {
    let rms = |kind, phi| run_doc(preset(kind, phi)).metric("rms_torque_error_nm").unwrap_or(f64::NAN);
    let passive = [rms(ScenarioKind::PhriPassive, 0.0), rms(ScenarioKind::PhriPassive, 20.0)];
    let transparent = [
        rms(ScenarioKind::PhriTransparent, 0.0),
        rms(ScenarioKind::PhriTransparent, 20.0),
    ];
    outcome(
        passive[0] < passive[1] && transparent[0] < transparent[1],
        format!(
            "passive φ=0 {:.4} < φ=20° {:.4} N·m; transparent φ=0 {:.4} < φ=20° {:.4} N·m",
            passive[0], passive[1], transparent[0], transparent[1]
        ),
    )
}

fn estimator_oracle() -> Outcome {
    let (wn, zeta) = (TAU * 10.0, 0.3);
    let system = move |f: f64, a: f64, duration: f64| {
        let h = 2e-5;
        let u = move |t: f64| a * (TAU * f * t).sin();
        let mut x = [0.0, 0.0];
        let mut out = rsee_core::analysis::SineRun::default();
        for k in 0..=(duration / h).round() as usize {
            let t = k as f64 * h;
            if k % 5 == 0 {
                out.times.push(t);
                out.input.push(u(t));
                out.output.push(x[0]);
            }
            x = second_order_step(x, t, h, wn, zeta, &u);
        }
        out
    };
    let freqs: Vec<f64> = (0..=20).map(|k| 10f64.powf(k as f64 / 10.0)).collect();
    let settings = EstimatorSettings {
        min_discard_s: 0.5,
        dc: DcReference::Known(1.0),
        ..EstimatorSettings::default()
    };
    let fr = estimate_frequency_response(&system, 1.0, &freqs, &settings).expect("estimate");
    let (mut db_err, mut deg_err): (f64, f64) = (0.0, 0.0);
    for (i, &f) in freqs.iter().enumerate() {
        let w = TAU * f;
        let (re, im) = (wn * wn - w * w, 2.0 * zeta * wn * w);
        db_err = db_err.max((fr.magnitude_db[i] - 20.0 * (wn * wn / re.hypot(im)).log10()).abs());
        deg_err = deg_err.max((fr.phase_deg[i] + im.atan2(re).to_degrees()).abs());
    }
    outcome(
        db_err < 0.2 && deg_err < 2.0,
        format!("1–100 Hz: max {db_err:.4} dB, {deg_err:.4}° (0.2 dB / 2°)"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 14] = [
        ("torque corner", torque_corner),
        ("minimum stiffness", minimum_stiffness),
        ("pre-tension maximum stiffness", pretension_maximum_stiffness),
        ("offset maxima at 11.8 mm rated extension", offset_maxima),
        ("pair-count proportionality", proportionality),
        ("gradient and energy oracles", gradient_oracles),
        ("linearity classification", linearity_classification),
        ("quasi-static fit with noise", quasi_static_fit),
        ("sinusoid tracking", tracking),
        ("torque steps", steps),
        ("collision recovery", collision),
        ("bandwidth orderings", bandwidth_orderings),
        ("interaction orderings", interaction_orderings),
        ("frequency-response estimator", estimator_oracle),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, id, o.detail);
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
