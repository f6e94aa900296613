//! Acceptance suite: one test per criterion, each printing a PASS line
//! with the measured quantities (run with `--nocapture` to see them).
//!
//! Every tolerance is pinned here, in code. Runtime budgets are asserted
//! where the criterion states one.

use std::time::Instant;

use neckcalib::calibration::{
    comass_ratio, comass_sweep, equality_locus_max_dev, frame_volume, lifted_frame,
    max_ratio_search, probe_hypothesis, pushforward_volume, random_frame, ProductPoint,
};
use neckcalib::cli::{self, CalibrateParams, Command, OutputSpec, RunConfig, VolumeCompareParams};
use neckcalib::domain::BoxDomain;
use neckcalib::geometry::{jlt_neck, Geometry};
use neckcalib::linalg::{
    cauchy_binet_check, det, enumerate_subsets, minor, weighted_minor_expansion, DenseMatrix,
};
use neckcalib::metric::{FactorProfile, FiberMetric, NeckSpec};
use neckcalib::rng::stream;
use neckcalib::variational::{
    graph_volume, mean_curvature_defect, modes_up_to_degree_two, perturbation_test, GraphSection,
    QuadratureRule,
};
use rand::Rng;

fn jlt_with_q0(a: &[f64]) -> NeckSpec {
    let mut spec = jlt_neck(a, 3.0).unwrap();
    spec.locate_q0(65, 1e-9).unwrap();
    spec
}

fn probe_spec() -> NeckSpec {
    let mut spec = NeckSpec::new(
        2,
        1,
        1,
        vec![
            FactorProfile::Jlt { a: 1.0 },
            FactorProfile::ReciprocalJlt { a: 1.0 },
        ],
        FiberMetric::Euclidean,
        BoxDomain::symmetric(3.0).unwrap(),
        Geometry::Sphere { n: 2 },
    )
    .unwrap();
    spec.locate_q0(65, 1e-9).unwrap();
    spec
}

#[test]
fn criterion_01_cauchy_binet_suite() {
    let start = Instant::now();
    let instances = 1000;
    let mut worst = 0.0f64;
    for i in 0..instances {
        let mut rng = stream(0xC1, i);
        let k = rng.random_range(1..=5usize);
        let n = rng.random_range(k..=10usize);
        let data: Vec<f64> = (0..k * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = DenseMatrix::new(k, n, data).unwrap();
        let (lhs, rhs) = cauchy_binet_check(&a).unwrap();
        let rel = (lhs - rhs).abs() / lhs.abs().max(1.0);
        assert!(rel <= 1e-9, "instance {i}: relative deviation {rel}");
        worst = worst.max(rel);
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed <= 5.0, "runtime {elapsed}s exceeds 5s");
    println!(
        "criterion 01 PASS: {instances} Cauchy-Binet instances, worst rel dev {worst:.3e}, {elapsed:.2}s"
    );
}

#[test]
fn criterion_02_corrected_weighted_expansion() {
    let start = Instant::now();
    let instances = 1000;
    let mut worst = 0.0f64;
    for i in 0..instances {
        let mut rng = stream(0xC2, i);
        let k = rng.random_range(1..=5usize);
        let n = rng.random_range(k..=10usize);
        let data: Vec<f64> = (0..k * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = DenseMatrix::new(k, n, data).unwrap();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
        let value = weighted_minor_expansion(&b, &w).unwrap();
        let oracle = det(&b.weighted_gram(&w).unwrap()).unwrap();
        let rel = (value - oracle).abs() / oracle.abs().max(1.0);
        assert!(rel <= 1e-9, "instance {i}: relative deviation {rel}");
        worst = worst.max(rel);
    }
    // fixed witness: the subset-weighted expansion of B = [[1,1,0]] is
    // w1 + w2, while pulling the full weight product out of the minor
    // sum would give (w1 w2 w3) * sum(det B_S)^2 — a different number
    let b = DenseMatrix::from_rows(&[vec![1.0, 1.0, 0.0]]).unwrap();
    let w = [1.0, 2.0, 3.0];
    let corrected = weighted_minor_expansion(&b, &w).unwrap();
    assert_eq!(corrected, w[0] + w[1]);
    let minor_sq_sum: f64 = enumerate_subsets(3, 1)
        .unwrap()
        .map(|s| minor(&b, &s).unwrap().powi(2))
        .sum();
    let full_product_form = w.iter().product::<f64>() * minor_sq_sum;
    assert!((corrected - full_product_form).abs() > 1.0);
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed <= 5.0, "runtime {elapsed}s exceeds 5s");
    println!(
        "criterion 02 PASS: {instances} weighted expansions, worst rel dev {worst:.3e}; \
         witness {corrected} vs full-product form {full_product_form}, {elapsed:.2}s"
    );
}

fn sweep_cases() -> Vec<Vec<f64>> {
    let mut cases = Vec::new();
    for n in [2usize, 3, 4] {
        cases.push(vec![1.0; n]);
        cases.push((1..=n).map(|j| j as f64).collect());
    }
    cases
}

#[test]
fn criterion_03_calibration_sweeps() {
    let start = Instant::now();
    for a in sweep_cases() {
        let spec = jlt_with_q0(&a);
        let report = comass_sweep(&spec, 10_000, 10, 0xC3).unwrap();
        assert_eq!(report.samples, 100_000);
        assert!(
            report.max_ratio <= 1.0 + 1e-9,
            "a = {a:?}: max ratio {}",
            report.max_ratio
        );
        assert!(
            report.violations.is_empty(),
            "a = {a:?}: {} violations",
            report.violations.len()
        );
        println!(
            "criterion 03 sweep a={a:?}: max ratio {:.12}",
            report.max_ratio
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed <= 60.0, "runtime {elapsed}s exceeds 60s");
    println!(
        "criterion 03 PASS: 6 sweeps x 1e5 frames, zero violations, {elapsed:.2}s"
    );
}

#[test]
fn criterion_04_equality_locus() {
    let mut worst = 0.0f64;
    for a in sweep_cases() {
        let spec = jlt_with_q0(&a);
        let dev = equality_locus_max_dev(&spec, 1000, 0xC4).unwrap();
        assert!(dev <= 1e-9, "a = {a:?}: deviation {dev}");
        worst = worst.max(dev);
    }
    println!(
        "criterion 04 PASS: lifted frames at q0 on 6 specs x 1e3 points, worst |ratio-1| {worst:.3e}"
    );
}

#[test]
fn criterion_05_projection_inequality_unconditional() {
    let mut specs = vec![
        jlt_with_q0(&[1.0, 1.0]),
        jlt_with_q0(&[1.0, 2.0, 3.0]),
        jlt_with_q0(&[1.5, 0.5, 2.0, 1.0]),
        probe_spec(),
    ];
    let mut constant = NeckSpec::new(
        2,
        1,
        1,
        vec![
            FactorProfile::Constant { c: 2.0 },
            FactorProfile::Constant { c: 3.0 },
        ],
        FiberMetric::Euclidean,
        BoxDomain::symmetric(3.0).unwrap(),
        Geometry::Sphere { n: 2 },
    )
    .unwrap();
    constant.locate_q0(33, 1e-9).unwrap();
    specs.push(constant);

    let frames_per_spec = 20_000u64;
    let mut checked = 0u64;
    for (si, spec) in specs.iter().enumerate() {
        for i in 0..frames_per_spec {
            let mut rng = stream(0xC5 + si as u64, i);
            let base = spec.geometry().sample_point(&mut rng);
            let fiber = spec.fiber_domain().sample(&mut rng);
            let at = ProductPoint { base, fiber };
            let frame = random_frame(spec, &at, &mut rng).unwrap();
            let push = pushforward_volume(spec, &frame).unwrap();
            let vol = frame_volume(spec, &frame).unwrap();
            assert!(
                push <= vol * (1.0 + 1e-12),
                "spec {si} frame {i}: projected volume {push} exceeds frame volume {vol}"
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 100_000);
    println!("criterion 05 PASS: projection inequality on {checked} frames, zero exceptions");
}

#[test]
fn criterion_06_find_q0_on_jlt() {
    let start = Instant::now();
    for a in [
        vec![1.0, 1.0],
        vec![1.0, 2.0],
        vec![1.0, 2.0, 3.0],
        vec![2.0, 0.5, 1.5, 3.0],
    ] {
        let spec = jlt_neck(&a, 3.0).unwrap();
        let (q0, coordinatewise) = spec.find_q0(65, 1e-9).unwrap();
        assert!(q0[0].abs() <= 1e-8, "a = {a:?}: q0 = {q0:?}");
        assert!(coordinatewise, "a = {a:?}: coordinatewise_min false");
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed <= 1.0, "runtime {elapsed}s exceeds 1s");
    println!("criterion 06 PASS: |q0| <= 1e-8 and coordinatewise_min on 4 specs, {elapsed:.3}s");
}

#[test]
fn criterion_07_comass_max_search() {
    let spec = jlt_with_q0(&[1.0, 1.0]);
    let (ratio, frame) = max_ratio_search(&spec, 100, 200, 0xC7).unwrap();
    assert!(
        (1.0 - 1e-6..=1.0 + 1e-9).contains(&ratio),
        "best ratio {ratio}"
    );
    let fiber_norm = frame.fiber_norm();
    let q_abs = frame.at.fiber[0].abs();
    assert!(fiber_norm <= 1e-3, "fiber norm {fiber_norm}");
    assert!(q_abs <= 1e-3, "|q| = {q_abs}");
    println!(
        "criterion 07 PASS: search ratio {ratio:.9}, fiber norm {fiber_norm:.2e}, |q| {q_abs:.2e}"
    );
}

#[test]
fn criterion_08_hypothesis_probe_witness() {
    // in-process probe
    let spec = probe_spec();
    let report = probe_hypothesis(&spec, 2000, 5, 40, 200, 0xC8).unwrap();
    assert!(!report.coordinatewise_min);
    let witness = report.witness.as_ref().expect("gap witness expected");
    let target = (2.0f64).sqrt() - 1e-6;
    assert!(
        witness.ratio >= target,
        "witness ratio {} below sqrt(2)-1e-6",
        witness.ratio
    );

    // analytic check of the fixed witness frame
    let lifted = lifted_frame(
        &spec,
        &neckcalib::geometry::BasePoint::ambient(vec![1.0, 0.0]),
        &[1.0],
    )
    .unwrap();
    let analytic = comass_ratio(&spec, &lifted).unwrap();
    assert!((analytic - (2.0f64).sqrt()).abs() <= 1e-12);

    // end-to-end exit code through the binary
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_neckcalib"))
        .args([
            "probe",
            "--config",
            concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/probe_witness.json"),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "probe run must exit 3");
    println!(
        "criterion 08 PASS: witness ratio {:.9} (analytic lifted-frame ratio {:.9}), exit code 3",
        witness.ratio, analytic
    );
}

#[test]
fn criterion_09_volume_oracles_and_perturbations() {
    use std::f64::consts::PI;

    let spec2 = jlt_with_q0(&[1.0, 1.0]);
    let rule2 = QuadratureRule::for_spec(&spec2, 48).unwrap();
    let circumference = graph_volume(&spec2, &GraphSection::zero(0.5), &rule2).unwrap();
    assert!(
        (circumference - 2.0 * PI).abs() <= 1e-9,
        "circle volume {circumference}"
    );

    let spec3 = jlt_with_q0(&[1.0, 1.0, 1.0]);
    let rule3 = QuadratureRule::for_spec(&spec3, 48).unwrap();
    let area = graph_volume(&spec3, &GraphSection::zero(0.5), &rule3).unwrap();
    assert!((area - 4.0 * PI).abs() <= 1e-7, "sphere volume {area}");

    for (spec, rule, label) in [(&spec2, &rule2, "n=2"), (&spec3, &rule3, "n=3")] {
        let modes = modes_up_to_degree_two(spec.ambient_dim());
        let bounds = vec![0.2; modes.len()];
        let report = perturbation_test(spec, &modes, &bounds, 500, rule, 0xC9).unwrap();
        let min_excess = report.min_excess.unwrap();
        assert!(
            min_excess >= -1e-9 * report.baseline_volume,
            "{label}: min excess {min_excess}"
        );
        println!(
            "criterion 09 {label}: baseline {:.9}, min excess {min_excess:.3e} over 500 sections",
            report.baseline_volume
        );
    }
    println!(
        "criterion 09 PASS: 2pi within 1e-9, 4pi within 1e-7, 500 perturbations each non-negative"
    );
}

#[test]
fn criterion_10_minimality_first_variation() {
    let spec = jlt_with_q0(&[1.0, 1.0, 1.0]);
    let rule = QuadratureRule::for_spec(&spec, 32).unwrap();
    let modes = modes_up_to_degree_two(3);
    let report = mean_curvature_defect(&spec, &modes, 1e-3, &rule).unwrap();
    let defect = report.defect.unwrap();
    assert!(defect <= 1e-4, "first-variation defect {defect}");
    println!(
        "criterion 10 PASS: first-variation defect {defect:.3e} over {} modes",
        modes.len()
    );
}

fn zero_wall_time(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            for (key, v) in map.iter_mut() {
                if key == "wall_time_s" {
                    *v = serde_json::Value::from(0.0);
                } else {
                    zero_wall_time(v);
                }
            }
        }
        serde_json::Value::Array(items) => {
            for v in items {
                zero_wall_time(v);
            }
        }
        _ => {}
    }
}

fn normalized(document: &str) -> String {
    let mut value: serde_json::Value = serde_json::from_str(document).unwrap();
    zero_wall_time(&mut value);
    serde_json::to_string(&value).unwrap()
}

#[test]
fn criterion_11_determinism_across_thread_counts() {
    // the criterion-3 sweep configuration
    let sweep_config = RunConfig {
        spec: jlt_neck(&[1.0, 2.0, 3.0], 3.0).unwrap(),
        command: Command::Calibrate(CalibrateParams {
            points: 10_000,
            frames_per_point: 10,
        }),
        seed: 0xC3,
        output: OutputSpec::default(),
    };
    let a = cli::run(sweep_config.clone(), Some(1)).unwrap();
    let b = cli::run(sweep_config, Some(4)).unwrap();
    assert_eq!(a.exit_code, b.exit_code);
    assert_eq!(
        normalized(&a.document),
        normalized(&b.document),
        "calibrate reports differ across thread counts"
    );

    // the criterion-9 volume comparison configuration
    let volume_config = RunConfig {
        spec: jlt_neck(&[1.0, 1.0, 1.0], 3.0).unwrap(),
        command: Command::VolumeCompare(VolumeCompareParams {
            trials: 500,
            nodes: 32,
            amplitude: 0.2,
            modes: None,
        }),
        seed: 0xC9,
        output: OutputSpec::default(),
    };
    let a = cli::run(volume_config.clone(), Some(1)).unwrap();
    let b = cli::run(volume_config, Some(4)).unwrap();
    assert_eq!(a.exit_code, b.exit_code);
    assert_eq!(
        normalized(&a.document),
        normalized(&b.document),
        "volume reports differ across thread counts"
    );
    println!("criterion 11 PASS: calibrate and volume-compare byte-identical for threads 1 and 4");
}
