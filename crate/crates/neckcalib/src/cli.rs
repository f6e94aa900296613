//! Operator surface: declarative run configurations, subcommand
//! dispatch, deterministic seeding, and structured report emission.
//!
//! A run is described by a single JSON document with exactly one command
//! block; command-line flags override individual fields through
//! `--set` dot-paths. Reports embed the fully resolved configuration so
//! every run can be replayed from its own output.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical
//! degeneracy, 3 finding (comass violation or negative volume excess
//! beyond tolerance) — a finding is the scientific output of a probe,
//! not a failure.

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    self, ComassReport, ProbeReport, TangentFrame, VIOLATION_TOL,
};
use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};
use crate::metric::{NeckSpec, DEFAULT_Q0_GRID, DEFAULT_Q0_TOL};
use crate::rng::stream;
use crate::variational::{
    self, modes_up_to_degree_two, Mode, QuadratureRule, VariationalReport, EXCESS_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(Error::config(format!("unknown format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

fn default_instances() -> usize {
    1000
}
fn default_grid() -> usize {
    DEFAULT_Q0_GRID
}
fn default_refine_tol() -> f64 {
    DEFAULT_Q0_TOL
}
fn default_points() -> usize {
    10_000
}
fn default_frames_per_point() -> usize {
    10
}
fn default_restarts() -> usize {
    100
}
fn default_iters() -> usize {
    200
}
fn default_probe_points() -> usize {
    2000
}
fn default_probe_frames() -> usize {
    5
}
fn default_probe_restarts() -> usize {
    40
}
fn default_trials() -> usize {
    500
}
fn default_nodes() -> usize {
    32
}
fn default_amplitude() -> f64 {
    0.25
}
fn default_step() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestParams {
    #[serde(default = "default_instances")]
    pub instances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindQ0Params {
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_refine_tol")]
    pub refine_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateParams {
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_frames_per_point")]
    pub frames_per_point: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComassMaxParams {
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_iters")]
    pub iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    #[serde(default = "default_probe_points")]
    pub points: usize,
    #[serde(default = "default_probe_frames")]
    pub frames_per_point: usize,
    #[serde(default = "default_probe_restarts")]
    pub restarts: usize,
    #[serde(default = "default_iters")]
    pub iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeCompareParams {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Perturbation modes; all monomials of degree ≤ 2 when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<Mode>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalityParams {
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<Mode>>,
}

/// Exactly one command block per run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Command {
    #[serde(rename = "selftest")]
    Selftest(SelftestParams),
    #[serde(rename = "find-q0")]
    FindQ0(FindQ0Params),
    #[serde(rename = "calibrate")]
    Calibrate(CalibrateParams),
    #[serde(rename = "comass-max")]
    ComassMax(ComassMaxParams),
    #[serde(rename = "probe")]
    Probe(ProbeParams),
    #[serde(rename = "volume-compare")]
    VolumeCompare(VolumeCompareParams),
    #[serde(rename = "minimality")]
    Minimality(MinimalityParams),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Selftest(_) => "selftest",
            Command::FindQ0(_) => "find-q0",
            Command::Calibrate(_) => "calibrate",
            Command::ComassMax(_) => "comass-max",
            Command::Probe(_) => "probe",
            Command::VolumeCompare(_) => "volume-compare",
            Command::Minimality(_) => "minimality",
        }
    }
}

/// A complete run description: spec, command block, seed, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub spec: NeckSpec,
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Applies a `--set key=value` dot-path override to a JSON document.
/// Path segments address object fields or array indices; the value is
/// parsed as JSON when possible and taken as a string otherwise.
pub fn apply_set_override(doc: &mut serde_json::Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(format!("--set needs key=value, got '{assignment}'")))?;
    let value: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = doc;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.is_empty() {
        return Err(Error::config("--set path is empty"));
    }
    for (pos, segment) in segments.iter().enumerate() {
        let last = pos + 1 == segments.len();
        match cursor {
            serde_json::Value::Object(map) => {
                if last {
                    map.insert(segment.to_string(), value);
                    return Ok(());
                }
                cursor = map
                    .entry(segment.to_string())
                    .or_insert(serde_json::Value::Object(Default::default()));
            }
            serde_json::Value::Array(items) => {
                let idx: usize = segment
                    .parse()
                    .map_err(|_| Error::config(format!("array index expected in '{path}'")))?;
                if idx >= items.len() {
                    return Err(Error::config(format!(
                        "index {idx} out of bounds in '{path}'"
                    )));
                }
                if last {
                    items[idx] = value;
                    return Ok(());
                }
                cursor = &mut items[idx];
            }
            _ => {
                return Err(Error::config(format!(
                    "cannot descend into scalar at '{segment}' in '{path}'"
                )))
            }
        }
    }
    Ok(())
}

/// Result of the linear-algebra property suites.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelftestReport {
    pub instances: usize,
    pub cauchy_binet_max_rel_dev: f64,
    pub weighted_expansion_max_rel_dev: f64,
    /// Fixed witness B = [[1,1,0]], w = (1,2,3): the subset-weighted
    /// expansion (= w₁+w₂ = 3) against the full-product form
    /// (= w₁w₂w₃·Σ det² = 12); the two must differ.
    pub witness_subset_weighted: f64,
    pub witness_full_product_form: f64,
    pub passed: bool,
}

/// Random Cauchy–Binet and weighted-expansion property suites.
pub fn run_selftest(instances: usize, seed: u64) -> Result<SelftestReport> {
    let devs = (0..instances as u64)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let mut rng = stream(seed, i);
            use rand::Rng;
            let k = rng.random_range(1..=5usize);
            let n = rng.random_range(k..=10usize);
            let data: Vec<f64> = (0..k * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = DenseMatrix::new(k, n, data)?;
            let (lhs, rhs) = linalg::cauchy_binet_check(&a)?;
            let cb_dev = (lhs - rhs).abs() / lhs.abs().max(1.0);
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
            let wme = linalg::weighted_minor_expansion(&a, &w)?;
            let gram = linalg::det(&a.weighted_gram(&w)?)?;
            let wme_dev = (wme - gram).abs() / gram.abs().max(1.0);
            Ok((cb_dev, wme_dev))
        })
        .try_reduce(|| (0.0, 0.0), |x, y| Ok((x.0.max(y.0), x.1.max(y.1))))?;

    let b = DenseMatrix::from_rows(&[vec![1.0, 1.0, 0.0]])?;
    let w = [1.0, 2.0, 3.0];
    let witness_subset_weighted = linalg::weighted_minor_expansion(&b, &w)?;
    let minor_sq_sum: f64 = linalg::enumerate_subsets(3, 1)?
        .map(|s| linalg::minor(&b, &s).map(|m| m * m))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum();
    let witness_full_product_form = w.iter().product::<f64>() * minor_sq_sum;
    let witness_separates =
        (witness_subset_weighted - witness_full_product_form).abs() > 1.0;

    Ok(SelftestReport {
        instances,
        cauchy_binet_max_rel_dev: devs.0,
        weighted_expansion_max_rel_dev: devs.1,
        witness_subset_weighted,
        witness_full_product_form,
        passed: devs.0 <= 1e-9 && devs.1 <= 1e-9 && witness_separates,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FindQ0Report {
    pub q0: Vec<f64>,
    pub coordinatewise_min: bool,
    pub product_at_q0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchReport {
    pub best_ratio: f64,
    pub fiber_norm: f64,
    pub fiber_point: Vec<f64>,
    pub frame: TangentFrame,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReportBody {
    Selftest(SelftestReport),
    FindQ0(FindQ0Report),
    Comass(ComassReport),
    Search(SearchReport),
    Probe(ProbeReport),
    Variational {
        comparison_class: String,
        #[serde(flatten)]
        report: VariationalReport,
    },
}

/// The emitted document: resolved config, hypothesis flag, command
/// report, wall time.
#[derive(Debug, Clone, Serialize)]
pub struct RunDocument {
    pub command: String,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coordinatewise_min: Option<bool>,
    pub report: ReportBody,
    pub wall_time_s: f64,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub document: String,
    pub written_to: Option<PathBuf>,
}

/// Exit code for an error surfaced by `run`.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Degeneracy(_) | Error::SpecViolation(_) | Error::Sampling(_) => 2,
        _ => 1,
    }
}

/// Executes a configuration: resolves q₀, dispatches the command inside
/// a worker pool of the requested size, emits the report.
pub fn run(mut config: RunConfig, threads: Option<usize>) -> Result<RunOutcome> {
    let start = Instant::now();
    if threads == Some(0) {
        return Err(Error::config("--threads must be at least 1"));
    }
    // explicit-config-only: pin the default to hardware parallelism so
    // no environment variable can influence the pool size
    let workers = threads.unwrap_or_else(|| {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;

    if !matches!(config.command, Command::Selftest(_)) && config.spec.q0().is_none() {
        let (grid, tol) = match &config.command {
            Command::FindQ0(p) => (p.grid, p.refine_tol),
            _ => (DEFAULT_Q0_GRID, DEFAULT_Q0_TOL),
        };
        config.spec.locate_q0(grid, tol)?;
    }
    let coordinatewise_min = config.spec.q0().map(|i| i.coordinatewise_min);

    let (body, exit_code) = pool.install(|| dispatch(&config))?;

    let document = RunDocument {
        command: config.command.name().to_string(),
        coordinatewise_min,
        report: body,
        wall_time_s: start.elapsed().as_secs_f64(),
        config,
    };
    let rendered = match document.config.output.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&document)
                .map_err(|e| Error::config(e.to_string()))?;
            s.push('\n');
            s
        }
        Format::Csv => render_csv(&document)?,
    };
    let written_to = document.config.output.path.clone();
    if let Some(path) = &written_to {
        std::fs::write(path, &rendered)?;
    }
    Ok(RunOutcome {
        exit_code,
        document: rendered,
        written_to,
    })
}

fn dispatch(config: &RunConfig) -> Result<(ReportBody, i32)> {
    let spec = &config.spec;
    let seed = config.seed;
    match &config.command {
        Command::Selftest(p) => {
            let report = run_selftest(p.instances, seed)?;
            if !report.passed {
                return Err(Error::Degeneracy(
                    "selftest property suites exceeded tolerance".into(),
                ));
            }
            Ok((ReportBody::Selftest(report), 0))
        }
        Command::FindQ0(_) => {
            let info = spec.require_q0()?;
            let product_at_q0 = spec.product_factor(&info.point)?;
            Ok((
                ReportBody::FindQ0(FindQ0Report {
                    q0: info.point.clone(),
                    coordinatewise_min: info.coordinatewise_min,
                    product_at_q0,
                }),
                0,
            ))
        }
        Command::Calibrate(p) => {
            let report = calibration::comass_sweep(spec, p.points, p.frames_per_point, seed)?;
            let code = if report.violations.is_empty() { 0 } else { 3 };
            Ok((ReportBody::Comass(report), code))
        }
        Command::ComassMax(p) => {
            let (best_ratio, frame) =
                calibration::max_ratio_search(spec, p.restarts, p.iters, seed)?;
            let code = if best_ratio > 1.0 + VIOLATION_TOL { 3 } else { 0 };
            Ok((
                ReportBody::Search(SearchReport {
                    best_ratio,
                    fiber_norm: frame.fiber_norm(),
                    fiber_point: frame.at.fiber.clone(),
                    frame,
                }),
                code,
            ))
        }
        Command::Probe(p) => {
            let report = calibration::probe_hypothesis(
                spec,
                p.points,
                p.frames_per_point,
                p.restarts,
                p.iters,
                seed,
            )?;
            let code = if report.witness.is_some() { 3 } else { 0 };
            Ok((ReportBody::Probe(report), code))
        }
        Command::VolumeCompare(p) => {
            let rule = QuadratureRule::for_spec(spec, p.nodes)?;
            let modes = p
                .modes
                .clone()
                .unwrap_or_else(|| modes_up_to_degree_two(spec.ambient_dim()));
            let bounds = vec![p.amplitude; modes.len()];
            let report =
                variational::perturbation_test(spec, &modes, &bounds, p.trials, &rule, seed)?;
            let negative = report
                .min_excess
                .map(|m| m < -EXCESS_TOL * report.baseline_volume)
                .unwrap_or(false);
            Ok((
                ReportBody::Variational {
                    comparison_class: "graph sections over M".into(),
                    report,
                },
                if negative { 3 } else { 0 },
            ))
        }
        Command::Minimality(p) => {
            let rule = QuadratureRule::for_spec(spec, p.nodes)?;
            let modes = p
                .modes
                .clone()
                .unwrap_or_else(|| modes_up_to_degree_two(spec.ambient_dim()));
            let report = variational::mean_curvature_defect(spec, &modes, p.step, &rule)?;
            Ok((
                ReportBody::Variational {
                    comparison_class: "graph sections over M".into(),
                    report,
                },
                0,
            ))
        }
    }
}

/// One-row CSV summary with a stable, documented column order. The
/// full resolved config rides along in the last column.
fn render_csv(doc: &RunDocument) -> Result<String> {
    let mut samples = String::new();
    let mut max_ratio = String::new();
    let mut violations = String::new();
    let mut best_ratio = String::new();
    let mut baseline_volume = String::new();
    let mut min_excess = String::new();
    let mut defect = String::new();
    let fmt = |v: f64| {
        if v.is_finite() {
            format!("{v}")
        } else {
            String::new()
        }
    };
    match &doc.report {
        ReportBody::Selftest(r) => {
            samples = r.instances.to_string();
            max_ratio = fmt(r.cauchy_binet_max_rel_dev.max(r.weighted_expansion_max_rel_dev));
        }
        ReportBody::FindQ0(_) => {}
        ReportBody::Comass(r) => {
            samples = r.samples.to_string();
            max_ratio = fmt(r.max_ratio);
            violations = r.violations.len().to_string();
        }
        ReportBody::Search(r) => {
            best_ratio = fmt(r.best_ratio);
        }
        ReportBody::Probe(r) => {
            samples = r.sweep_samples.to_string();
            max_ratio = fmt(r.max_ratio);
            violations = if r.witness.is_some() { "1" } else { "0" }.to_string();
        }
        ReportBody::Variational { report, .. } => {
            samples = report.entries.len().to_string();
            baseline_volume = fmt(report.baseline_volume);
            if let Some(m) = report.min_excess {
                min_excess = fmt(m);
            }
            if let Some(d) = report.defect {
                defect = fmt(d);
            }
        }
    }
    let q0 = doc
        .config
        .spec
        .q0()
        .map(|i| {
            i.point
                .iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(";")
        })
        .unwrap_or_default();
    let cw = doc
        .coordinatewise_min
        .map(|b| b.to_string())
        .unwrap_or_default();
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record([
            "command",
            "spec_id",
            "seed",
            "coordinatewise_min",
            "q0",
            "samples",
            "max_ratio",
            "violations",
            "best_ratio",
            "baseline_volume",
            "min_excess",
            "defect",
            "wall_time_s",
            "config_json",
        ])
        .map_err(|e| Error::config(e.to_string()))?;
    writer
        .write_record([
            doc.command.as_str(),
            &doc.config.spec.spec_id(),
            &doc.config.seed.to_string(),
            &cw,
            &q0,
            &samples,
            &max_ratio,
            &violations,
            &best_ratio,
            &baseline_volume,
            &min_excess,
            &defect,
            &format!("{}", doc.wall_time_s),
            &doc.config.to_json(),
        ])
        .map_err(|e| Error::config(e.to_string()))?;
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::config(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::BoxDomain;
    use crate::geometry::{jlt_neck, Geometry};
    use crate::metric::{FactorProfile, FiberMetric};

    fn jlt_config(command: Command) -> RunConfig {
        RunConfig {
            spec: jlt_neck(&[1.0, 1.0], 3.0).unwrap(),
            command,
            seed: 42,
            output: OutputSpec::default(),
        }
    }

    #[test]
    fn config_round_trip_is_identity() {
        let config = jlt_config(Command::Calibrate(CalibrateParams {
            points: 100,
            frames_per_point: 2,
        }));
        let json = config.to_json();
        let back = RunConfig::from_json(&json).unwrap();
        assert_eq!(back, config);
        assert_eq!(back.to_json(), json);
    }

    #[test]
    fn set_override_descends_paths() {
        let mut doc = serde_json::json!({
            "seed": 1,
            "command": {"calibrate": {"points": 10}},
            "spec": {"fiber_domain": {"lo": [-3.0], "hi": [3.0]}}
        });
        apply_set_override(&mut doc, "seed=7").unwrap();
        apply_set_override(&mut doc, "command.calibrate.points=250").unwrap();
        apply_set_override(&mut doc, "spec.fiber_domain.hi.0=5.5").unwrap();
        assert_eq!(doc["seed"], 7);
        assert_eq!(doc["command"]["calibrate"]["points"], 250);
        assert_eq!(doc["spec"]["fiber_domain"]["hi"][0], 5.5);
        assert!(apply_set_override(&mut doc, "nonsense").is_err());
        assert!(apply_set_override(&mut doc, "spec.fiber_domain.hi.7=1").is_err());
    }

    #[test]
    fn selftest_suites_pass() {
        let report = run_selftest(500, 42).unwrap();
        assert!(report.passed);
        assert!(report.cauchy_binet_max_rel_dev <= 1e-9);
        assert!(report.weighted_expansion_max_rel_dev <= 1e-9);
        assert_eq!(report.witness_subset_weighted, 3.0);
        assert_eq!(report.witness_full_product_form, 12.0);
    }

    #[test]
    fn run_calibrate_exits_zero_on_jlt() {
        let config = jlt_config(Command::Calibrate(CalibrateParams {
            points: 300,
            frames_per_point: 3,
        }));
        let outcome = run(config, Some(2)).unwrap();
        assert_eq!(outcome.exit_code, 0);
        let doc: serde_json::Value = serde_json::from_str(&outcome.document).unwrap();
        assert_eq!(doc["command"], "calibrate");
        assert_eq!(doc["coordinatewise_min"], true);
        assert!(doc["config"]["spec"]["q0"].is_array());
        assert!(doc["report"]["max_ratio"].as_f64().unwrap() <= 1.0 + 1e-9);
    }

    #[test]
    fn run_probe_exits_three_on_gap_spec() {
        let spec = NeckSpec::new(
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
        let config = RunConfig {
            spec,
            command: Command::Probe(ProbeParams {
                points: 400,
                frames_per_point: 3,
                restarts: 10,
                iters: 120,
            }),
            seed: 42,
            output: OutputSpec::default(),
        };
        let outcome = run(config, Some(2)).unwrap();
        assert_eq!(outcome.exit_code, 3);
        let doc: serde_json::Value = serde_json::from_str(&outcome.document).unwrap();
        assert_eq!(doc["coordinatewise_min"], false);
        let ratio = doc["report"]["witness"]["ratio"].as_f64().unwrap();
        assert!(ratio >= (2.0f64).sqrt() - 1e-6, "witness ratio {ratio}");
    }

    #[test]
    fn run_selftest_and_find_q0() {
        let config = jlt_config(Command::Selftest(SelftestParams { instances: 200 }));
        let outcome = run(config, Some(2)).unwrap();
        assert_eq!(outcome.exit_code, 0);

        let config = jlt_config(Command::FindQ0(FindQ0Params {
            grid: 65,
            refine_tol: 1e-9,
        }));
        let outcome = run(config, Some(1)).unwrap();
        assert_eq!(outcome.exit_code, 0);
        let doc: serde_json::Value = serde_json::from_str(&outcome.document).unwrap();
        assert!(doc["report"]["q0"][0].as_f64().unwrap().abs() <= 1e-8);
        assert_eq!(doc["report"]["coordinatewise_min"], true);
    }

    #[test]
    fn csv_summary_has_documented_header() {
        let mut config = jlt_config(Command::Calibrate(CalibrateParams {
            points: 50,
            frames_per_point: 2,
        }));
        config.output.format = Format::Csv;
        let outcome = run(config, Some(1)).unwrap();
        let mut lines = outcome.document.lines();
        let header = lines.next().unwrap();
        assert_eq!(
            header,
            "command,spec_id,seed,coordinatewise_min,q0,samples,max_ratio,violations,\
             best_ratio,baseline_volume,min_excess,defect,wall_time_s,config_json"
        );
        let row = lines.next().unwrap();
        assert!(row.starts_with("calibrate,"));
    }

    #[test]
    fn explicit_non_spd_metric_is_degeneracy_exit() {
        // h = s - 10 is negative everywhere in the window
        let spec = NeckSpec::new(
            2,
            1,
            1,
            vec![
                FactorProfile::Jlt { a: 1.0 },
                FactorProfile::Jlt { a: 1.0 },
            ],
            FiberMetric::Explicit {
                entries: vec![vec![crate::expr::Expr {
                    terms: vec![
                        crate::expr::Term {
                            coeff: 1.0,
                            factors: vec![crate::expr::Factor {
                                axis: 2,
                                kind: crate::expr::FactorKind::Pow { exp: 1 },
                            }],
                        },
                        crate::expr::Term {
                            coeff: -10.0,
                            factors: vec![],
                        },
                    ],
                }]],
            },
            BoxDomain::symmetric(3.0).unwrap(),
            Geometry::Sphere { n: 2 },
        )
        .unwrap();
        let config = RunConfig {
            spec,
            command: Command::Calibrate(CalibrateParams {
                points: 10,
                frames_per_point: 1,
            }),
            seed: 1,
            output: OutputSpec::default(),
        };
        let err = run(config, Some(1)).unwrap_err();
        assert_eq!(exit_code_for(&err), 2);
    }
}
