//! Command implementations: wire a validated config into the library
//! pipeline, write the result files, and print the summary document.

use std::path::{Path, PathBuf};

use cvqpt::choi::{build_choi_grid, compare_with_grid, ChoiError, HERMITIAN_DEFECT_TOLERANCE};
use cvqpt::tomography::{
    chernoff_shots, estimator_normalization, gates_from_region, refine_region, scan_mesh,
    simulate_shots, ShotCount, TomographyError,
};

use crate::config::{ConfigError, FileConfig};
use crate::output::{
    scan_row, shot_row, to_json_bytes, write_file, ChoiReportDoc, EstimateDoc, ScanSummaryDoc,
    ShotStudyDoc, SCAN_CSV_HEADER, SHOT_CSV_HEADER,
};

/// A command failure, classified for the process exit code.
#[derive(Debug)]
pub enum RunError {
    /// Bad configuration or arguments — exit code 1.
    Validation(String),
    /// The computation itself failed — exit code 2.
    Numerical(String),
    /// The flatness refinement hit its depth limit — exit code 3.
    NonConvergence(String),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Validation(_) => 1,
            RunError::Numerical(_) => 2,
            RunError::NonConvergence(_) => 3,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Validation(m) => write!(f, "invalid configuration: {m}"),
            RunError::Numerical(m) => write!(f, "numerical failure: {m}"),
            RunError::NonConvergence(m) => write!(f, "non-convergence: {m}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Validation(e.to_string())
    }
}

fn classify_tomography(e: TomographyError) -> RunError {
    match e {
        TomographyError::NonConvergence { .. } => RunError::NonConvergence(e.to_string()),
        TomographyError::BadDetector(_)
        | TomographyError::BadRegionWidth { .. }
        | TomographyError::BadRegionCenter { .. }
        | TomographyError::BadGate { .. }
        | TomographyError::BadOptions(_)
        | TomographyError::BadShotCount
        | TomographyError::BadConfidence { .. }
        | TomographyError::BadNormalization(_) => RunError::Validation(e.to_string()),
        TomographyError::Unphysical { .. }
        | TomographyError::ShotCountOverflow { .. }
        | TomographyError::SqueezingOverflow(_)
        | TomographyError::Quadrature(_) => RunError::Numerical(e.to_string()),
    }
}

fn classify_choi(e: ChoiError) -> RunError {
    match e {
        ChoiError::Quadrature(_) => RunError::Numerical(e.to_string()),
        _ => RunError::Validation(e.to_string()),
    }
}

fn io_error(path: &Path, e: std::io::Error) -> RunError {
    RunError::Numerical(format!("cannot write {}: {e}", path.display()))
}

/// Resolved output locations: `--out` beats `[output] dir`, which beats
/// `out/`.
pub struct OutputPlan {
    dir: PathBuf,
    csv: Option<String>,
    summary: Option<String>,
}

impl OutputPlan {
    pub fn new(config: &FileConfig, out_flag: Option<&Path>) -> Self {
        let dir = out_flag
            .map(Path::to_path_buf)
            .or_else(|| config.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        Self {
            dir,
            csv: config.output.csv.clone(),
            summary: config.output.summary.clone(),
        }
    }

    fn csv_path(&self, default: &str) -> PathBuf {
        self.dir.join(self.csv.as_deref().unwrap_or(default))
    }

    fn summary_path(&self, default: &str) -> PathBuf {
        self.dir.join(self.summary.as_deref().unwrap_or(default))
    }
}

fn emit_summary(path: &Path, json: &str) -> Result<(), RunError> {
    write_file(path, json).map_err(|e| io_error(path, e))?;
    print!("{json}");
    Ok(())
}

pub fn run_estimate(
    config: &FileConfig,
    out: &OutputPlan,
    _strict: bool,
) -> Result<(), RunError> {
    let kernel = config.kernel()?;
    let detector = config.detector()?;
    let probe = config.probe()?;
    let options = config.refinement()?;
    let point = config.point()?;
    let plan = config.shot_plan()?;

    let mut results = scan_mesh(
        &kernel,
        &[point],
        &detector,
        &probe,
        &options,
        plan.as_ref(),
    );
    let estimate = results
        .pop()
        .expect("one point in, one result out")
        .map_err(classify_tomography)?;

    let doc = EstimateDoc {
        command: "estimate",
        kernel: kernel.name().to_string(),
        point: point.into(),
        value: estimate.value.into(),
        reference: kernel.eval(point[0], point[1], point[2], point[3]).into(),
        depth: estimate.depth,
        region_widths: estimate.region.widths(),
        quad_err: estimate.quad_err,
        shots: estimate.shots.map(Into::into),
    };
    emit_summary(&out.summary_path("estimate.json"), &to_json_bytes(&doc))
}

/// Reference magnitude below which relative error is not measured.
const RELATIVE_ERROR_FLOOR: f64 = 1e-12;

pub fn run_scan(config: &FileConfig, out: &OutputPlan, strict: bool) -> Result<(), RunError> {
    let kernel = config.kernel()?;
    let detector = config.detector()?;
    let probe = config.probe()?;
    let options = config.refinement()?;
    let points = config.mesh_points()?;
    if points.is_empty() {
        return Err(RunError::Validation("mesh: expands to no points".into()));
    }
    let plan = config.shot_plan()?;

    let results = scan_mesh(&kernel, &points, &detector, &probe, &options, plan.as_ref());

    let mut csv = String::from(SCAN_CSV_HEADER);
    csv.push('\n');
    let mut failures = 0usize;
    let mut worst_nonconvergence = false;
    let mut e_max: Option<f64> = None;
    let mut e_max_abs: Option<f64> = None;
    let mut max_depth: Option<u32> = None;
    for (point, outcome) in points.iter().zip(&results) {
        let reference = kernel.eval(point[0], point[1], point[2], point[3]);
        csv.push_str(&scan_row(*point, reference, outcome));
        csv.push('\n');
        match outcome {
            Ok(estimate) => {
                let abs = (estimate.value - reference).norm();
                e_max_abs = Some(e_max_abs.map_or(abs, |m: f64| m.max(abs)));
                if reference.norm() > RELATIVE_ERROR_FLOOR {
                    let rel = abs / reference.norm();
                    e_max = Some(e_max.map_or(rel, |m: f64| m.max(rel)));
                }
                max_depth = Some(max_depth.map_or(estimate.depth, |d| d.max(estimate.depth)));
            }
            Err(error) => {
                failures += 1;
                if matches!(error, TomographyError::NonConvergence { .. }) {
                    worst_nonconvergence = true;
                }
            }
        }
    }

    let csv_path = out.csv_path("scan.csv");
    write_file(&csv_path, &csv).map_err(|e| io_error(&csv_path, e))?;

    let doc = ScanSummaryDoc {
        command: "scan",
        kernel: kernel.name().to_string(),
        points: points.len(),
        failures,
        e_max,
        e_max_abs,
        max_depth,
        csv: csv_path.display().to_string(),
    };
    emit_summary(&out.summary_path("summary.json"), &to_json_bytes(&doc))?;

    if strict && failures > 0 {
        let message = format!("{failures} of {} mesh points failed", points.len());
        return Err(if worst_nonconvergence {
            RunError::NonConvergence(message)
        } else {
            RunError::Numerical(message)
        });
    }
    Ok(())
}

pub fn run_choi_compare(
    config: &FileConfig,
    out: &OutputPlan,
    strict: bool,
) -> Result<(), RunError> {
    let kernel = config.kernel()?;
    let detector = config.detector()?;
    let probe = config.probe()?;
    let options = config.refinement()?;
    let points = config.mesh_points()?;
    let plan = config.shot_plan()?;
    let choi = config.choi()?;

    let results = scan_mesh(&kernel, &points, &detector, &probe, &options, plan.as_ref());
    let mut estimates = Vec::with_capacity(results.len());
    for (index, outcome) in results.into_iter().enumerate() {
        match outcome {
            Ok(estimate) => estimates.push(estimate),
            Err(error) => {
                let at = points[index];
                let message = format!(
                    "mesh point {index} at ({}, {}, {}, {}) failed: {error}",
                    at[0], at[1], at[2], at[3]
                );
                return Err(match error {
                    TomographyError::NonConvergence { .. } => RunError::NonConvergence(message),
                    _ => RunError::Numerical(message),
                });
            }
        }
    }

    let truth = build_choi_grid(&kernel, choi.lambda, choi.extent, choi.n_points)
        .map_err(classify_choi)?;
    let defect = truth.hermitian_defect();
    let defect_exceeds_tolerance = defect > HERMITIAN_DEFECT_TOLERANCE;
    if defect_exceeds_tolerance {
        eprintln!(
            "warning: true-state Hermitian defect {defect:e} exceeds {HERMITIAN_DEFECT_TOLERANCE:e}; \
             the kernel does not describe a symmetry-respecting channel"
        );
        if strict {
            return Err(RunError::Numerical(format!(
                "Hermitian defect {defect:e} exceeds {HERMITIAN_DEFECT_TOLERANCE:e} (strict mode)"
            )));
        }
    }
    let report = compare_with_grid(&kernel, &estimates, &truth).map_err(classify_choi)?;

    let doc = ChoiReportDoc {
        command: "choi-compare",
        kernel: kernel.name().to_string(),
        lambda: choi.lambda,
        extent: choi.extent,
        n_points: choi.n_points,
        mesh_points: points.len(),
        hermitian_defect: defect,
        defect_exceeds_tolerance,
        trace_distance: report.trace_distance,
        fidelity_lower_bound: report.fidelity_lower_bound,
        truncation_mass: report.truncation_mass,
    };
    emit_summary(&out.summary_path("report.json"), &to_json_bytes(&doc))
}

pub fn run_shot_study(
    config: &FileConfig,
    out: &OutputPlan,
    _strict: bool,
) -> Result<(), RunError> {
    let kernel = config.kernel()?;
    let detector = config.detector()?;
    let probe = config.probe()?;
    let options = config.refinement()?;
    let point = config.point()?;
    let shots = config.shots_required()?;
    if shots.study_seeds < 2 {
        return Err(RunError::Validation(
            "shots.study_seeds: a study needs at least 2 seeds".into(),
        ));
    }

    let refined =
        refine_region(&kernel, point, &detector, &probe, &options).map_err(classify_tomography)?;
    let region = refined.region;
    let total_squeezing = gates_from_region(&region, &detector, &probe).total_squeezing();
    let normalization = estimator_normalization(&detector, &probe);

    // Unlike a scan's shot plan, a study may combine an explicit run count
    // with an accuracy threshold (the latter then only grades failures).
    let m_runs = match shots.m_runs {
        Some(0) => return Err(RunError::Validation("shots.m_runs: must be at least 1".into())),
        Some(m) => m,
        None => {
            let count = crate::config::shot_count(shots)?;
            match count {
                ShotCount::Explicit(m) => m,
                ShotCount::ChernoffBound {
                    accuracy,
                    failure_probability,
                } => chernoff_shots(accuracy, failure_probability, normalization, total_squeezing)
                    .map_err(classify_tomography)?,
            }
        }
    };

    let reference = kernel.eval(point[0], point[1], point[2], point[3]);
    let mut csv = String::from(SHOT_CSV_HEADER);
    csv.push('\n');
    let mut values = Vec::with_capacity(shots.study_seeds as usize);
    let mut failures = 0u64;
    for offset in 0..shots.study_seeds {
        let seed = shots.seed.wrapping_add(offset);
        let estimate = simulate_shots(&kernel, &region, &detector, &probe, m_runs, seed)
            .map_err(classify_tomography)?;
        let failed = shots
            .accuracy
            .map(|accuracy| (estimate.value.re - reference.re).abs() > accuracy);
        if failed == Some(true) {
            failures += 1;
        }
        csv.push_str(&shot_row(seed, estimate.value, reference, failed));
        csv.push('\n');
        values.push(estimate.value);
    }

    let csv_path = out.csv_path("shots.csv");
    write_file(&csv_path, &csv).map_err(|e| io_error(&csv_path, e))?;

    let doc = ShotStudyDoc {
        command: "shot-study",
        kernel: kernel.name().to_string(),
        point: point.into(),
        m_runs,
        accuracy: shots.accuracy,
        failure_probability: shots.failure_probability,
        seeds: shots.study_seeds,
        failures: shots.accuracy.map(|_| failures),
        failure_rate: shots
            .accuracy
            .map(|_| failures as f64 / shots.study_seeds as f64),
        std_re: sample_std(values.iter().map(|v| v.re)),
        std_im: sample_std(values.iter().map(|v| v.im)),
        csv: csv_path.display().to_string(),
    };
    emit_summary(&out.summary_path("study.json"), &to_json_bytes(&doc))
}

fn sample_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    let mean = values.clone().sum::<f64>() / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1) as f64).sqrt()
}

pub fn list_kernels() {
    println!("built-in kernels (config section [kernel]):");
    println!("  fourier              exp(i (x y - w z)) / (2 pi); no parameters");
    println!("  constant             re + i * im at every point; parameters: re, im (default 0)");
    println!("  fractional-fourier   rotation propagator; parameters: theta (radians, not a multiple of pi)");
    println!("  expression           arithmetic in x, y, w, z; parameters: expr");
    println!();
    println!("expression grammar: operators + - * / ^, constants i and pi,");
    println!("functions exp, sin, cos; see docs/kernel-expressions.md.");
    println!("optional hint overrides for any kernel: frequency (fixed) or");
    println!("frequency_scale (grows with the largest coordinate).");
}
