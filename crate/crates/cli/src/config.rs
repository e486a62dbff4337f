//! Job configuration: a TOML file with nested sections, deserialized
//! leniently and then validated into domain objects with field-path error
//! messages.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Deserialize;

use cvqpt::kernels::{
    constant_kernel, fourier_kernel, fractional_fourier_kernel, user_kernel_from_expression,
    OscillationHint, ProcessKernel,
};
use cvqpt::probe::{make_probe, ProbeState};
use cvqpt::tomography::{DetectorModel, RefinementOptions, ShotCount, ShotPlan};

/// A configuration problem, carrying the dotted path of the offending field.
#[derive(Debug)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn missing(path: &str) -> ConfigError {
    ConfigError::new(path, "required section or field is missing")
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub kernel: Option<KernelSection>,
    pub detector: Option<DetectorSection>,
    pub probe: Option<ProbeSection>,
    pub refinement: Option<RefinementSection>,
    pub mesh: Option<MeshSection>,
    pub point: Option<PointSection>,
    pub shots: Option<ShotsSection>,
    pub choi: Option<ChoiSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub name: String,
    /// Real part of the constant kernel.
    pub re: Option<f64>,
    /// Imaginary part of the constant kernel.
    pub im: Option<f64>,
    /// Rotation angle of the fractional transform kernel.
    pub theta: Option<f64>,
    /// Source of an expression kernel.
    pub expr: Option<String>,
    /// Oscillation-hint override: phase frequency grows with this slope in
    /// the largest coordinate.
    pub frequency_scale: Option<f64>,
    /// Oscillation-hint override: fixed phase frequency.
    pub frequency: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    /// Detector window width.
    pub delta: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    /// Probe support width.
    pub support: Option<f64>,
    /// Edge amplitude threshold of the probe shape.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    0.05
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementSection {
    /// Flatness tolerance.
    pub epsilon: Option<f64>,
    #[serde(default = "default_max_depth")]
    pub max_depth: u32,
    pub subset_size: Option<usize>,
    pub abs_floor: Option<f64>,
    #[serde(default)]
    pub subset_seed: u64,
}

fn default_max_depth() -> u32 {
    12
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub x: Option<AxisSpec>,
    pub y: Option<AxisSpec>,
    pub w: Option<AxisSpec>,
    pub z: Option<AxisSpec>,
}

/// One mesh axis: a uniform range, a fixed coordinate, or a link that copies
/// another axis point-by-point (for diagonal scans).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub count: Option<usize>,
    pub fixed: Option<f64>,
    pub link: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSection {
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub w: Option<f64>,
    pub z: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotsSection {
    /// Target accuracy of the concentration bound.
    pub accuracy: Option<f64>,
    /// Admissible failure probability of the concentration bound.
    pub failure_probability: Option<f64>,
    /// Explicit per-point run count; mutually exclusive with the bound pair.
    pub m_runs: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    /// Number of independent seeds a shot study simulates.
    #[serde(default = "default_study_seeds")]
    pub study_seeds: u64,
}

fn default_study_seeds() -> u64 {
    200
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChoiSection {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_extent")]
    pub extent: f64,
    #[serde(default = "default_n_points")]
    pub n_points: usize,
}

fn default_lambda() -> f64 {
    0.8
}

fn default_extent() -> f64 {
    4.0
}

fn default_n_points() -> usize {
    24
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Output directory; overridden by `--out`.
    pub dir: Option<PathBuf>,
    /// Mesh / per-seed table filename.
    pub csv: Option<String>,
    /// Summary / report document filename.
    pub summary: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ConfigError::new("--config", format!("cannot read {}: {e}", path.display()))
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::new("--config", e.message().to_string()))
    }

    pub fn kernel(&self) -> Result<ProcessKernel, ConfigError> {
        let section = self.kernel.as_ref().ok_or_else(|| missing("kernel"))?;
        let reject_params = |allowed: &[&str]| -> Result<(), ConfigError> {
            for (name, set) in [
                ("re", section.re.is_some()),
                ("im", section.im.is_some()),
                ("theta", section.theta.is_some()),
                ("expr", section.expr.is_some()),
            ] {
                if set && !allowed.contains(&name) {
                    return Err(ConfigError::new(
                        format!("kernel.{name}"),
                        format!("not a parameter of the `{}` kernel", section.name),
                    ));
                }
            }
            Ok(())
        };
        let mut kernel = match section.name.as_str() {
            "fourier" => {
                reject_params(&[])?;
                fourier_kernel()
            }
            "constant" => {
                reject_params(&["re", "im"])?;
                let re = section
                    .re
                    .ok_or_else(|| missing("kernel.re"))?;
                let im = section.im.unwrap_or(0.0);
                constant_kernel(Complex64::new(re, im))
                    .map_err(|e| ConfigError::new("kernel", e.to_string()))?
            }
            "fractional-fourier" => {
                reject_params(&["theta"])?;
                let theta = section.theta.ok_or_else(|| missing("kernel.theta"))?;
                fractional_fourier_kernel(theta)
                    .map_err(|e| ConfigError::new("kernel.theta", e.to_string()))?
            }
            "expression" => {
                reject_params(&["expr"])?;
                let expr = section.expr.as_ref().ok_or_else(|| missing("kernel.expr"))?;
                user_kernel_from_expression(expr)
                    .map_err(|e| ConfigError::new("kernel.expr", e.to_string()))?
            }
            other => {
                return Err(ConfigError::new(
                    "kernel.name",
                    format!(
                        "unknown kernel `{other}`; built-ins are fourier, constant, \
                         fractional-fourier, expression"
                    ),
                ))
            }
        };
        match (section.frequency, section.frequency_scale) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::new(
                    "kernel.frequency",
                    "give either `frequency` or `frequency_scale`, not both",
                ))
            }
            (Some(f), None) => kernel = kernel.with_hint(OscillationHint::Fixed(f)),
            (None, Some(s)) => kernel = kernel.with_hint(OscillationHint::CoordinateScaled(s)),
            (None, None) => {}
        }
        Ok(kernel)
    }

    pub fn detector(&self) -> Result<DetectorModel, ConfigError> {
        let delta = self
            .detector
            .as_ref()
            .ok_or_else(|| missing("detector"))?
            .delta
            .ok_or_else(|| missing("detector.delta"))?;
        DetectorModel::new(delta).map_err(|e| ConfigError::new("detector.delta", e.to_string()))
    }

    pub fn probe(&self) -> Result<ProbeState, ConfigError> {
        let section = self.probe.as_ref().ok_or_else(|| missing("probe"))?;
        let support = section.support.ok_or_else(|| missing("probe.support"))?;
        make_probe(support, section.threshold)
            .map_err(|e| ConfigError::new("probe", e.to_string()))
    }

    pub fn refinement(&self) -> Result<RefinementOptions, ConfigError> {
        let section = self
            .refinement
            .as_ref()
            .ok_or_else(|| missing("refinement"))?;
        let epsilon = section
            .epsilon
            .ok_or_else(|| missing("refinement.epsilon"))?;
        let mut options = RefinementOptions::new(epsilon);
        options.max_depth = section.max_depth;
        options.subset_size = section.subset_size;
        options.abs_floor = section.abs_floor;
        options.subset_seed = section.subset_seed;
        Ok(options)
    }

    pub fn point(&self) -> Result<[f64; 4], ConfigError> {
        let section = self.point.as_ref().ok_or_else(|| missing("point"))?;
        Ok([
            section.x.ok_or_else(|| missing("point.x"))?,
            section.y.ok_or_else(|| missing("point.y"))?,
            section.w.ok_or_else(|| missing("point.w"))?,
            section.z.ok_or_else(|| missing("point.z"))?,
        ])
    }

    pub fn mesh_points(&self) -> Result<Vec<[f64; 4]>, ConfigError> {
        let section = self.mesh.as_ref().ok_or_else(|| missing("mesh"))?;
        build_mesh(section)
    }

    /// Shot plan for a scan; `None` when the config has no shot section.
    pub fn shot_plan(&self) -> Result<Option<ShotPlan>, ConfigError> {
        let Some(section) = self.shots.as_ref() else {
            return Ok(None);
        };
        Ok(Some(ShotPlan {
            count: shot_count(section)?,
            seed: section.seed,
        }))
    }

    /// Shot section, required (for shot studies).
    pub fn shots_required(&self) -> Result<&ShotsSection, ConfigError> {
        self.shots.as_ref().ok_or_else(|| missing("shots"))
    }

    pub fn choi(&self) -> Result<&ChoiSection, ConfigError> {
        self.choi.as_ref().ok_or_else(|| missing("choi"))
    }
}

pub fn shot_count(section: &ShotsSection) -> Result<ShotCount, ConfigError> {
    match (section.m_runs, section.accuracy, section.failure_probability) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => Err(ConfigError::new(
            "shots.m_runs",
            "give either an explicit run count or the accuracy/failure_probability pair, not both",
        )),
        (Some(m), None, None) => {
            if m == 0 {
                return Err(ConfigError::new("shots.m_runs", "must be at least 1"));
            }
            Ok(ShotCount::Explicit(m))
        }
        (None, Some(accuracy), Some(failure_probability)) => Ok(ShotCount::ChernoffBound {
            accuracy,
            failure_probability,
        }),
        (None, Some(_), None) => Err(missing("shots.failure_probability")),
        (None, None, _) => Err(missing("shots.accuracy")),
    }
}

const AXIS_NAMES: [&str; 4] = ["x", "y", "w", "z"];

enum ResolvedAxis {
    Coords(Vec<f64>),
    Link(usize),
}

fn resolve_axis(name: &str, spec: &AxisSpec) -> Result<ResolvedAxis, ConfigError> {
    let path = |field: &str| format!("mesh.{name}.{field}");
    let is_range = spec.start.is_some() || spec.stop.is_some() || spec.count.is_some();
    match (is_range, spec.fixed, &spec.link) {
        (true, None, None) => {
            let start = spec.start.ok_or_else(|| missing(&path("start")))?;
            let count = spec.count.ok_or_else(|| missing(&path("count")))?;
            if count == 0 {
                return Err(ConfigError::new(path("count"), "must be at least 1"));
            }
            if count == 1 {
                return Ok(ResolvedAxis::Coords(vec![start]));
            }
            let stop = spec.stop.ok_or_else(|| missing(&path("stop")))?;
            if !(start.is_finite() && stop.is_finite()) || stop <= start {
                return Err(ConfigError::new(
                    path("stop"),
                    "range must be finite with stop > start",
                ));
            }
            let step = (stop - start) / (count - 1) as f64;
            Ok(ResolvedAxis::Coords(
                (0..count).map(|i| start + i as f64 * step).collect(),
            ))
        }
        (false, Some(v), None) => {
            if !v.is_finite() {
                return Err(ConfigError::new(path("fixed"), "must be finite"));
            }
            Ok(ResolvedAxis::Coords(vec![v]))
        }
        (false, None, Some(target)) => {
            let idx = AXIS_NAMES
                .iter()
                .position(|n| n == target)
                .ok_or_else(|| {
                    ConfigError::new(path("link"), format!("unknown axis `{target}`"))
                })?;
            if target == name {
                return Err(ConfigError::new(path("link"), "axis cannot link to itself"));
            }
            Ok(ResolvedAxis::Link(idx))
        }
        _ => Err(ConfigError::new(
            format!("mesh.{name}"),
            "give exactly one of start/stop/count, fixed, or link",
        )),
    }
}

/// Expand a mesh section into the ordered point list: the cartesian product
/// of the independent axes (x outermost, z innermost), with linked axes
/// copying their target's value at every point.
fn build_mesh(section: &MeshSection) -> Result<Vec<[f64; 4]>, ConfigError> {
    let specs = [&section.x, &section.y, &section.w, &section.z];
    let mut resolved = Vec::with_capacity(4);
    for (name, spec) in AXIS_NAMES.iter().zip(specs) {
        let spec = spec
            .as_ref()
            .ok_or_else(|| missing(&format!("mesh.{name}")))?;
        resolved.push(resolve_axis(name, spec)?);
    }
    // Links must target independent axes (no chains, no cycles).
    let mut targets = BTreeMap::new();
    for (axis, r) in resolved.iter().enumerate() {
        if let ResolvedAxis::Link(target) = r {
            if matches!(resolved[*target], ResolvedAxis::Link(_)) {
                return Err(ConfigError::new(
                    format!("mesh.{}.link", AXIS_NAMES[axis]),
                    "cannot link to another linked axis",
                ));
            }
            targets.insert(axis, *target);
        }
    }
    let coords: Vec<&[f64]> = resolved
        .iter()
        .map(|r| match r {
            ResolvedAxis::Coords(c) => c.as_slice(),
            ResolvedAxis::Link(_) => &[],
        })
        .collect();
    let independent: Vec<usize> = (0..4).filter(|a| !targets.contains_key(a)).collect();
    let total: usize = independent.iter().map(|&a| coords[a].len()).product();
    let mut points = Vec::with_capacity(total);
    let mut indices = vec![0usize; independent.len()];
    loop {
        let mut point = [0.0; 4];
        for (slot, &axis) in independent.iter().enumerate() {
            point[axis] = coords[axis][indices[slot]];
        }
        for (&axis, &target) in &targets {
            point[axis] = point[target];
        }
        points.push(point);
        // Odometer increment, innermost (last independent axis) fastest.
        let mut slot = independent.len();
        loop {
            if slot == 0 {
                return Ok(points);
            }
            slot -= 1;
            indices[slot] += 1;
            if indices[slot] < coords[independent[slot]].len() {
                break;
            }
            indices[slot] = 0;
        }
    }
}
