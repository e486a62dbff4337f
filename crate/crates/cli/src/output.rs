//! Emitted documents: JSON summaries (serialized with a fixed field order)
//! and hand-written CSV tables. Both are byte-deterministic for a given
//! config and seeds: floats print in shortest round-trip form and no
//! timestamps or environment details are recorded.

use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use cvqpt::tomography::{ElementEstimate, ShotRecord, ShotStats};

#[derive(Serialize)]
pub struct ComplexDoc {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for ComplexDoc {
    fn from(v: Complex64) -> Self {
        Self { re: v.re, im: v.im }
    }
}

#[derive(Serialize)]
pub struct PointDoc {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub z: f64,
}

impl From<[f64; 4]> for PointDoc {
    fn from(p: [f64; 4]) -> Self {
        Self {
            x: p[0],
            y: p[1],
            w: p[2],
            z: p[3],
        }
    }
}

#[derive(Serialize)]
pub struct ShotStatsDoc {
    pub m_runs: u64,
    pub counts_plus: u64,
    pub counts_minus: u64,
    pub counts_null: u64,
    pub rng_seed: u64,
}

impl From<ShotStats> for ShotStatsDoc {
    fn from(s: ShotStats) -> Self {
        Self {
            m_runs: s.m_runs,
            counts_plus: s.counts_plus,
            counts_minus: s.counts_minus,
            counts_null: s.counts_null,
            rng_seed: s.rng_seed,
        }
    }
}

#[derive(Serialize)]
pub struct ShotRecordDoc {
    pub sigma_x: ShotStatsDoc,
    pub sigma_y: ShotStatsDoc,
}

impl From<ShotRecord> for ShotRecordDoc {
    fn from(r: ShotRecord) -> Self {
        Self {
            sigma_x: r.sigma_x.into(),
            sigma_y: r.sigma_y.into(),
        }
    }
}

#[derive(Serialize)]
pub struct EstimateDoc {
    pub command: &'static str,
    pub kernel: String,
    pub point: PointDoc,
    pub value: ComplexDoc,
    pub reference: ComplexDoc,
    pub depth: u32,
    pub region_widths: [f64; 4],
    pub quad_err: f64,
    pub shots: Option<ShotRecordDoc>,
}

#[derive(Serialize)]
pub struct ScanSummaryDoc {
    pub command: &'static str,
    pub kernel: String,
    pub points: usize,
    pub failures: usize,
    /// Largest relative deviation from the reference kernel, over points
    /// where the reference is meaningfully nonzero.
    pub e_max: Option<f64>,
    /// Largest absolute deviation from the reference kernel.
    pub e_max_abs: Option<f64>,
    pub max_depth: Option<u32>,
    pub csv: String,
}

#[derive(Serialize)]
pub struct ChoiReportDoc {
    pub command: &'static str,
    pub kernel: String,
    pub lambda: f64,
    pub extent: f64,
    pub n_points: usize,
    pub mesh_points: usize,
    pub hermitian_defect: f64,
    pub defect_exceeds_tolerance: bool,
    pub trace_distance: f64,
    pub fidelity_lower_bound: f64,
    pub truncation_mass: f64,
}

#[derive(Serialize)]
pub struct ShotStudyDoc {
    pub command: &'static str,
    pub kernel: String,
    pub point: PointDoc,
    pub m_runs: u64,
    pub accuracy: Option<f64>,
    pub failure_probability: Option<f64>,
    pub seeds: u64,
    /// Seeds whose first-channel error exceeded `accuracy`; absent without
    /// an accuracy target.
    pub failures: Option<u64>,
    pub failure_rate: Option<f64>,
    pub std_re: f64,
    pub std_im: f64,
    pub csv: String,
}

/// Quote a CSV field if it contains a delimiter, quote, or newline.
fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

pub const SCAN_CSV_HEADER: &str =
    "x,y,w,z,re_est,im_est,re_true,im_true,depth,width_x,width_y,width_w,width_z,quad_err,error";

/// One scan CSV row. Failed points keep their coordinates and carry the
/// error message in the last column, with every result column empty.
pub fn scan_row(
    point: [f64; 4],
    reference: Complex64,
    outcome: &Result<ElementEstimate, impl std::fmt::Display>,
) -> String {
    let coords = format!("{},{},{},{}", point[0], point[1], point[2], point[3]);
    match outcome {
        Ok(estimate) => {
            let w = estimate.region.widths();
            format!(
                "{coords},{},{},{},{},{},{},{},{},{},{},",
                estimate.value.re,
                estimate.value.im,
                reference.re,
                reference.im,
                estimate.depth,
                w[0],
                w[1],
                w[2],
                w[3],
                estimate.quad_err,
            )
        }
        Err(error) => format!(
            "{coords},,,{},{},,,,,,,{}",
            reference.re,
            reference.im,
            csv_escape(&error.to_string())
        ),
    }
}

pub const SHOT_CSV_HEADER: &str = "seed,re_est,im_est,err_re,err_im,failed";

pub fn shot_row(seed: u64, value: Complex64, reference: Complex64, failed: Option<bool>) -> String {
    format!(
        "{seed},{},{},{},{},{}",
        value.re,
        value.im,
        value.re - reference.re,
        value.im - reference.im,
        match failed {
            Some(true) => "1",
            Some(false) => "0",
            None => "",
        }
    )
}

/// Serialize a document with a trailing newline, ready to write and print.
pub fn to_json_bytes<T: Serialize>(doc: &T) -> String {
    let mut text = serde_json::to_string_pretty(doc).expect("documents always serialize");
    text.push('\n');
    text
}

pub fn write_file(path: &Path, contents: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)
}
