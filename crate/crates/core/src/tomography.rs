//! The selective measurement protocol: expectation values, element
//! estimation, region refinement and shot-noise simulation.
//!
//! One element measurement is configured by translation gates placing the
//! probed point at `(a, b, c, d)` and squeezing gates `r_a..r_d` that set how
//! far the detector window and probe support are compressed around it. The
//! squeezings are in one-to-one correspondence with an axis-aligned region in
//! process-coordinate space ([`gates_from_region`] / [`region_from_gates`]);
//! all higher layers speak in regions and derive gates on demand.
//!
//! The estimator averages the kernel over a region, so its output only equals
//! the pointwise value where the kernel is flat at that scale;
//! [`refine_region`] shrinks regions geometrically until a flatness test
//! accepts, and [`scan_mesh`] runs that refinement over a whole mesh of
//! points, optionally layering simulated finite-shot readout on top.

mod expectation;
mod refine;
mod shots;

pub use expectation::{
    click_probability, estimate_element, estimator_normalization, expectation_sigma_x,
    expectation_sigma_y, Expectation,
};
pub use refine::{refine_region, scan_mesh, RefinementOptions, ShotCount, ShotPlan};
pub use shots::{chernoff_shots, simulate_shots};

use num_complex::Complex64;
use thiserror::Error;

use crate::probe::ProbeState;
use crate::quadrature::QuadratureError;

#[derive(Debug, Error)]
pub enum TomographyError {
    #[error("detector window width must be positive and finite, got {0}")]
    BadDetector(f64),
    #[error("region width on axis {axis} must be positive and finite, got {width}")]
    BadRegionWidth { axis: usize, width: f64 },
    #[error("region center on axis {axis} must be finite, got {value}")]
    BadRegionCenter { axis: usize, value: f64 },
    #[error("gate parameter {name} must be finite, got {value}")]
    BadGate { name: &'static str, value: f64 },
    #[error("invalid refinement options: {0}")]
    BadOptions(String),
    #[error("{what} = {value} lies outside its physical range by more than the quadrature tolerance {tolerance:e}; the kernel is not a physical channel here")]
    Unphysical {
        what: &'static str,
        value: f64,
        tolerance: f64,
    },
    #[error(
        "flatness condition not met at depth {depth}: worst deviation ratio {worst_ratio} > {epsilon} (last region widths {widths:?})"
    )]
    NonConvergence {
        depth: u32,
        worst_ratio: f64,
        epsilon: f64,
        widths: [f64; 4],
        last: Box<ElementEstimate>,
    },
    #[error("shot count must be at least 1")]
    BadShotCount,
    #[error("confidence parameters must satisfy epsilon > 0 and 0 < p < 1, got epsilon = {epsilon}, p = {p}")]
    BadConfidence { epsilon: f64, p: f64 },
    #[error("normalization constant must be positive and finite, got {0}")]
    BadNormalization(f64),
    #[error("required shot count {raw:e} overflows the supported range")]
    ShotCountOverflow { raw: f64 },
    #[error("total squeezing {0} is too large to scale a finite-shot estimate")]
    SqueezingOverflow(f64),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Narrow position detector: clicks when the measured quadrature falls in a
/// window of width `delta` around zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorModel {
    delta: f64,
}

impl DetectorModel {
    pub fn new(delta: f64) -> Result<Self, TomographyError> {
        if !delta.is_finite() || delta <= 0.0 {
            return Err(TomographyError::BadDetector(delta));
        }
        Ok(Self { delta })
    }

    /// Window width.
    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Translation and squeezing gate parameters of one element measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub r_a: f64,
    pub r_b: f64,
    pub r_c: f64,
    pub r_d: f64,
}

impl GateConfig {
    /// Sum of the four squeezing parameters; the readout signal scales as
    /// `exp(-total_squeezing / 2)`.
    pub fn total_squeezing(&self) -> f64 {
        self.r_a + self.r_b + self.r_c + self.r_d
    }

    pub(crate) fn validate(&self) -> Result<(), TomographyError> {
        for (name, value) in [
            ("a", self.a),
            ("b", self.b),
            ("c", self.c),
            ("d", self.d),
            ("r_a", self.r_a),
            ("r_b", self.r_b),
            ("r_c", self.r_c),
            ("r_d", self.r_d),
        ] {
            if !value.is_finite() {
                return Err(TomographyError::BadGate { name, value });
            }
        }
        Ok(())
    }
}

/// Axis-aligned box in the four process coordinates `(x, y, w, z)` over which
/// one element estimate averages the kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region4 {
    center: [f64; 4],
    widths: [f64; 4],
}

impl Region4 {
    pub fn new(center: [f64; 4], widths: [f64; 4]) -> Result<Self, TomographyError> {
        for axis in 0..4 {
            if !center[axis].is_finite() {
                return Err(TomographyError::BadRegionCenter {
                    axis,
                    value: center[axis],
                });
            }
            if !widths[axis].is_finite() || widths[axis] <= 0.0 {
                return Err(TomographyError::BadRegionWidth {
                    axis,
                    width: widths[axis],
                });
            }
        }
        Ok(Self { center, widths })
    }

    pub fn center(&self) -> [f64; 4] {
        self.center
    }

    pub fn widths(&self) -> [f64; 4] {
        self.widths
    }

    pub fn volume(&self) -> f64 {
        self.widths.iter().product()
    }
}

/// Gates that realize a measurement averaging over `region`: translations to
/// its center, squeezings compressing the detector window (axes x, z) and the
/// probe support (axes y, w) to the region widths.
pub fn gates_from_region(
    region: &Region4,
    detector: &DetectorModel,
    probe: &ProbeState,
) -> GateConfig {
    let [ca, cb, cc, cd] = region.center();
    let [wa, wb, wc, wd] = region.widths();
    GateConfig {
        a: ca,
        b: cb,
        c: cc,
        d: cd,
        r_a: (detector.delta() / wa).ln(),
        r_b: (probe.delta_support() / wb).ln(),
        r_c: (probe.delta_support() / wc).ln(),
        r_d: (detector.delta() / wd).ln(),
    }
}

/// Inverse of [`gates_from_region`]: the region a gate configuration
/// averages over.
pub fn region_from_gates(
    gates: &GateConfig,
    detector: &DetectorModel,
    probe: &ProbeState,
) -> Result<Region4, TomographyError> {
    gates.validate()?;
    let delta = detector.delta();
    let support = probe.delta_support();
    Region4::new(
        [gates.a, gates.b, gates.c, gates.d],
        [
            (-gates.r_a).exp() * delta,
            (-gates.r_b).exp() * support,
            (-gates.r_c).exp() * support,
            (-gates.r_d).exp() * delta,
        ],
    )
}

/// Measurement counts of one three-outcome readout channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShotStats {
    /// Number of simulated runs.
    pub m_runs: u64,
    /// Runs with detector click and qubit outcome +1.
    pub counts_plus: u64,
    /// Runs with detector click and qubit outcome -1.
    pub counts_minus: u64,
    /// Runs with no detector click.
    pub counts_null: u64,
    /// Seed the outcome stream was derived from.
    pub rng_seed: u64,
}

impl ShotStats {
    /// Empirical value of the signed click observable, `(N+ - N-) / M`.
    pub fn empirical_mean(&self) -> f64 {
        (self.counts_plus as f64 - self.counts_minus as f64) / self.m_runs as f64
    }
}

/// Shot statistics of the two readout channels behind one complex estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShotRecord {
    pub sigma_x: ShotStats,
    pub sigma_y: ShotStats,
}

/// One element estimate: the protocol's reconstruction of the kernel at the
/// center of `region`.
#[derive(Clone, Debug)]
pub struct ElementEstimate {
    /// Estimated kernel value.
    pub value: Complex64,
    /// Region whose average produced the value.
    pub region: Region4,
    /// Refinement iterations performed before the flatness test accepted;
    /// zero for direct estimates.
    pub depth: u32,
    /// Deterministic integration error at the estimate scale, from quadrature
    /// order escalation.
    pub quad_err: f64,
    /// Present when finite-shot readout was simulated.
    pub shots: Option<ShotRecord>,
}
