//! Readout expectation values and the deterministic element estimator.
//!
//! Every readout quantity reduces to integrals of the form
//!
//! ```text
//!   ∫∫∫ psi(alpha) psi(beta)
//!       E(s0*xi + o0, s1*alpha + o1, s2*beta + o2, s3*xi + o3)  dxi dalpha dbeta
//! ```
//!
//! over the fixed box `[-delta/2, delta/2] x [-Delta/2, Delta/2]^2`, where
//! `xi` runs over the detector window and `alpha`, `beta` over the probe
//! support. The squeezing gates enter as the scales `s_i = exp(-r_i)` and the
//! translation gates as the offsets `o_i`; the signed-click expectations of
//! the two readout channels are the real and imaginary parts of one such
//! integral, and the click probability combines two more with pairwise-equal
//! arguments. Sharing a single mapped-integral routine keeps the channels
//! consistent with each other to rounding.

use num_complex::Complex64;

use crate::kernels::ProcessKernel;
use crate::probe::ProbeState;
use crate::quadrature::{escalated_order, gauss_nodes, suggest_order, QuadratureError};

use super::{gates_from_region, DetectorModel, ElementEstimate, GateConfig, Region4, TomographyError};

/// Absolute slack added to quadrature error estimates when testing whether a
/// probability sits inside its physical range, so that pure rounding noise on
/// an exactly-zero bound is never reported as an unphysical kernel.
const PHYSICALITY_ABS_TOL: f64 = 1e-12;

/// Fixed order for the reference normalization constant; far beyond the point
/// where the probe quadrature has converged to machine precision.
const NORMALIZATION_ORDER: usize = 64;

/// A scalar readout quantity together with its deterministic error estimate
/// from quadrature order escalation.
#[derive(Clone, Copy, Debug)]
pub struct Expectation {
    pub value: f64,
    pub quad_err: f64,
    pub nodes_used: usize,
}

/// Affine map from the integration coordinates `(xi, alpha, beta)` to the
/// four kernel arguments; `xi` drives both the first and last argument.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ArgMapping {
    scales: [f64; 4],
    offsets: [f64; 4],
}

impl ArgMapping {
    /// Mapping of the element measurement itself.
    fn element(gates: &GateConfig) -> Self {
        Self {
            scales: [
                (-gates.r_a).exp(),
                (-gates.r_b).exp(),
                (-gates.r_c).exp(),
                (-gates.r_d).exp(),
            ],
            offsets: [gates.a, gates.b, gates.c, gates.d],
        }
    }

    /// Mapping of the click branch in which both detector-side arguments use
    /// the `(a, r_a)` gates and both probe-side arguments the `(b, r_b)`
    /// gates.
    fn click_branch_ab(gates: &GateConfig) -> Self {
        let sa = (-gates.r_a).exp();
        let sb = (-gates.r_b).exp();
        Self {
            scales: [sa, sb, sb, sa],
            offsets: [gates.a, gates.b, gates.b, gates.a],
        }
    }

    /// Companion click branch built from the `(d, r_d)` and `(c, r_c)` gates.
    fn click_branch_dc(gates: &GateConfig) -> Self {
        let sd = (-gates.r_d).exp();
        let sc = (-gates.r_c).exp();
        Self {
            scales: [sd, sc, sc, sd],
            offsets: [gates.d, gates.c, gates.c, gates.d],
        }
    }

    /// Quadrature order for this mapping, from the kernel's oscillation hint
    /// at the farthest coordinate any argument reaches. The effective width
    /// counts the detector axis twice because `xi` feeds two arguments whose
    /// phases can accumulate.
    fn order(&self, kernel: &ProcessKernel, detector: &DetectorModel, probe: &ProbeState) -> usize {
        let half = [
            detector.delta() / 2.0,
            probe.delta_support() / 2.0,
            probe.delta_support() / 2.0,
            detector.delta() / 2.0,
        ];
        let mut max_coord: f64 = 0.0;
        for i in 0..4 {
            max_coord = max_coord.max(self.offsets[i].abs() + self.scales[i] * half[i]);
        }
        let width = ((self.scales[0] + self.scales[3]) * detector.delta())
            .max(self.scales[1] * probe.delta_support())
            .max(self.scales[2] * probe.delta_support());
        let frequency = kernel.oscillation_hint().frequency(max_coord);
        suggest_order(frequency, width)
    }
}

/// Gauss-Legendre sum of the mapped integrand at one order. The probe
/// amplitudes and weights are pre-tabulated per axis so the kernel evaluation
/// dominates the inner loop.
fn mapped_integral(
    kernel: &ProcessKernel,
    probe: &ProbeState,
    detector: &DetectorModel,
    mapping: &ArgMapping,
    order: usize,
) -> Result<Complex64, TomographyError> {
    let (nodes, weights) = gauss_nodes(order)?;
    let det_half = detector.delta() / 2.0;
    let probe_half = probe.delta_support() / 2.0;

    // Detector axis: abscissa xi_i with plain weights; the probe axes fold
    // psi into their weights.
    let xi: Vec<(f64, f64)> = nodes
        .iter()
        .zip(weights)
        .map(|(&t, &w)| (t * det_half, w * det_half))
        .collect();
    let probe_axis: Vec<(f64, f64)> = nodes
        .iter()
        .zip(weights)
        .map(|(&t, &w)| {
            let x = t * probe_half;
            (x, w * probe_half * probe.amplitude(x))
        })
        .collect();

    let [s0, s1, s2, s3] = mapping.scales;
    let [o0, o1, o2, o3] = mapping.offsets;
    let mut total = Complex64::new(0.0, 0.0);
    for &(xi_i, w_i) in &xi {
        let arg0 = s0 * xi_i + o0;
        let arg3 = s3 * xi_i + o3;
        let mut acc_alpha = Complex64::new(0.0, 0.0);
        for &(alpha_j, pw_j) in &probe_axis {
            let arg1 = s1 * alpha_j + o1;
            let mut acc_beta = Complex64::new(0.0, 0.0);
            for &(beta_l, pw_l) in &probe_axis {
                let value = kernel.eval(arg0, arg1, s2 * beta_l + o2, arg3);
                if !value.re.is_finite() || !value.im.is_finite() {
                    return Err(QuadratureError::IntegrandFailure {
                        point: vec![xi_i, alpha_j, beta_l],
                    }
                    .into());
                }
                acc_beta += pw_l * value;
            }
            acc_alpha += pw_j * acc_beta;
        }
        total += w_i * acc_alpha;
    }
    Ok(total)
}

/// Base and escalated values of one mapped integral.
struct MappedPair {
    base: Complex64,
    escalated: Complex64,
    nodes_used: usize,
}

fn mapped_pair(
    kernel: &ProcessKernel,
    probe: &ProbeState,
    detector: &DetectorModel,
    mapping: &ArgMapping,
) -> Result<MappedPair, TomographyError> {
    let order = mapping.order(kernel, detector, probe);
    let upper = escalated_order(order);
    let base = mapped_integral(kernel, probe, detector, mapping, order)?;
    let escalated = mapped_integral(kernel, probe, detector, mapping, upper)?;
    Ok(MappedPair {
        base,
        escalated,
        nodes_used: order.pow(3) + upper.pow(3),
    })
}

/// The element integral of a gate configuration: base and escalated values
/// plus the base order, which the estimator reuses for its normalization.
pub(crate) struct RawElement {
    pub base: Complex64,
    pub escalated: Complex64,
    pub order: usize,
    pub nodes_used: usize,
}

pub(crate) fn raw_element_integral(
    kernel: &ProcessKernel,
    gates: &GateConfig,
    detector: &DetectorModel,
    probe: &ProbeState,
) -> Result<RawElement, TomographyError> {
    gates.validate()?;
    let mapping = ArgMapping::element(gates);
    let order = mapping.order(kernel, detector, probe);
    let upper = escalated_order(order);
    let base = mapped_integral(kernel, probe, detector, &mapping, order)?;
    let escalated = mapped_integral(kernel, probe, detector, &mapping, upper)?;
    Ok(RawElement {
        base,
        escalated,
        order,
        nodes_used: order.pow(3) + upper.pow(3),
    })
}

/// Gauss-Legendre value of the probe amplitude integral over its support at
/// the given order; the square of this constant (times the detector width)
/// normalizes the estimator at the same order as the element integral, so
/// constant kernels reconstruct exactly up to rounding.
pub(crate) fn probe_line_quad(probe: &ProbeState, order: usize) -> Result<f64, TomographyError> {
    let (nodes, weights) = gauss_nodes(order)?;
    let half = probe.delta_support() / 2.0;
    let mut sum = 0.0;
    for (&t, &w) in nodes.iter().zip(weights) {
        sum += w * half * probe.amplitude(t * half);
    }
    Ok(sum)
}

/// Converged value of the estimator normalization constant: detector width
/// times the squared probe amplitude integral. Useful for shot planning
/// before any estimate exists.
pub fn estimator_normalization(detector: &DetectorModel, probe: &ProbeState) -> f64 {
    let q = probe_line_quad(probe, NORMALIZATION_ORDER)
        .expect("the reference order is always a supported quadrature order");
    detector.delta() * q * q
}

/// Signed-click expectation of the first readout channel,
/// `exp(-R/2) * Re[I]` for total squeezing `R` and element integral `I`.
pub fn expectation_sigma_x(
    kernel: &ProcessKernel,
    gates: &GateConfig,
    detector: &DetectorModel,
    probe: &ProbeState,
) -> Result<Expectation, TomographyError> {
    let raw = raw_element_integral(kernel, gates, detector, probe)?;
    let decay = (-0.5 * gates.total_squeezing()).exp();
    Ok(Expectation {
        value: decay * raw.base.re,
        quad_err: decay * (raw.base.re - raw.escalated.re).abs(),
        nodes_used: raw.nodes_used,
    })
}

/// Signed-click expectation of the second readout channel,
/// `exp(-R/2) * Im[I]`.
pub fn expectation_sigma_y(
    kernel: &ProcessKernel,
    gates: &GateConfig,
    detector: &DetectorModel,
    probe: &ProbeState,
) -> Result<Expectation, TomographyError> {
    let raw = raw_element_integral(kernel, gates, detector, probe)?;
    let decay = (-0.5 * gates.total_squeezing()).exp();
    Ok(Expectation {
        value: decay * raw.base.im,
        quad_err: decay * (raw.base.im - raw.escalated.im).abs(),
        nodes_used: raw.nodes_used,
    })
}

/// Probability that one run of the measurement produces a detector click,
/// combining the two branches in which the kernel's argument pairs share
/// gates. A physical channel keeps this real and inside `[0, 1]`; violations
/// beyond the quadrature tolerance are reported as unphysical rather than
/// silently clamped.
pub fn click_probability(
    kernel: &ProcessKernel,
    gates: &GateConfig,
    detector: &DetectorModel,
    probe: &ProbeState,
) -> Result<Expectation, TomographyError> {
    gates.validate()?;
    let ab = mapped_pair(kernel, probe, detector, &ArgMapping::click_branch_ab(gates))?;
    let dc = mapped_pair(kernel, probe, detector, &ArgMapping::click_branch_dc(gates))?;
    let w_ab = (-(gates.r_a + gates.r_b)).exp();
    let w_dc = (-(gates.r_d + gates.r_c)).exp();
    let base = 0.5 * (w_ab * ab.base + w_dc * dc.base);
    let escalated = 0.5 * (w_ab * ab.escalated + w_dc * dc.escalated);
    let quad_err = (base - escalated).norm();
    let tolerance = quad_err + PHYSICALITY_ABS_TOL;

    if base.im.abs() > tolerance {
        return Err(TomographyError::Unphysical {
            what: "imaginary part of the click probability",
            value: base.im,
            tolerance,
        });
    }
    let p = base.re;
    if p < -tolerance || p > 1.0 + tolerance {
        return Err(TomographyError::Unphysical {
            what: "click probability",
            value: p,
            tolerance,
        });
    }
    Ok(Expectation {
        value: p.clamp(0.0, 1.0),
        quad_err,
        nodes_used: ab.nodes_used + dc.nodes_used,
    })
}

/// Deterministic (infinite-shot) estimate of the kernel averaged over
/// `region`: the element integral divided by the normalization constant at
/// the same quadrature order. The readout decay `exp(-R/2)` and the
/// estimator's compensating `exp(+R/2)` cancel exactly and are never formed.
pub fn estimate_element(
    kernel: &ProcessKernel,
    region: &Region4,
    detector: &DetectorModel,
    probe: &ProbeState,
) -> Result<ElementEstimate, TomographyError> {
    let gates = gates_from_region(region, detector, probe);
    let raw = raw_element_integral(kernel, &gates, detector, probe)?;
    let q_base = probe_line_quad(probe, raw.order)?;
    let q_upper = probe_line_quad(probe, escalated_order(raw.order))?;
    let delta = detector.delta();
    let value = raw.base / (delta * q_base * q_base);
    let upper = raw.escalated / (delta * q_upper * q_upper);
    Ok(ElementEstimate {
        value,
        region: *region,
        depth: 0,
        quad_err: (value - upper).norm(),
        shots: None,
    })
}
