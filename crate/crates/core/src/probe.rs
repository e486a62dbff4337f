//! Probe-state construction and the special functions tied to it.
//!
//! The measurement protocol drives the channel with a normalized Gaussian
//! probe `psi(x) = norm_const * exp(-decay * x^2)` whose amplitude falls to a
//! configured threshold at the edge of its nominal support. [`make_probe`]
//! solves for the decay rate; the narrow-Gaussian branch is taken so the
//! probe is concentrated inside the support window.
//!
//! [`hermite_psi`] evaluates normalized Hermite functions by the stable
//! three-term recurrence, and [`mehler_f`] the closed-form bilinear kernel
//! `sum_n lambda^n psi_n(x) psi_n(y)` they generate; the pair underpins the
//! Choi-state constructions in [`crate::choi`].

use thiserror::Error;

/// Default edge threshold: the probe amplitude at the support boundary.
pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.05;

/// Largest admitted Hermite-function index; the recurrence is well within
/// f64 range here, whereas naive polynomial/factorial evaluation is not.
pub const MAX_HERMITE_INDEX: usize = 500;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("probe support width must be positive and finite, got {0}")]
    BadSupport(f64),
    #[error("edge threshold must be positive and finite, got {0}")]
    BadThreshold(f64),
    #[error(
        "edge threshold {threshold} is not attainable; the boundary amplitude peaks at {peak}"
    )]
    InfeasibleThreshold { threshold: f64, peak: f64 },
    #[error("Hermite index {0} exceeds supported maximum {MAX_HERMITE_INDEX}")]
    HermiteIndexOutOfRange(usize),
    #[error("correlation parameter must satisfy |lambda| < 1, got {0}")]
    CorrelationOutOfRange(f64),
}

/// Normalized Gaussian probe `psi(x) = norm_const * exp(-decay * x^2)` with
/// unit L2 norm on the whole line.
#[derive(Clone, Copy, Debug)]
pub struct ProbeState {
    delta_support: f64,
    threshold: f64,
    decay: f64,
    norm_const: f64,
    l1_integral: f64,
}

impl ProbeState {
    /// Nominal support width; `amplitude(delta_support / 2) == threshold`.
    pub fn delta_support(&self) -> f64 {
        self.delta_support
    }

    /// Amplitude at the support edge.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Gaussian decay rate.
    pub fn decay(&self) -> f64 {
        self.decay
    }

    /// Peak amplitude `(2 * decay / pi)^(1/4)`.
    pub fn norm_const(&self) -> f64 {
        self.norm_const
    }

    /// Whole-line integral of the amplitude, `norm_const * sqrt(pi / decay)`.
    pub fn l1_integral(&self) -> f64 {
        self.l1_integral
    }

    /// Probe amplitude at position `x`.
    pub fn amplitude(&self, x: f64) -> f64 {
        self.norm_const * (-self.decay * x * x).exp()
    }
}

/// Boundary amplitude of the unit-norm Gaussian with decay rate `c` at
/// distance `half_width` from the origin.
fn edge_amplitude(c: f64, half_width: f64) -> f64 {
    (2.0 * c / std::f64::consts::PI).powf(0.25) * (-c * half_width * half_width).exp()
}

/// Builds the probe for a support window of width `delta_support`, solving for
/// the decay rate at which the amplitude equals `threshold` on the window
/// edge. Of the two Gaussians with that boundary value, the narrower one is
/// returned (decay above `1 / delta_support^2`, where the boundary amplitude
/// peaks over the decay rate).
pub fn make_probe(delta_support: f64, threshold: f64) -> Result<ProbeState, ProbeError> {
    if !delta_support.is_finite() || delta_support <= 0.0 {
        return Err(ProbeError::BadSupport(delta_support));
    }
    if !threshold.is_finite() || threshold <= 0.0 {
        return Err(ProbeError::BadThreshold(threshold));
    }
    let half = delta_support / 2.0;
    let c_peak = 1.0 / (delta_support * delta_support);
    let peak = edge_amplitude(c_peak, half);
    if threshold >= peak {
        return Err(ProbeError::InfeasibleThreshold { threshold, peak });
    }
    // Bracket on the decreasing branch, then bisect. The edge amplitude is
    // strictly decreasing in the decay rate beyond c_peak.
    let mut lo = c_peak;
    let mut hi = 2.0 * c_peak;
    while edge_amplitude(hi, half) > threshold {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if edge_amplitude(mid, half) > threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let decay = 0.5 * (lo + hi);
    let norm_const = (2.0 * decay / std::f64::consts::PI).powf(0.25);
    Ok(ProbeState {
        delta_support,
        threshold,
        decay,
        norm_const,
        l1_integral: norm_const * (std::f64::consts::PI / decay).sqrt(),
    })
}

/// Normalized Hermite function `psi_n(x)`: the n-th eigenfunction of the
/// harmonic oscillator, orthonormal on the line. Evaluated by the recurrence
/// `psi_{n+1} = sqrt(2/(n+1)) x psi_n - sqrt(n/(n+1)) psi_{n-1}`.
pub fn hermite_psi(n: usize, x: f64) -> Result<f64, ProbeError> {
    if n > MAX_HERMITE_INDEX {
        return Err(ProbeError::HermiteIndexOutOfRange(n));
    }
    let psi0 = std::f64::consts::PI.powf(-0.25) * (-x * x / 2.0).exp();
    if n == 0 {
        return Ok(psi0);
    }
    let mut prev = psi0;
    let mut cur = std::f64::consts::SQRT_2 * x * psi0;
    for k in 1..n {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Closed form of the bilinear series `sum_n lambda^n psi_n(x) psi_n(y)` for
/// |lambda| < 1:
///
/// `1/sqrt(pi (1 - lambda^2)) * exp(-(1-lambda)(x+y)^2 / (4(1+lambda))
///                                  - (1+lambda)(x-y)^2 / (4(1-lambda)))`.
pub fn mehler_f(lambda: f64, x: f64, y: f64) -> Result<f64, ProbeError> {
    if !lambda.is_finite() || lambda.abs() >= 1.0 {
        return Err(ProbeError::CorrelationOutOfRange(lambda));
    }
    let sum = x + y;
    let diff = x - y;
    let exponent = -(1.0 - lambda) * sum * sum / (4.0 * (1.0 + lambda))
        - (1.0 + lambda) * diff * diff / (4.0 * (1.0 - lambda));
    Ok((std::f64::consts::PI * (1.0 - lambda * lambda)).sqrt().recip() * exponent.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_box, IntegrationBox};
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use proptest::prelude::*;

    // Frozen from a 40-digit root solve of the boundary condition at
    // delta_support = 0.1, threshold = 0.05.
    const DECAY_AT_DEFAULTS: f64 = 1908.5442443637828;
    const PEAK_AT_DEFAULTS: f64 = 5.903989668347307;
    const L1_AT_DEFAULTS: f64 = 0.23953523664769101;

    fn default_probe() -> ProbeState {
        make_probe(0.1, DEFAULT_EDGE_THRESHOLD).unwrap()
    }

    #[test]
    fn default_probe_matches_frozen_root() {
        let p = default_probe();
        assert_relative_eq!(p.decay(), DECAY_AT_DEFAULTS, max_relative = 1e-10);
        assert_relative_eq!(p.norm_const(), PEAK_AT_DEFAULTS, max_relative = 1e-11);
        assert_relative_eq!(p.l1_integral(), L1_AT_DEFAULTS, max_relative = 1e-11);
    }

    #[test]
    fn edge_amplitude_hits_threshold() {
        let p = default_probe();
        assert_relative_eq!(p.amplitude(0.05), 0.05, max_relative = 1e-12);
        assert_relative_eq!(p.amplitude(-0.05), 0.05, max_relative = 1e-12);
    }

    #[test]
    fn amplitude_is_square_normalized() {
        let p = default_probe();
        let bx = IntegrationBox::interval(-0.1, 0.1).unwrap();
        let norm = integrate_box(
            |q| Complex64::new(p.amplitude(q[0]).powi(2), 0.0),
            &bx,
            64,
        )
        .unwrap();
        assert_relative_eq!(norm.value.re, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn mass_outside_support_is_small() {
        let p = default_probe();
        let half = p.delta_support() / 2.0;
        let bx = IntegrationBox::interval(-half, half).unwrap();
        let inside = integrate_box(
            |q| Complex64::new(p.amplitude(q[0]).powi(2), 0.0),
            &bx,
            64,
        )
        .unwrap();
        let outside = 1.0 - inside.value.re;
        assert!(outside > 0.0, "tail mass should be positive, got {outside}");
        assert!(outside < 1e-2, "tail mass {outside} too large");
        // The narrow-branch solution leaves only ~1e-5 outside the window.
        assert!(outside < 1e-4);
    }

    #[test]
    fn narrow_branch_is_selected() {
        let p = default_probe();
        let c_peak = 1.0 / (p.delta_support() * p.delta_support());
        assert!(p.decay() > c_peak);
    }

    #[test]
    fn amplitude_is_even_and_decreasing() {
        let p = default_probe();
        for x in [0.0, 0.01, 0.033, 0.05, 0.2] {
            assert_eq!(p.amplitude(x), p.amplitude(-x));
        }
        let mut last = p.amplitude(0.0);
        for i in 1..40 {
            let v = p.amplitude(i as f64 * 0.005);
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn infeasible_threshold_is_rejected() {
        // The boundary amplitude over all decay rates peaks near 2.2 for a
        // width-0.1 window; anything at or above is unattainable.
        let err = make_probe(0.1, 3.0).unwrap_err();
        match err {
            ProbeError::InfeasibleThreshold { threshold, peak } => {
                assert_eq!(threshold, 3.0);
                assert!(peak > 2.0 && peak < 2.5);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(matches!(make_probe(0.0, 0.05), Err(ProbeError::BadSupport(_))));
        assert!(matches!(make_probe(-1.0, 0.05), Err(ProbeError::BadSupport(_))));
        assert!(matches!(
            make_probe(f64::INFINITY, 0.05),
            Err(ProbeError::BadSupport(_))
        ));
        assert!(matches!(make_probe(0.1, 0.0), Err(ProbeError::BadThreshold(_))));
        assert!(matches!(make_probe(0.1, -0.1), Err(ProbeError::BadThreshold(_))));
    }

    #[test]
    fn hermite_ground_state_value() {
        let v = hermite_psi(0, 0.0).unwrap();
        assert_relative_eq!(v, std::f64::consts::PI.powf(-0.25), max_relative = 1e-14);
        assert_eq!(hermite_psi(1, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn hermite_seven_matches_polynomial_route() {
        // Independent evaluation from the degree-7 physicists' polynomial.
        let x: f64 = 1.3;
        let h7 = 128.0 * x.powi(7) - 1344.0 * x.powi(5) + 3360.0 * x.powi(3) - 1680.0 * x;
        let norm = (std::f64::consts::PI.sqrt() * 2.0_f64.powi(7) * 5040.0).sqrt();
        let direct = h7 * (-x * x / 2.0).exp() / norm;
        let v = hermite_psi(7, x).unwrap();
        assert_relative_eq!(v, direct, max_relative = 1e-12);
        // Frozen 40-digit value of the same quantity.
        assert_relative_eq!(v, 0.4060986642519054, max_relative = 1e-12);
    }

    #[test]
    fn hermite_recurrence_is_stable_at_the_index_cap() {
        let v = hermite_psi(MAX_HERMITE_INDEX, 2.0).unwrap();
        assert!(v.is_finite());
        // Hermite functions are uniformly bounded well below 1.
        assert!(v.abs() < 0.8);
        assert!(matches!(
            hermite_psi(MAX_HERMITE_INDEX + 1, 0.0),
            Err(ProbeError::HermiteIndexOutOfRange(_))
        ));
    }

    #[test]
    fn hermite_functions_are_orthonormal() {
        // Composite Gauss-Legendre over [-12, 12]; the integrands for
        // n, m <= 10 are negligible outside.
        let panels: Vec<IntegrationBox> = (0..8)
            .map(|i| {
                IntegrationBox::interval(-12.0 + 3.0 * i as f64, -9.0 + 3.0 * i as f64).unwrap()
            })
            .collect();
        for n in 0..=10usize {
            for m in n..=10usize {
                let total: f64 = panels
                    .iter()
                    .map(|bx| {
                        integrate_box(
                            |q| {
                                Complex64::new(
                                    hermite_psi(n, q[0]).unwrap() * hermite_psi(m, q[0]).unwrap(),
                                    0.0,
                                )
                            },
                            bx,
                            32,
                        )
                        .unwrap()
                        .value
                        .re
                    })
                    .sum();
                let expected = if n == m { 1.0 } else { 0.0 };
                assert!(
                    (total - expected).abs() < 1e-8,
                    "n={n} m={m}: {total}"
                );
            }
        }
    }

    #[test]
    fn mehler_at_zero_correlation_is_ground_state_product() {
        for (x, y) in [(0.0, 0.0), (0.7, -0.2), (1.5, 2.25), (-3.0, 1.0)] {
            let f = mehler_f(0.0, x, y).unwrap();
            let prod = hermite_psi(0, x).unwrap() * hermite_psi(0, y).unwrap();
            assert_relative_eq!(f, prod, max_relative = 1e-14);
        }
    }

    #[test]
    fn mehler_frozen_values() {
        assert_relative_eq!(
            mehler_f(0.5, 0.0, 0.0).unwrap(),
            0.6514700158705599,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            mehler_f(0.8, 0.7, -0.2).unwrap(),
            0.15092326296836429,
            max_relative = 1e-13
        );
    }

    #[test]
    fn mehler_matches_truncated_series() {
        let lambda = 0.8;
        for (x, y) in [(0.7, -0.2), (0.0, 0.0), (2.0, 2.0), (-1.3, 0.4)] {
            let closed = mehler_f(lambda, x, y).unwrap();
            let mut series = 0.0;
            for n in 0..=80 {
                series +=
                    lambda.powi(n as i32) * hermite_psi(n, x).unwrap() * hermite_psi(n, y).unwrap();
            }
            assert!(
                (closed - series).abs() < 1e-8,
                "({x},{y}): closed {closed} vs series {series}"
            );
        }
    }

    #[test]
    fn mehler_rejects_degenerate_correlation() {
        for lambda in [1.0, -1.0, 1.2, f64::NAN] {
            assert!(matches!(
                mehler_f(lambda, 0.0, 0.0),
                Err(ProbeError::CorrelationOutOfRange(_))
            ));
        }
    }

    proptest! {
        #[test]
        fn amplitude_is_positive_and_peaked_at_zero(x in -5.0f64..5.0) {
            let p = default_probe();
            let v = p.amplitude(x);
            prop_assert!(v >= 0.0);
            prop_assert!(v <= p.norm_const());
        }

        #[test]
        fn mehler_is_symmetric_and_positive(
            lambda in -0.95f64..0.95,
            x in -4.0f64..4.0,
            y in -4.0f64..4.0,
        ) {
            let a = mehler_f(lambda, x, y).unwrap();
            let b = mehler_f(lambda, y, x).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(a > 0.0);
        }
    }
}
