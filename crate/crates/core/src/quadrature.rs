//! Tensor-product Gauss-Legendre quadrature over 1- to 3-dimensional boxes.
//!
//! Rules are generated on demand by Newton iteration on the Legendre
//! recurrence and cached process-wide, so repeated integrations at the same
//! order pay no setup cost. Integration is deliberately non-adaptive: callers
//! pick an order from an oscillation estimate via [`suggest_order`], and the
//! layers above subdivide their own domains when accuracy demands it.
//! [`integrate_box`] reports an error estimate obtained by re-evaluating at
//! 1.5x the requested order.

use std::sync::OnceLock;

use num_complex::Complex64;
use thiserror::Error;

/// Largest supported rule order (node count per axis).
pub const MAX_ORDER: usize = 256;

/// Smallest order [`suggest_order`] will return.
pub const MIN_SUGGESTED_ORDER: usize = 12;

/// Largest order [`suggest_order`] will return; leaves headroom for the
/// 1.5x escalation inside [`integrate_box`].
pub const MAX_SUGGESTED_ORDER: usize = 128;

#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error("quadrature order {0} outside supported range 1..={MAX_ORDER}")]
    UnsupportedOrder(usize),
    #[error("box dimension {0} outside supported range 1..=3")]
    UnsupportedDimension(usize),
    #[error("axis {axis} has empty or non-finite extent [{lo}, {hi}]")]
    BadAxis { axis: usize, lo: f64, hi: f64 },
    #[error("integrand returned a non-finite value at {point:?}")]
    IntegrandFailure { point: Vec<f64> },
}

/// Axis-aligned integration domain with 1 to 3 axes, each of positive width.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegrationBox {
    lo: [f64; 3],
    hi: [f64; 3],
    dim: usize,
}

impl IntegrationBox {
    fn build(dim: usize, lo: [f64; 3], hi: [f64; 3]) -> Result<Self, QuadratureError> {
        if !(1..=3).contains(&dim) {
            return Err(QuadratureError::UnsupportedDimension(dim));
        }
        for axis in 0..dim {
            let (a, b) = (lo[axis], hi[axis]);
            if !a.is_finite() || !b.is_finite() || a >= b {
                return Err(QuadratureError::BadAxis { axis, lo: a, hi: b });
            }
        }
        Ok(Self { lo, hi, dim })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self, QuadratureError> {
        Self::build(1, [lo, 0.0, 0.0], [hi, 0.0, 0.0])
    }

    pub fn rect(lo: [f64; 2], hi: [f64; 2]) -> Result<Self, QuadratureError> {
        Self::build(2, [lo[0], lo[1], 0.0], [hi[0], hi[1], 0.0])
    }

    pub fn cuboid(lo: [f64; 3], hi: [f64; 3]) -> Result<Self, QuadratureError> {
        Self::build(3, lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lo(&self, axis: usize) -> f64 {
        assert!(axis < self.dim);
        self.lo[axis]
    }

    pub fn hi(&self, axis: usize) -> f64 {
        assert!(axis < self.dim);
        self.hi[axis]
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi(axis) - self.lo(axis)
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.width(a)).product()
    }
}

/// Result of one box integration.
#[derive(Clone, Copy, Debug)]
pub struct QuadResult {
    /// Value at the requested base order.
    pub value: Complex64,
    /// |base value - value at ceil(1.5 * base order)|.
    pub err_estimate: f64,
    /// Total integrand evaluations, both orders included.
    pub nodes_used: usize,
}

struct GlRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

static RULES: [OnceLock<GlRule>; MAX_ORDER + 1] = [const { OnceLock::new() }; MAX_ORDER + 1];

/// Legendre P_n(x) and its derivative, by the three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 2..=n {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = p_next;
    }
    let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

fn compute_rule(order: usize) -> GlRule {
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Tricomi initial guess; nodes come out in descending order.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_pair(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-15 {
                // One polishing step past the residual tolerance.
                let (p2, d2) = legendre_pair(n, x);
                dp = d2;
                x -= p2 / d2;
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    // Enforce exact symmetry about zero; the midpoint of an odd rule is a true
    // root of the odd-degree polynomial.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let mag = 0.5 * (nodes[i] - nodes[j]);
        nodes[i] = mag;
        nodes[j] = -mag;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    nodes.reverse();
    weights.reverse();
    GlRule { nodes, weights }
}

/// Nodes and weights of the Gauss-Legendre rule on [-1, 1], ascending nodes.
///
/// Rules are computed once per order and shared; concurrent first calls race
/// benignly on the same deterministic result.
pub fn gauss_nodes(order: usize) -> Result<(&'static [f64], &'static [f64]), QuadratureError> {
    if order == 0 || order > MAX_ORDER {
        return Err(QuadratureError::UnsupportedOrder(order));
    }
    let rule = RULES[order].get_or_init(|| compute_rule(order));
    Ok((&rule.nodes, &rule.weights))
}

/// Suggested per-axis order for an integrand whose phase advances at
/// `frequency` radians per unit length across a box of width `width`:
/// `clamp(ceil(4 * frequency * width), 12, 128)`.
pub fn suggest_order(frequency: f64, width: f64) -> usize {
    let scale = 4.0 * frequency * width;
    if !scale.is_finite() || scale <= MIN_SUGGESTED_ORDER as f64 {
        return MIN_SUGGESTED_ORDER;
    }
    (scale.ceil() as usize).min(MAX_SUGGESTED_ORDER)
}

/// Plain tensor-product evaluation at one order, no error estimate.
pub(crate) fn tensor_value<F>(
    f: &F,
    bx: &IntegrationBox,
    order: usize,
) -> Result<Complex64, QuadratureError>
where
    F: Fn(&[f64]) -> Complex64,
{
    let (t, w) = gauss_nodes(order)?;
    let n = order;
    let mid = |axis: usize| 0.5 * (bx.lo[axis] + bx.hi[axis]);
    let half = |axis: usize| 0.5 * (bx.hi[axis] - bx.lo[axis]);
    let mut acc = Complex64::new(0.0, 0.0);
    match bx.dim {
        1 => {
            let (c0, h0) = (mid(0), half(0));
            for i in 0..n {
                let p = [c0 + h0 * t[i]];
                let v = f(&p);
                if !v.re.is_finite() || !v.im.is_finite() {
                    return Err(QuadratureError::IntegrandFailure { point: p.to_vec() });
                }
                acc += w[i] * v;
            }
            Ok(acc * h0)
        }
        2 => {
            let (c0, h0) = (mid(0), half(0));
            let (c1, h1) = (mid(1), half(1));
            for i in 0..n {
                let x = c0 + h0 * t[i];
                let mut row = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    let p = [x, c1 + h1 * t[j]];
                    let v = f(&p);
                    if !v.re.is_finite() || !v.im.is_finite() {
                        return Err(QuadratureError::IntegrandFailure { point: p.to_vec() });
                    }
                    row += w[j] * v;
                }
                acc += w[i] * row;
            }
            Ok(acc * (h0 * h1))
        }
        3 => {
            let (c0, h0) = (mid(0), half(0));
            let (c1, h1) = (mid(1), half(1));
            let (c2, h2) = (mid(2), half(2));
            for i in 0..n {
                let x = c0 + h0 * t[i];
                let mut plane = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    let y = c1 + h1 * t[j];
                    let mut row = Complex64::new(0.0, 0.0);
                    for k in 0..n {
                        let p = [x, y, c2 + h2 * t[k]];
                        let v = f(&p);
                        if !v.re.is_finite() || !v.im.is_finite() {
                            return Err(QuadratureError::IntegrandFailure { point: p.to_vec() });
                        }
                        row += w[k] * v;
                    }
                    plane += w[j] * row;
                }
                acc += w[i] * plane;
            }
            Ok(acc * (h0 * h1 * h2))
        }
        d => Err(QuadratureError::UnsupportedDimension(d)),
    }
}

/// Escalated order used for the error estimate: ceil(1.5 * base).
pub(crate) fn escalated_order(base_order: usize) -> usize {
    (3 * base_order + 1) / 2
}

/// Integrates `f` over `bx` with a tensor-product Gauss-Legendre rule at
/// `base_order` nodes per axis. The error estimate is the distance to the
/// value at ceil(1.5 * base_order); both evaluations count toward
/// `nodes_used`.
pub fn integrate_box<F>(
    f: F,
    bx: &IntegrationBox,
    base_order: usize,
) -> Result<QuadResult, QuadratureError>
where
    F: Fn(&[f64]) -> Complex64,
{
    if base_order == 0 || escalated_order(base_order) > MAX_ORDER {
        return Err(QuadratureError::UnsupportedOrder(base_order));
    }
    let esc = escalated_order(base_order);
    let value = tensor_value(&f, bx, base_order)?;
    let refined = tensor_value(&f, bx, esc)?;
    Ok(QuadResult {
        value,
        err_estimate: (value - refined).norm(),
        nodes_used: base_order.pow(bx.dim as u32) + esc.pow(bx.dim as u32),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn order_one_is_midpoint_rule() {
        let (t, w) = gauss_nodes(1).unwrap();
        assert_eq!(t, &[0.0]);
        assert_relative_eq!(w[0], 2.0, max_relative = 1e-15);
    }

    #[test]
    fn order_two_nodes_match_closed_form() {
        let (t, w) = gauss_nodes(2).unwrap();
        let r = 1.0 / 3.0_f64.sqrt();
        assert_relative_eq!(t[0], -r, max_relative = 1e-15);
        assert_relative_eq!(t[1], r, max_relative = 1e-15);
        assert_relative_eq!(w[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(w[1], 1.0, max_relative = 1e-14);
    }

    #[test]
    fn rejects_out_of_range_orders() {
        assert!(matches!(
            gauss_nodes(0),
            Err(QuadratureError::UnsupportedOrder(0))
        ));
        assert!(matches!(
            gauss_nodes(MAX_ORDER + 1),
            Err(QuadratureError::UnsupportedOrder(_))
        ));
        assert!(gauss_nodes(MAX_ORDER).is_ok());
    }

    #[test]
    fn weights_sum_to_interval_length() {
        for order in [2, 5, 8, 32, 64, 128, 256] {
            let (_, w) = gauss_nodes(order).unwrap();
            let sum: f64 = w.iter().sum();
            assert!(
                (sum - 2.0).abs() < 1e-13,
                "order {order}: weight sum {sum}"
            );
        }
    }

    #[test]
    fn nodes_are_exactly_symmetric_and_sorted() {
        for order in [3, 4, 17, 64, 255] {
            let (t, w) = gauss_nodes(order).unwrap();
            for i in 0..order {
                let j = order - 1 - i;
                assert_eq!(t[i], -t[j], "order {order} node {i}");
                assert_eq!(w[i], w[j], "order {order} weight {i}");
            }
            for i in 1..order {
                assert!(t[i] > t[i - 1]);
            }
        }
    }

    #[test]
    fn monomial_x10_integrates_exactly_at_order_16() {
        let bx = IntegrationBox::interval(-1.0, 1.0).unwrap();
        let r = integrate_box(|p| c(p[0].powi(10)), &bx, 16).unwrap();
        assert_relative_eq!(r.value.re, 2.0 / 11.0, max_relative = 1e-14);
        assert!(r.value.im.abs() < 1e-16);
    }

    #[test]
    fn degree_2n_minus_1_polynomials_are_exact() {
        // Random polynomials up to the rule's algebraic degree, against the
        // closed-form antiderivative on [-1, 1].
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let bx = IntegrationBox::interval(-1.0, 1.0).unwrap();
        for n in [3usize, 6, 10, 20] {
            let deg = 2 * n - 1;
            for _ in 0..5 {
                let coef: Vec<f64> = (0..=deg).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let exact: f64 = coef
                    .iter()
                    .enumerate()
                    .map(|(k, a)| {
                        // int_{-1}^{1} x^k dx
                        if k % 2 == 0 {
                            a * 2.0 / (k as f64 + 1.0)
                        } else {
                            0.0
                        }
                    })
                    .sum();
                let got = tensor_value(
                    &|p: &[f64]| {
                        let mut acc = 0.0;
                        for a in coef.iter().rev() {
                            acc = acc * p[0] + a;
                        }
                        c(acc)
                    },
                    &bx,
                    n,
                )
                .unwrap();
                assert!(
                    (got.re - exact).abs() < 1e-12,
                    "order {n}: got {} want {exact}",
                    got.re
                );
            }
        }
    }

    #[test]
    fn oscillatory_exponential_matches_closed_form() {
        let bx = IntegrationBox::interval(-1.0, 1.0).unwrap();
        let r = integrate_box(
            |p| Complex64::new(0.0, 5.0 * p[0]).exp(),
            &bx,
            32,
        )
        .unwrap();
        let exact = 2.0 * 5.0_f64.sin() / 5.0;
        assert_relative_eq!(r.value.re, exact, max_relative = 1e-10);
        assert!(r.value.im.abs() < 1e-14);
        assert!(r.err_estimate < 1e-12);
    }

    #[test]
    fn unit_cube_volume() {
        let bx = IntegrationBox::cuboid([0.0; 3], [1.0; 3]).unwrap();
        let r = integrate_box(|_| c(1.0), &bx, 4).unwrap();
        assert_relative_eq!(r.value.re, 1.0, max_relative = 1e-15);
        assert_eq!(r.nodes_used, 4usize.pow(3) + 6usize.pow(3));
    }

    #[test]
    fn separable_product_on_unit_cube() {
        let bx = IntegrationBox::cuboid([0.0; 3], [1.0; 3]).unwrap();
        let r = integrate_box(|p| c(p[0] * p[1] * p[2]), &bx, 8).unwrap();
        assert_relative_eq!(r.value.re, 0.125, max_relative = 1e-13);
    }

    #[test]
    fn two_dimensional_gaussian_factorizes() {
        let bx = IntegrationBox::rect([-2.0, -2.0], [2.0, 2.0]).unwrap();
        let r = integrate_box(|p| c((-p[0] * p[0] - p[1] * p[1]).exp()), &bx, 40).unwrap();
        let one_d = tensor_value(
            &|p: &[f64]| c((-p[0] * p[0]).exp()),
            &IntegrationBox::interval(-2.0, 2.0).unwrap(),
            40,
        )
        .unwrap();
        assert_relative_eq!(r.value.re, one_d.re * one_d.re, max_relative = 1e-12);
    }

    #[test]
    fn linearity_holds_to_rounding() {
        let bx = IntegrationBox::interval(0.0, 2.0).unwrap();
        let f = |p: &[f64]| c(p[0] * p[0]);
        let g = |p: &[f64]| Complex64::new((2.5 * p[0]).cos(), p[0]);
        let (a, b) = (Complex64::new(1.25, -0.5), Complex64::new(0.75, 2.0));
        let lhs = tensor_value(&|p: &[f64]| a * f(p) + b * g(p), &bx, 24).unwrap();
        let rhs = a * tensor_value(&f, &bx, 24).unwrap() + b * tensor_value(&g, &bx, 24).unwrap();
        assert!((lhs - rhs).norm() < 1e-13);
    }

    #[test]
    fn error_estimate_tracks_true_error_for_resolved_oscillations() {
        let bx = IntegrationBox::interval(-1.0, 1.0).unwrap();
        for k in [1.0, 3.0, 7.0, 15.0] {
            let r = integrate_box(
                move |p| Complex64::new(0.0, k * p[0]).exp(),
                &bx,
                12,
            )
            .unwrap();
            let exact = 2.0 * k.sin() / k;
            let true_err = (r.value - c(exact)).norm();
            if r.err_estimate <= 1e-4 {
                assert!(
                    true_err <= 10.0 * r.err_estimate + 1e-15,
                    "k={k}: true {true_err} vs estimate {}",
                    r.err_estimate
                );
            }
        }
    }

    #[test]
    fn non_finite_sample_reports_the_point() {
        let bx = IntegrationBox::interval(0.0, 1.0).unwrap();
        let err = integrate_box(|p| c(1.0 / (p[0] - p[0])), &bx, 4).unwrap_err();
        match err {
            QuadratureError::IntegrandFailure { point } => {
                assert_eq!(point.len(), 1);
                assert!(point[0] > 0.0 && point[0] < 1.0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn degenerate_and_reversed_axes_are_rejected() {
        assert!(matches!(
            IntegrationBox::interval(1.0, 1.0),
            Err(QuadratureError::BadAxis { axis: 0, .. })
        ));
        assert!(matches!(
            IntegrationBox::rect([0.0, 2.0], [1.0, 1.0]),
            Err(QuadratureError::BadAxis { axis: 1, .. })
        ));
        assert!(IntegrationBox::interval(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn suggest_order_clamps_to_supported_band() {
        assert_eq!(suggest_order(0.0, 1.0), 12);
        assert_eq!(suggest_order(1.0, 0.1), 12);
        assert_eq!(suggest_order(10.0, 1.0), 40);
        assert_eq!(suggest_order(1000.0, 10.0), 128);
        assert_eq!(suggest_order(f64::NAN, 1.0), 12);
    }

    #[test]
    fn escalation_of_suggested_orders_stays_supported() {
        assert_eq!(escalated_order(12), 18);
        assert_eq!(escalated_order(13), 20);
        assert!(escalated_order(MAX_SUGGESTED_ORDER) <= MAX_ORDER);
    }

    #[test]
    fn repeated_integration_is_bit_identical() {
        let bx = IntegrationBox::rect([-1.0, 0.0], [1.5, 2.0]).unwrap();
        let f = |p: &[f64]| Complex64::new((p[0] * p[1]).sin(), p[0] - p[1]);
        let a = integrate_box(f, &bx, 20).unwrap();
        let b = integrate_box(f, &bx, 20).unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.err_estimate, b.err_estimate);
    }
}
