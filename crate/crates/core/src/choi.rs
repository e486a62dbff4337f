//! Discretized channel–state duality: every process kernel corresponds to a
//! bipartite state obtained by sending one half of a two-mode squeezed
//! vacuum through the channel. This module builds that state's position-grid
//! matrix, measures trace distances between such matrices, and turns the
//! distance between a reconstruction and the truth into a fidelity bound.
//!
//! The state's matrix elements are two-dimensional integrals of the kernel
//! against a pair of correlation factors `f_lambda` (the closed form of the
//! squeezing-weighted sum over number states, see [`crate::probe::mehler_f`]),
//! with squeezing weight `lambda` in (0, 1) for a normalizable state.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::kernels::ProcessKernel;
use crate::probe::mehler_f;
use crate::quadrature::{gauss_nodes, suggest_order, QuadratureError};
use crate::tomography::ElementEstimate;

/// Hermitian-symmetry defect above which a grid no longer looks like it came
/// from a physical (Hermiticity-respecting) kernel; callers running strictly
/// should refuse such grids.
pub const HERMITIAN_DEFECT_TOLERANCE: f64 = 1e-6;

/// Fraction of the largest matrix element below which an entry counts as
/// negligible when restricting a reconstruction comparison.
pub const NEGLIGIBILITY_FRACTION: f64 = 1e-3;

/// Inverse complementary error function at 1e-8: a centered Gaussian keeps
/// all but 1e-8 of its mass within this many natural widths.
const TAIL_CUTOFF: f64 = 4.0522372438713892;

/// Minimum quadrature order for state elements. The integration box spans
/// `2 * TAIL_CUTOFF * sqrt(2)` (about 11.5) standard deviations of the
/// correlation factor's narrow Gaussian — a ratio independent of the
/// correlation weight — and resolving that factor needs this many abscissas
/// even when the kernel itself is smooth.
const CORRELATION_RESOLUTION_ORDER: usize = 64;

#[derive(Debug, Error)]
pub enum ChoiError {
    #[error("correlation weight must satisfy |lambda| < 1, got {0}")]
    BadCorrelation(f64),
    #[error("grid correlation weight must lie in (0, 1), got {0}")]
    BadGridCorrelation(f64),
    #[error("grid needs a positive finite extent and at least 2 points per axis, got extent {extent}, points {points}")]
    BadGrid { extent: f64, points: usize },
    #[error("position {name} must be finite, got {value}")]
    BadPosition { name: &'static str, value: f64 },
    #[error("grids differ in shape, extent, or correlation weight")]
    GridMismatch,
    #[error("mesh cannot support the comparison: {0}")]
    Coverage(String),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Integration half-width around each correlation-factor center: captures all
/// but 1e-8 of the mass of the factor's narrow Gaussian.
pub fn correlation_halfwidth(lambda: f64) -> Result<f64, ChoiError> {
    if !lambda.is_finite() || lambda.abs() >= 1.0 {
        return Err(ChoiError::BadCorrelation(lambda));
    }
    let narrow = (1.0 + lambda) / (4.0 * (1.0 - lambda));
    Ok(TAIL_CUTOFF / narrow.sqrt())
}

/// Lower bound on the fidelity between two states at trace distance `t`:
/// `max(0, 1 - t)^2`. Total on all real inputs; negative distances are
/// treated as zero.
pub fn fidelity_lower_bound(t: f64) -> f64 {
    let clamped = t.max(0.0);
    (1.0 - clamped).max(0.0).powi(2)
}

/// Quadrature order for one state element from the kernel's oscillation hint
/// at the farthest coordinate of the integration boxes.
fn element_order(
    kernel: &ProcessKernel,
    a: f64,
    d: f64,
    y_box: (f64, f64),
    w_box: (f64, f64),
) -> usize {
    let max_coord = a
        .abs()
        .max(d.abs())
        .max(y_box.0.abs())
        .max(y_box.1.abs())
        .max(w_box.0.abs())
        .max(w_box.1.abs());
    let width = (y_box.1 - y_box.0).max(w_box.1 - w_box.0);
    suggest_order(kernel.oscillation_hint().frequency(max_coord), width)
        .max(CORRELATION_RESOLUTION_ORDER)
}

/// Gauss-Legendre abscissas over `[lo, hi]` with the correlation factor
/// centered at `center` folded into the weights.
fn correlation_axis(
    lambda: f64,
    center: f64,
    lo: f64,
    hi: f64,
    order: usize,
) -> Result<(Vec<f64>, Vec<f64>), ChoiError> {
    let (nodes, weights) = gauss_nodes(order)?;
    let half = (hi - lo) / 2.0;
    let mid = (hi + lo) / 2.0;
    let mut positions = Vec::with_capacity(order);
    let mut folded = Vec::with_capacity(order);
    for (&t, &w) in nodes.iter().zip(weights) {
        let p = mid + half * t;
        positions.push(p);
        folded.push(
            w * half
                * mehler_f(lambda, p, center)
                    .expect("correlation weight validated before axis construction"),
        );
    }
    Ok((positions, folded))
}

/// Tensor sum of the kernel against two prepared correlation axes, including
/// the overall `(1 - lambda^2)` normalization.
fn element_sum(
    kernel: &ProcessKernel,
    a: f64,
    d: f64,
    y_axis: &(Vec<f64>, Vec<f64>),
    w_axis: &(Vec<f64>, Vec<f64>),
    lambda: f64,
) -> Result<Complex64, ChoiError> {
    let mut acc = Complex64::new(0.0, 0.0);
    for (&y, &wy) in y_axis.0.iter().zip(&y_axis.1) {
        let mut inner = Complex64::new(0.0, 0.0);
        for (&w, &ww) in w_axis.0.iter().zip(&w_axis.1) {
            let v = kernel.eval(a, y, w, d);
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(QuadratureError::IntegrandFailure { point: vec![y, w] }.into());
            }
            inner += ww * v;
        }
        acc += wy * inner;
    }
    Ok((1.0 - lambda * lambda) * acc)
}

fn element_over_boxes(
    kernel: &ProcessKernel,
    lambda: f64,
    a: f64,
    d: f64,
    y_box: (f64, f64),
    w_box: (f64, f64),
    order: usize,
) -> Result<Complex64, ChoiError> {
    let y_axis = correlation_axis(lambda, (y_box.0 + y_box.1) / 2.0, y_box.0, y_box.1, order)?;
    let w_axis = correlation_axis(lambda, (w_box.0 + w_box.1) / 2.0, w_box.0, w_box.1, order)?;
    element_sum(kernel, a, d, &y_axis, &w_axis, lambda)
}

/// One matrix element of the channel's dual state on the position basis:
///
/// ```text
///   <a|<b| rho |d>|c> = (1 - lambda^2) ∫∫ E(a, y, w, d) f_lambda(y, b) f_lambda(w, c) dy dw
/// ```
///
/// integrated over a box covering the effective support of both correlation
/// factors.
pub fn choi_element(
    kernel: &ProcessKernel,
    lambda: f64,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
) -> Result<Complex64, ChoiError> {
    for (name, value) in [("a", a), ("b", b), ("c", c), ("d", d)] {
        if !value.is_finite() {
            return Err(ChoiError::BadPosition { name, value });
        }
    }
    let halfwidth = correlation_halfwidth(lambda)?;
    let y_box = (b - halfwidth, b + halfwidth);
    let w_box = (c - halfwidth, c + halfwidth);
    let order = element_order(kernel, a, d, y_box, w_box);
    let y_axis = correlation_axis(lambda, b, y_box.0, y_box.1, order)?;
    let w_axis = correlation_axis(lambda, c, w_box.0, w_box.1, order)?;
    element_sum(kernel, a, d, &y_axis, &w_axis, lambda)
}

/// Dual state of a process kernel discretized on a uniform position grid.
///
/// Rows are indexed by the pair `(a, b)` as `i_a * n + i_b` and columns by
/// `(d, c)` as `i_d * n + i_c`; entries carry a factor `h^2` per continuous
/// index pair so that the matrix trace approximates the continuum trace.
#[derive(Clone, Debug)]
pub struct ChoiGrid {
    lambda: f64,
    extent: f64,
    grid_points: Vec<f64>,
    step: f64,
    /// Row-major, Hermitized, `h^2`-scaled.
    matrix: Vec<Complex64>,
    hermitian_defect: f64,
}

impl ChoiGrid {
    /// Correlation weight of the underlying two-mode state.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Grid half-extent `L`; positions run over `[-L, L]`.
    pub fn extent(&self) -> f64 {
        self.extent
    }

    /// Grid step `h`.
    pub fn step(&self) -> f64 {
        self.step
    }

    /// The shared per-axis position grid, ascending.
    pub fn grid_points(&self) -> &[f64] {
        &self.grid_points
    }

    /// Number of positions per axis.
    pub fn points_per_axis(&self) -> usize {
        self.grid_points.len()
    }

    /// Matrix dimension (`points_per_axis` squared).
    pub fn dim(&self) -> usize {
        self.grid_points.len() * self.grid_points.len()
    }

    /// Row-major Hermitized matrix entries.
    pub fn matrix(&self) -> &[Complex64] {
        &self.matrix
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.matrix[row * self.dim() + col]
    }

    /// Largest deviation from Hermitian symmetry before it was averaged away.
    pub fn hermitian_defect(&self) -> f64 {
        self.hermitian_defect
    }

    /// Trace of the scaled matrix; approximately 1 for a trace-preserving
    /// channel when the grid captures the state's support.
    pub fn trace(&self) -> f64 {
        let dim = self.dim();
        (0..dim).map(|k| self.matrix[k * dim + k].re).sum()
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.lambda == other.lambda
            && self.extent == other.extent
            && self.grid_points.len() == other.grid_points.len()
    }
}

/// Average a square complex matrix with its conjugate transpose in place and
/// return the largest entry-wise deviation the averaging removed.
fn hermitize(dim: usize, matrix: &mut [Complex64]) -> f64 {
    let mut defect: f64 = 0.0;
    for r in 0..dim {
        let diag = matrix[r * dim + r];
        defect = defect.max(diag.im.abs());
        matrix[r * dim + r] = Complex64::new(diag.re, 0.0);
        for c in (r + 1)..dim {
            let upper = matrix[r * dim + c];
            let lower = matrix[c * dim + r];
            defect = defect.max((upper - lower.conj()).norm());
            let avg = 0.5 * (upper + lower.conj());
            matrix[r * dim + c] = avg;
            matrix[c * dim + r] = avg.conj();
        }
    }
    defect
}

/// Build the dual-state matrix of `kernel` on the uniform grid of
/// `n_points` positions per axis spanning `[-extent, extent]`.
///
/// Every entry is computed independently (no symmetry is assumed), then the
/// matrix is Hermitized by averaging with its conjugate transpose; the
/// pre-averaging defect is recorded so callers can detect kernels that break
/// the symmetry a physical channel would have.
pub fn build_choi_grid(
    kernel: &ProcessKernel,
    lambda: f64,
    extent: f64,
    n_points: usize,
) -> Result<ChoiGrid, ChoiError> {
    if !(0.0..1.0).contains(&lambda) || lambda == 0.0 || !lambda.is_finite() {
        return Err(ChoiError::BadGridCorrelation(lambda));
    }
    if !extent.is_finite() || extent <= 0.0 || n_points < 2 {
        return Err(ChoiError::BadGrid {
            extent,
            points: n_points,
        });
    }
    let step = 2.0 * extent / (n_points - 1) as f64;
    let grid_points: Vec<f64> = (0..n_points).map(|i| -extent + i as f64 * step).collect();
    let halfwidth = correlation_halfwidth(lambda)?;
    let dim = n_points * n_points;
    let cell = step * step;

    let rows: Vec<Result<Vec<Complex64>, ChoiError>> = (0..dim)
        .into_par_iter()
        .map(|row| {
            let a = grid_points[row / n_points];
            let b = grid_points[row % n_points];
            let y_box = (b - halfwidth, b + halfwidth);
            let mut out = Vec::with_capacity(dim);
            for col in 0..dim {
                let d = grid_points[col / n_points];
                let c = grid_points[col % n_points];
                let w_box = (c - halfwidth, c + halfwidth);
                let order = element_order(kernel, a, d, y_box, w_box);
                let value =
                    element_over_boxes(kernel, lambda, a, d, y_box, w_box, order)?;
                out.push(cell * value);
            }
            Ok(out)
        })
        .collect();

    let mut matrix = Vec::with_capacity(dim * dim);
    for row in rows {
        matrix.extend(row?);
    }
    let hermitian_defect = hermitize(dim, &mut matrix);
    Ok(ChoiGrid {
        lambda,
        extent,
        grid_points,
        step,
        matrix,
        hermitian_defect,
    })
}

/// Half the trace norm of a Hermitian matrix, via a dense Hermitian
/// eigensolve. The input's sign is canonicalized first so that `A - B` and
/// `B - A` produce bit-identical results.
fn half_trace_norm(dim: usize, mut difference: Vec<Complex64>) -> f64 {
    let flip = difference
        .iter()
        .find(|v| v.re != 0.0 || v.im != 0.0)
        .is_some_and(|v| v.re < 0.0 || (v.re == 0.0 && v.im < 0.0));
    if flip {
        for v in &mut difference {
            *v = -*v;
        }
    }
    let m = DMatrix::from_row_slice(dim, dim, &difference);
    let eigenvalues = m.symmetric_eigen().eigenvalues;
    0.5 * eigenvalues.iter().map(|e| e.abs()).sum::<f64>()
}

/// Trace distance `T = (1/2) Tr |g1 - g2|` between two states on identical
/// grids.
pub fn trace_distance(g1: &ChoiGrid, g2: &ChoiGrid) -> Result<f64, ChoiError> {
    if !g1.same_shape(g2) {
        return Err(ChoiError::GridMismatch);
    }
    let difference: Vec<Complex64> = g1
        .matrix
        .iter()
        .zip(&g2.matrix)
        .map(|(x, y)| x - y)
        .collect();
    Ok(half_trace_norm(g1.dim(), difference))
}

/// Distance report between a reconstructed channel and the truth, through
/// their dual states.
#[derive(Clone, Copy, Debug)]
pub struct ChannelDistanceReport {
    /// Trace distance over the compared (non-negligible, mesh-covered)
    /// entries.
    pub trace_distance: f64,
    /// `max(0, 1 - T)^2`.
    pub fidelity_lower_bound: f64,
    /// State weight the comparison never saw: entries below the
    /// negligibility threshold, outside the mesh, or cut off by the grid and
    /// the clipped integration windows.
    pub truncation_mass: f64,
}

/// Multilinear interpolant over a complete rectilinear lattice of element
/// estimates.
struct KernelSurrogate {
    axes: [Vec<f64>; 4],
    values: Vec<Complex64>,
}

impl KernelSurrogate {
    fn from_estimates(estimates: &[ElementEstimate]) -> Result<Self, ChoiError> {
        if estimates.is_empty() {
            return Err(ChoiError::Coverage("no estimates supplied".into()));
        }
        let mut axes: [Vec<f64>; 4] = Default::default();
        for axis in 0..4 {
            let mut coords: Vec<f64> = estimates
                .iter()
                .map(|e| e.region.center()[axis])
                .collect();
            coords.sort_by(f64::total_cmp);
            coords.dedup();
            axes[axis] = coords;
        }
        let dims: [usize; 4] = [axes[0].len(), axes[1].len(), axes[2].len(), axes[3].len()];
        let total: usize = dims.iter().product();
        if total != estimates.len() {
            return Err(ChoiError::Coverage(format!(
                "{} estimates do not fill the {}x{}x{}x{} lattice of their coordinates",
                estimates.len(),
                dims[0],
                dims[1],
                dims[2],
                dims[3]
            )));
        }
        let mut values = vec![None; total];
        for estimate in estimates {
            let center = estimate.region.center();
            let mut flat = 0usize;
            for axis in 0..4 {
                let idx = axes[axis]
                    .binary_search_by(|p| p.total_cmp(&center[axis]))
                    .map_err(|_| {
                        ChoiError::Coverage(format!(
                            "estimate center {center:?} is not on the mesh lattice"
                        ))
                    })?;
                flat = flat * dims[axis] + idx;
            }
            if values[flat].replace(estimate.value).is_some() {
                return Err(ChoiError::Coverage(format!(
                    "duplicate estimate at mesh point {center:?}"
                )));
            }
        }
        let values = values
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| ChoiError::Coverage("mesh lattice has unfilled sites".into()))?;
        Ok(Self { axes, values })
    }

    fn extent(&self, axis: usize) -> (f64, f64) {
        (self.axes[axis][0], *self.axes[axis].last().unwrap())
    }

    /// Bracketing cell and interpolation fraction along one axis, clamped to
    /// the lattice.
    fn bracket(axis: &[f64], x: f64) -> (usize, usize, f64) {
        let last = axis.len() - 1;
        if last == 0 || x <= axis[0] {
            return (0, 0, 0.0);
        }
        if x >= axis[last] {
            return (last, last, 0.0);
        }
        let hi = axis.partition_point(|&p| p <= x);
        let lo = hi - 1;
        (lo, hi, (x - axis[lo]) / (axis[hi] - axis[lo]))
    }

    fn eval(&self, point: [f64; 4]) -> Complex64 {
        let dims = [
            self.axes[0].len(),
            self.axes[1].len(),
            self.axes[2].len(),
            self.axes[3].len(),
        ];
        let brackets: Vec<(usize, usize, f64)> = (0..4)
            .map(|axis| Self::bracket(&self.axes[axis], point[axis]))
            .collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for corner in 0..16 {
            let mut weight = 1.0;
            let mut flat = 0usize;
            for axis in 0..4 {
                let (lo, hi, t) = brackets[axis];
                let (idx, w) = if corner & (1 << axis) == 0 {
                    (lo, 1.0 - t)
                } else {
                    (hi, t)
                };
                weight *= w;
                flat = flat * dims[axis] + idx;
            }
            if weight != 0.0 {
                acc += weight * self.values[flat];
            }
        }
        acc
    }
}

/// Compare a mesh of element estimates against the true kernel through their
/// dual states on a `[-extent, extent]` grid with `n_points` per axis.
///
/// The comparison restricts itself to matrix entries where the true state is
/// non-negligible and both the entry's positions and its integration windows
/// fall inside the mesh; on those entries the estimated state (from a
/// multilinear interpolant of the estimates) and the true state are
/// integrated over the same clipped windows with the same quadrature, so
/// their difference isolates the reconstruction error. Everything the
/// comparison excluded is reported as `truncation_mass`.
pub fn compare_reconstruction(
    kernel: &ProcessKernel,
    estimates: &[ElementEstimate],
    lambda: f64,
    extent: f64,
    n_points: usize,
) -> Result<ChannelDistanceReport, ChoiError> {
    let truth = build_choi_grid(kernel, lambda, extent, n_points)?;
    compare_with_grid(kernel, estimates, &truth)
}

/// [`compare_reconstruction`] against an already-built true-state grid, for
/// callers that need the grid itself (for its Hermitian defect or reuse).
pub fn compare_with_grid(
    kernel: &ProcessKernel,
    estimates: &[ElementEstimate],
    truth: &ChoiGrid,
) -> Result<ChannelDistanceReport, ChoiError> {
    let surrogate = KernelSurrogate::from_estimates(estimates)?;
    for axis in 0..4 {
        if surrogate.axes[axis].len() < 2 {
            return Err(ChoiError::Coverage(format!(
                "mesh axis {axis} has a single coordinate; interpolation needs at least 2"
            )));
        }
    }
    let lambda = truth.lambda();
    let halfwidth = correlation_halfwidth(lambda)?;
    let n = truth.points_per_axis();
    let dim = truth.dim();
    let points = truth.grid_points().to_vec();
    let cell = truth.step() * truth.step();

    // Windows symmetric under the Hermitian pairing: positions use the
    // intersection of the first and last mesh axes, integration windows the
    // intersection of the two middle ones.
    let (a0, a1) = surrogate.extent(0);
    let (d0, d1) = surrogate.extent(3);
    let (pos_lo, pos_hi) = (a0.max(d0), a1.min(d1));
    let (b0, b1) = surrogate.extent(1);
    let (c0, c1) = surrogate.extent(2);
    let (win_lo, win_hi) = (b0.max(c0), b1.min(c1));
    if pos_lo >= pos_hi || win_lo >= win_hi {
        return Err(ChoiError::Coverage(
            "mesh axes do not overlap in a usable window".into(),
        ));
    }

    let max_abs = truth
        .matrix()
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    let threshold = NEGLIGIBILITY_FRACTION * max_abs;

    let entries: Vec<Result<(usize, usize, Complex64, Complex64), ChoiError>> = (0..dim)
        .into_par_iter()
        .flat_map_iter(|row| {
            let surrogate = &surrogate;
            let points = &points;
            let truth = &truth;
            (0..dim).filter_map(move |col| {
                let a = points[row / n];
                let b = points[row % n];
                let d = points[col / n];
                let c = points[col % n];
                if a < pos_lo || a > pos_hi || d < pos_lo || d > pos_hi {
                    return None;
                }
                if truth.entry(row, col).norm() <= threshold {
                    return None;
                }
                let y_box = ((b - halfwidth).max(win_lo), (b + halfwidth).min(win_hi));
                let w_box = ((c - halfwidth).max(win_lo), (c + halfwidth).min(win_hi));
                if y_box.0 >= y_box.1 || w_box.0 >= w_box.1 {
                    return None;
                }
                let order = element_order(kernel, a, d, y_box, w_box);
                let computed = (|| {
                    let y_axis = correlation_axis(lambda, b, y_box.0, y_box.1, order)?;
                    let w_axis = correlation_axis(lambda, c, w_box.0, w_box.1, order)?;
                    let true_entry =
                        cell * element_sum(kernel, a, d, &y_axis, &w_axis, lambda)?;
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (&y, &wy) in y_axis.0.iter().zip(&y_axis.1) {
                        let mut inner = Complex64::new(0.0, 0.0);
                        for (&w, &ww) in w_axis.0.iter().zip(&w_axis.1) {
                            inner += ww * surrogate.eval([a, y, w, d]);
                        }
                        acc += wy * inner;
                    }
                    let est_entry = cell * (1.0 - lambda * lambda) * acc;
                    Ok::<_, ChoiError>((row, col, est_entry, true_entry))
                })();
                Some(computed)
            })
        })
        .collect();

    let mut difference = vec![Complex64::new(0.0, 0.0); dim * dim];
    let mut compared_true_diag = 0.0;
    let mut compared = 0usize;
    for item in entries {
        let (row, col, est_entry, true_entry) = item?;
        difference[row * dim + col] = est_entry - true_entry;
        if row == col {
            compared_true_diag += true_entry.re;
        }
        compared += 1;
    }
    if compared == 0 {
        return Err(ChoiError::Coverage(
            "mesh does not overlap any non-negligible entry of the true state".into(),
        ));
    }
    hermitize(dim, &mut difference);
    let t = half_trace_norm(dim, difference);
    Ok(ChannelDistanceReport {
        trace_distance: t,
        fidelity_lower_bound: fidelity_lower_bound(t),
        truncation_mass: 1.0 - compared_true_diag,
    })
}
