//! Process kernels: position-basis matrices `E(x, y; w, z)` describing a
//! bosonic channel.
//!
//! A kernel is a pure complex-valued function of four real coordinates plus
//! metadata: a display name and an oscillation hint from which integration
//! layers size their quadrature orders. Physical channels satisfy the
//! Hermiticity relation `E(x, y, w, z) = conj(E(z, w, y, x))`; the built-ins
//! do, and user-supplied expressions are expected to.

mod expr;

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

pub use expr::parse_expression;

/// Smallest |sin(theta)| for which the fractional propagator is evaluated;
/// below this the kernel degenerates toward a delta distribution.
pub const MIN_FRACTIONAL_SIN: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("constant kernel value must be finite, got {0}")]
    NonFiniteConstant(Complex64),
    #[error(
        "fractional propagator degenerates at theta = {theta}: |sin(theta)| = {sin_abs:e} \
         is below {MIN_FRACTIONAL_SIN:e}"
    )]
    DegeneratePropagator { theta: f64, sin_abs: f64 },
    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("expression evaluates to a non-finite value at the origin")]
    NonFiniteAtOrigin,
}

/// Characteristic phase frequency of a kernel, used to size quadrature
/// orders. Frequencies are radians per unit coordinate length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OscillationHint {
    /// Frequency independent of where the kernel is sampled.
    Fixed(f64),
    /// Frequency proportional to the largest coordinate magnitude of the
    /// region being integrated over, as for Fourier-type phases `x * y`.
    CoordinateScaled(f64),
}

impl OscillationHint {
    /// Frequency estimate for a region whose coordinates reach `max_coord`
    /// in magnitude.
    pub fn frequency(&self, max_coord: f64) -> f64 {
        match *self {
            OscillationHint::Fixed(f) => f,
            OscillationHint::CoordinateScaled(s) => s * max_coord.abs(),
        }
    }
}

type EvalFn = dyn Fn(f64, f64, f64, f64) -> Complex64 + Send + Sync;

/// A process kernel: pure evaluation function plus metadata. Cloning is
/// cheap and clones share the evaluation function.
#[derive(Clone)]
pub struct ProcessKernel {
    name: String,
    hint: OscillationHint,
    eval: Arc<EvalFn>,
}

impl ProcessKernel {
    /// Wraps an arbitrary pure function as a kernel.
    pub fn from_fn<F>(name: impl Into<String>, hint: OscillationHint, f: F) -> Self
    where
        F: Fn(f64, f64, f64, f64) -> Complex64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            hint,
            eval: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn oscillation_hint(&self) -> OscillationHint {
        self.hint
    }

    /// Replaces the oscillation hint, e.g. for expression kernels whose
    /// phase scale the caller knows better than the default.
    pub fn with_hint(mut self, hint: OscillationHint) -> Self {
        self.hint = hint;
        self
    }

    pub fn eval(&self, x: f64, y: f64, w: f64, z: f64) -> Complex64 {
        (self.eval)(x, y, w, z)
    }
}

impl fmt::Debug for ProcessKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProcessKernel")
            .field("name", &self.name)
            .field("hint", &self.hint)
            .finish_non_exhaustive()
    }
}

/// Kernel of the Fourier-transform channel,
/// `E(x, y, w, z) = exp(i (x y - w z)) / (2 pi)`.
pub fn fourier_kernel() -> ProcessKernel {
    ProcessKernel::from_fn(
        "fourier",
        OscillationHint::CoordinateScaled(1.0),
        |x, y, w, z| {
            Complex64::new(0.0, x * y - w * z).exp() / (2.0 * std::f64::consts::PI)
        },
    )
}

/// Kernel that is the same finite complex value everywhere. Hermitian only
/// for real `k`; the physical readout layers reject the rest.
pub fn constant_kernel(k: Complex64) -> Result<ProcessKernel, KernelError> {
    if !k.re.is_finite() || !k.im.is_finite() {
        return Err(KernelError::NonFiniteConstant(k));
    }
    Ok(ProcessKernel::from_fn(
        format!("constant({k})"),
        OscillationHint::Fixed(0.0),
        move |_, _, _, _| k,
    ))
}

/// Kernel of the fractional Fourier channel of angle `theta`, built from the
/// propagator
/// `U(x, y) = sqrt(1 / (2 pi i sin theta))
///            * exp(i ((x^2 + y^2) cos theta - 2 x y) / (2 sin theta))`
/// as `E(x, y, w, z) = U(x, y) * conj(U(z, w))`.
pub fn fractional_fourier_kernel(theta: f64) -> Result<ProcessKernel, KernelError> {
    let (sin_t, cos_t) = theta.sin_cos();
    if !theta.is_finite() || sin_t.abs() < MIN_FRACTIONAL_SIN {
        return Err(KernelError::DegeneratePropagator {
            theta,
            sin_abs: sin_t.abs(),
        });
    }
    let prefactor = Complex64::new(0.0, -1.0 / (2.0 * std::f64::consts::PI * sin_t)).sqrt();
    let propagator = move |a: f64, b: f64| -> Complex64 {
        prefactor * Complex64::new(0.0, ((a * a + b * b) * cos_t - 2.0 * a * b) / (2.0 * sin_t)).exp()
    };
    Ok(ProcessKernel::from_fn(
        format!("fractional-fourier({theta})"),
        OscillationHint::CoordinateScaled((1.0 + cos_t.abs()) / sin_t.abs()),
        move |x, y, w, z| propagator(x, y) * propagator(z, w).conj(),
    ))
}

/// Compiles a kernel from an arithmetic expression in the coordinates
/// `x, y, w, z` with constants `pi` and `i`, operators `+ - * / ^` and the
/// functions `exp`, `sin`, `cos`. The expression is probed at the origin and
/// rejected if non-finite there. The default oscillation hint assumes
/// Fourier-like phases; override with [`ProcessKernel::with_hint`].
pub fn user_kernel_from_expression(source: &str) -> Result<ProcessKernel, KernelError> {
    let ast = parse_expression(source)?;
    let probe = ast.eval([0.0; 4]);
    if !probe.re.is_finite() || !probe.im.is_finite() {
        return Err(KernelError::NonFiniteAtOrigin);
    }
    Ok(ProcessKernel::from_fn(
        source.trim().to_string(),
        OscillationHint::CoordinateScaled(1.0),
        move |x, y, w, z| ast.eval([x, y, w, z]),
    ))
}
