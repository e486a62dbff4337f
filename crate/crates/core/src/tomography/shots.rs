//! Finite-shot planning and simulation.
//!
//! Each run of the measurement has three outcomes per readout channel: a
//! detector click with qubit outcome +1, a click with outcome -1, or no
//! click. The channel average `(N+ - N-) / M` estimates the signed-click
//! expectation, and the element estimate rescales the two channel averages by
//! `exp(R/2)` over the normalization constant. Run counts come either from
//! the caller or from a concentration bound on that rescaled average.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use super::expectation::{
    click_probability, estimator_normalization, expectation_sigma_x, expectation_sigma_y,
};
use crate::kernels::ProcessKernel;
use crate::probe::ProbeState;
use super::{gates_from_region, DetectorModel, ElementEstimate, Region4, ShotRecord, ShotStats, TomographyError};

/// Largest run count the simulator accepts; beyond this the bound itself is
/// the useful output, not a simulation.
const MAX_SHOTS: f64 = 9.0e18;

/// Number of runs guaranteeing that the rescaled channel average deviates
/// from its mean by more than `accuracy` with probability at most
/// `failure_probability`, for the given normalization constant and total
/// squeezing:
///
/// ```text
///   M = ceil( 2 ln(2 / p) / (accuracy^2 A^2 exp(-R)) )
/// ```
///
/// The count grows by `exp(R)` — a factor 9 for the `2 ln 3` of squeezing
/// that trisects the two detector-side axes, 81 for the `4 ln 3` of one full
/// refinement level.
pub fn chernoff_shots(
    accuracy: f64,
    failure_probability: f64,
    normalization: f64,
    total_squeezing: f64,
) -> Result<u64, TomographyError> {
    if !accuracy.is_finite()
        || accuracy <= 0.0
        || !failure_probability.is_finite()
        || failure_probability <= 0.0
        || failure_probability >= 1.0
    {
        return Err(TomographyError::BadConfidence {
            epsilon: accuracy,
            p: failure_probability,
        });
    }
    if !normalization.is_finite() || normalization <= 0.0 {
        return Err(TomographyError::BadNormalization(normalization));
    }
    let raw = 2.0 * (2.0 / failure_probability).ln()
        / (accuracy * accuracy * normalization * normalization * (-total_squeezing).exp());
    if !raw.is_finite() || raw > MAX_SHOTS {
        return Err(TomographyError::ShotCountOverflow { raw });
    }
    Ok(raw.ceil() as u64)
}

/// Draw the three-outcome counts of one readout channel.
///
/// The trinomial `(N+, N-, N0)` is sampled through two binomials —
/// `N+ ~ Bin(M, p+)`, then `N- ~ Bin(M - N+, p- / (1 - p+))` — which stays
/// O(1) at the astronomically large run counts the concentration bound can
/// demand.
fn draw_channel(
    rng: &mut ChaCha8Rng,
    m_runs: u64,
    p_plus: f64,
    p_minus: f64,
    seed: u64,
) -> ShotStats {
    let counts_plus = if p_plus > 0.0 {
        Binomial::new(m_runs, p_plus.min(1.0))
            .expect("clamped probability is valid")
            .sample(rng)
    } else {
        0
    };
    let rest = m_runs - counts_plus;
    let conditional = if p_plus < 1.0 {
        (p_minus / (1.0 - p_plus)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let counts_minus = if rest > 0 && conditional > 0.0 {
        Binomial::new(rest, conditional)
            .expect("clamped probability is valid")
            .sample(rng)
    } else {
        0
    };
    ShotStats {
        m_runs,
        counts_plus,
        counts_minus,
        counts_null: m_runs - counts_plus - counts_minus,
        rng_seed: seed,
    }
}

/// Outcome probabilities `(p+, p-)` of one channel from its signed-click
/// expectation and the click probability, rejecting combinations that are
/// negative beyond the quadrature tolerance.
fn channel_probabilities(
    click: f64,
    signed: f64,
    tolerance: f64,
) -> Result<(f64, f64), TomographyError> {
    let p_plus = 0.5 * (click + signed);
    let p_minus = 0.5 * (click - signed);
    for p in [p_plus, p_minus] {
        if p < -tolerance {
            return Err(TomographyError::Unphysical {
                what: "readout outcome probability",
                value: p,
                tolerance,
            });
        }
    }
    Ok((p_plus.clamp(0.0, 1.0), p_minus.clamp(0.0, 1.0)))
}

/// Simulate `m_runs` measurement runs per readout channel over `region` and
/// form the finite-shot element estimate.
pub fn simulate_shots(
    kernel: &ProcessKernel,
    region: &Region4,
    detector: &DetectorModel,
    probe: &ProbeState,
    m_runs: u64,
    seed: u64,
) -> Result<ElementEstimate, TomographyError> {
    simulate_shots_stream(kernel, region, detector, probe, m_runs, seed, 0)
}

/// Like [`simulate_shots`] but drawing from a numbered stream of the seed, so
/// mesh scans can give every point its own independent, reproducible
/// randomness.
pub(super) fn simulate_shots_stream(
    kernel: &ProcessKernel,
    region: &Region4,
    detector: &DetectorModel,
    probe: &ProbeState,
    m_runs: u64,
    seed: u64,
    stream: u64,
) -> Result<ElementEstimate, TomographyError> {
    if m_runs == 0 {
        return Err(TomographyError::BadShotCount);
    }
    let gates = gates_from_region(region, detector, probe);
    let total_squeezing = gates.total_squeezing();
    let scale = (0.5 * total_squeezing).exp() / estimator_normalization(detector, probe);
    if !scale.is_finite() {
        return Err(TomographyError::SqueezingOverflow(total_squeezing));
    }

    let click = click_probability(kernel, &gates, detector, probe)?;
    let x = expectation_sigma_x(kernel, &gates, detector, probe)?;
    let y = expectation_sigma_y(kernel, &gates, detector, probe)?;
    let tolerance = click.quad_err + x.quad_err.max(y.quad_err) + 1e-12;
    let (px_plus, px_minus) = channel_probabilities(click.value, x.value, tolerance)?;
    let (py_plus, py_minus) = channel_probabilities(click.value, y.value, tolerance)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let sigma_x = draw_channel(&mut rng, m_runs, px_plus, px_minus, seed);
    let sigma_y = draw_channel(&mut rng, m_runs, py_plus, py_minus, seed);

    let value = Complex64::new(
        scale * sigma_x.empirical_mean(),
        scale * sigma_y.empirical_mean(),
    );
    Ok(ElementEstimate {
        value,
        region: *region,
        depth: 0,
        quad_err: scale * x.quad_err.hypot(y.quad_err),
        shots: Some(ShotRecord { sigma_x, sigma_y }),
    })
}
