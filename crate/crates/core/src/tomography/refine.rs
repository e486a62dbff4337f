//! Geometric region refinement and mesh scans.
//!
//! A direct element estimate averages the kernel over its region, so it only
//! represents the pointwise value where the kernel is flat at that scale.
//! [`refine_region`] tests flatness by trisecting the region along every axis
//! into 81 subregions and comparing their estimates against the central one;
//! while the test fails it recurses into the central subregion, whose gates
//! differ from the parent's only by `ln 3` of extra squeezing per axis.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::expectation::{estimate_element, estimator_normalization};
use super::shots::{chernoff_shots, simulate_shots_stream};
use crate::kernels::ProcessKernel;
use crate::probe::ProbeState;
use super::{gates_from_region, DetectorModel, ElementEstimate, Region4, TomographyError};

/// Number of subregions a trisection produces.
const SUBREGION_COUNT: usize = 81;

/// Index of the central subregion in the lexicographic offset order of
/// [`trisect`]: all four offsets zero.
const CENTRAL: usize = 40;

/// When no absolute floor is given, the flatness test switches to absolute
/// mode below this fraction of the largest subregion magnitude.
const AUTO_FLOOR_SCALE: f64 = 1e-6;

/// Controls for [`refine_region`].
#[derive(Clone, Copy, Debug)]
pub struct RefinementOptions {
    /// Relative flatness tolerance: refinement stops once every subregion
    /// estimate sits within this fraction of the central one.
    pub epsilon: f64,
    /// Deepest refinement level to attempt; level 0 already trisects the
    /// starting region once.
    pub max_depth: u32,
    /// Evaluate only this many of the 81 subregions, chosen at random but
    /// always including the central one. `None` evaluates all of them.
    pub subset_size: Option<usize>,
    /// Magnitude below which the flatness test compares absolute deviations
    /// against `epsilon * abs_floor` instead of relative ones. `None` derives
    /// the floor from the largest subregion magnitude at each level.
    pub abs_floor: Option<f64>,
    /// Seed for the subregion subset draw.
    pub subset_seed: u64,
}

impl RefinementOptions {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            max_depth: 12,
            subset_size: None,
            abs_floor: None,
            subset_seed: 0,
        }
    }

    fn validate(&self) -> Result<(), TomographyError> {
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(TomographyError::BadOptions(format!(
                "flatness tolerance must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if let Some(s) = self.subset_size {
            if !(2..=SUBREGION_COUNT).contains(&s) {
                return Err(TomographyError::BadOptions(format!(
                    "subset size must lie in 2..={SUBREGION_COUNT}, got {s}"
                )));
            }
        }
        if let Some(f) = self.abs_floor {
            if !f.is_finite() || f < 0.0 {
                return Err(TomographyError::BadOptions(format!(
                    "absolute floor must be non-negative and finite, got {f}"
                )));
            }
        }
        Ok(())
    }
}

/// The 81 subregions obtained by splitting every axis in three, ordered
/// lexicographically by their offset pattern `(-1, 0, +1)^4`.
fn trisect(region: &Region4) -> Result<Vec<Region4>, TomographyError> {
    let center = region.center();
    let widths = region.widths();
    let thirds = [widths[0] / 3.0, widths[1] / 3.0, widths[2] / 3.0, widths[3] / 3.0];
    let mut out = Vec::with_capacity(SUBREGION_COUNT);
    for i0 in -1i32..=1 {
        for i1 in -1i32..=1 {
            for i2 in -1i32..=1 {
                for i3 in -1i32..=1 {
                    out.push(Region4::new(
                        [
                            center[0] + f64::from(i0) * thirds[0],
                            center[1] + f64::from(i1) * thirds[1],
                            center[2] + f64::from(i2) * thirds[2],
                            center[3] + f64::from(i3) * thirds[3],
                        ],
                        thirds,
                    )?);
                }
            }
        }
    }
    Ok(out)
}

/// Subregion indices to evaluate at one refinement level: everything, or a
/// seeded draw that always contains the central subregion. The draw depends
/// only on `(seed, depth)`, never on thread scheduling.
fn choose_subregions(options: &RefinementOptions, depth: u32) -> Vec<usize> {
    match options.subset_size {
        None => (0..SUBREGION_COUNT).collect(),
        Some(size) => {
            let mut rng = ChaCha8Rng::seed_from_u64(options.subset_seed);
            rng.set_stream(1 + u64::from(depth));
            let others: Vec<usize> = (0..SUBREGION_COUNT).filter(|&j| j != CENTRAL).collect();
            let mut chosen: Vec<usize> =
                rand::seq::index::sample(&mut rng, others.len(), size - 1)
                    .into_iter()
                    .map(|k| others[k])
                    .collect();
            chosen.push(CENTRAL);
            chosen.sort_unstable();
            chosen
        }
    }
}

/// Refine around `point` until the kernel looks flat at the region scale,
/// then return the central subregion's estimate with the reached depth.
///
/// The starting region is the unsqueezed one: detector window width along the
/// first and last axes, probe support along the middle two. Each failed
/// flatness test shrinks the region by a factor of three per axis, i.e. adds
/// `ln 3` to each squeezing parameter. Exhausting `max_depth` yields
/// [`TomographyError::NonConvergence`] carrying the last estimate, so callers
/// can still inspect where refinement stalled.
pub fn refine_region(
    kernel: &ProcessKernel,
    point: [f64; 4],
    detector: &DetectorModel,
    probe: &ProbeState,
    options: &RefinementOptions,
) -> Result<ElementEstimate, TomographyError> {
    options.validate()?;
    let delta = detector.delta();
    let support = probe.delta_support();
    let mut region = Region4::new(point, [delta, support, support, delta])?;

    let mut last: Option<(ElementEstimate, f64)> = None;
    for depth in 0..=options.max_depth {
        let subregions = trisect(&region)?;
        let chosen = choose_subregions(options, depth);
        let mut estimates = Vec::with_capacity(chosen.len());
        for &j in &chosen {
            estimates.push(estimate_element(kernel, &subregions[j], detector, probe)?);
        }
        let central_pos = chosen
            .iter()
            .position(|&j| j == CENTRAL)
            .expect("the central subregion is always evaluated");
        let central = estimates[central_pos].clone();

        let denom = central.value.norm();
        let max_abs = estimates
            .iter()
            .map(|e| e.value.norm())
            .fold(0.0, f64::max);
        let floor = options.abs_floor.unwrap_or(AUTO_FLOOR_SCALE * max_abs);
        let worst_dev = estimates
            .iter()
            .map(|e| (e.value - central.value).norm())
            .fold(0.0, f64::max);
        let (flat, worst_ratio) = if denom > floor {
            (worst_dev <= options.epsilon * denom, worst_dev / denom)
        } else if floor > 0.0 {
            (worst_dev <= options.epsilon * floor, worst_dev / floor)
        } else {
            (worst_dev == 0.0, if worst_dev == 0.0 { 0.0 } else { f64::INFINITY })
        };

        if flat {
            return Ok(ElementEstimate { depth, ..central });
        }
        last = Some((central, worst_ratio));
        region = subregions[CENTRAL];
    }

    let (central, worst_ratio) = last.expect("at least one refinement level ran");
    Err(TomographyError::NonConvergence {
        depth: options.max_depth,
        worst_ratio,
        epsilon: options.epsilon,
        widths: central.region.widths(),
        last: Box::new(central),
    })
}

/// How many measurement runs to simulate per mesh point.
#[derive(Clone, Copy, Debug)]
pub enum ShotCount {
    /// Fixed run count.
    Explicit(u64),
    /// Derive the count per point from the concentration bound, using the
    /// point's refined squeezing.
    ChernoffBound {
        accuracy: f64,
        failure_probability: f64,
    },
}

/// Finite-shot layer of a mesh scan.
#[derive(Clone, Copy, Debug)]
pub struct ShotPlan {
    pub count: ShotCount,
    /// Base seed; point `i` draws from stream `i` of this seed, which makes
    /// the scan reproducible and independent of evaluation order.
    pub seed: u64,
}

/// Refine every mesh point, optionally replacing each converged estimate by a
/// simulated finite-shot one over the same refined region.
///
/// Points are independent and processed in parallel; the result order matches
/// the input order, and all randomness is derived per point, so the output is
/// identical no matter how many threads run the scan.
pub fn scan_mesh(
    kernel: &ProcessKernel,
    points: &[[f64; 4]],
    detector: &DetectorModel,
    probe: &ProbeState,
    options: &RefinementOptions,
    shots: Option<&ShotPlan>,
) -> Vec<Result<ElementEstimate, TomographyError>> {
    let normalization = estimator_normalization(detector, probe);
    points
        .par_iter()
        .enumerate()
        .map(|(index, point)| {
            let refined = refine_region(kernel, *point, detector, probe, options)?;
            let Some(plan) = shots else {
                return Ok(refined);
            };
            let m_runs = match plan.count {
                ShotCount::Explicit(m) => m,
                ShotCount::ChernoffBound {
                    accuracy,
                    failure_probability,
                } => {
                    let gates = gates_from_region(&refined.region, detector, probe);
                    chernoff_shots(
                        accuracy,
                        failure_probability,
                        normalization,
                        gates.total_squeezing(),
                    )?
                }
            };
            let noisy = simulate_shots_stream(
                kernel,
                &refined.region,
                detector,
                probe,
                m_runs,
                plan.seed,
                index as u64,
            )?;
            Ok(ElementEstimate {
                depth: refined.depth,
                ..noisy
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{constant_kernel, fourier_kernel, user_kernel_from_expression};
    use crate::probe::make_probe;
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use std::f64::consts::TAU;

    fn setup() -> (DetectorModel, ProbeState) {
        (
            DetectorModel::new(0.1).unwrap(),
            make_probe(0.1, 0.05).unwrap(),
        )
    }

    #[test]
    fn trisection_partitions_the_region() {
        let region = Region4::new([1.0, -2.0, 0.5, 0.0], [0.3, 0.6, 0.9, 1.2]).unwrap();
        let subs = trisect(&region).unwrap();
        assert_eq!(subs.len(), SUBREGION_COUNT);
        let total: f64 = subs.iter().map(Region4::volume).sum();
        assert_relative_eq!(total, region.volume(), max_relative = 1e-12);
        assert_eq!(subs[CENTRAL].center(), region.center());
        for sub in &subs {
            for axis in 0..4 {
                assert_relative_eq!(
                    sub.widths()[axis],
                    region.widths()[axis] / 3.0,
                    max_relative = 1e-15
                );
            }
        }
        // All centers distinct.
        for (i, si) in subs.iter().enumerate() {
            for sj in subs.iter().skip(i + 1) {
                assert_ne!(si.center(), sj.center());
            }
        }
    }

    #[test]
    fn constant_kernel_converges_at_depth_zero() {
        let (det, probe) = setup();
        let k = constant_kernel(Complex64::new(0.7, -0.2)).unwrap();
        let options = RefinementOptions::new(1e-6);
        let est = refine_region(&k, [0.4, -1.0, 2.2, 0.0], &det, &probe, &options).unwrap();
        assert_eq!(est.depth, 0);
        assert_relative_eq!(est.value.re, 0.7, max_relative = 1e-11);
        assert_relative_eq!(est.value.im, -0.2, max_relative = 1e-11);
        // The returned region is the central subregion of the first level.
        assert_relative_eq!(est.region.widths()[0], det.delta() / 3.0, max_relative = 1e-15);
        assert_relative_eq!(
            est.region.widths()[1],
            probe.delta_support() / 3.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn transform_kernel_is_flat_at_the_origin() {
        let (det, probe) = setup();
        let options = RefinementOptions::new(0.05);
        let est = refine_region(&fourier_kernel(), [0.0; 4], &det, &probe, &options).unwrap();
        assert_eq!(est.depth, 0);
        assert_relative_eq!(est.value.re, 1.0 / TAU, max_relative = 1e-5);
    }

    #[test]
    fn oscillatory_point_refines_deeper_and_converges_to_the_point_value() {
        let (det, probe) = setup();
        let options = RefinementOptions::new(0.05);
        let est = refine_region(&fourier_kernel(), [3.0, 3.0, 0.0, 0.0], &det, &probe, &options)
            .unwrap();
        assert!(est.depth >= 1, "expected refinement, got depth 0");
        let exact = Complex64::new(0.0, 9.0).exp() / TAU;
        assert!(
            (est.value - exact).norm() < 1e-3 * exact.norm(),
            "refined estimate {} vs exact {}",
            est.value,
            exact
        );
        // The returned region shrank accordingly.
        let expected_width = det.delta() / 3.0_f64.powi(est.depth as i32 + 1);
        assert_relative_eq!(est.region.widths()[0], expected_width, max_relative = 1e-12);
    }

    #[test]
    fn exhausted_depth_budget_reports_non_convergence() {
        let (det, probe) = setup();
        let mut options = RefinementOptions::new(0.05);
        options.max_depth = 1;
        let err = refine_region(&fourier_kernel(), [3.0, 3.0, 0.0, 0.0], &det, &probe, &options)
            .unwrap_err();
        match err {
            TomographyError::NonConvergence {
                depth,
                worst_ratio,
                epsilon,
                widths,
                last,
            } => {
                assert_eq!(depth, 1);
                assert!(worst_ratio > epsilon);
                assert!(widths.iter().all(|&w| w > 0.0));
                assert!(last.value.norm() > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn subset_refinement_is_deterministic() {
        let (det, probe) = setup();
        let mut options = RefinementOptions::new(0.05);
        options.subset_size = Some(20);
        options.subset_seed = 7;
        let a = refine_region(&fourier_kernel(), [2.0, 1.0, 0.0, 0.5], &det, &probe, &options)
            .unwrap();
        let b = refine_region(&fourier_kernel(), [2.0, 1.0, 0.0, 0.5], &det, &probe, &options)
            .unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.depth, b.depth);
        assert_eq!(a.region, b.region);
    }

    #[test]
    fn subset_draws_differ_across_depths_but_keep_the_central_region() {
        let options = RefinementOptions {
            subset_size: Some(10),
            subset_seed: 3,
            ..RefinementOptions::new(0.05)
        };
        let d0 = choose_subregions(&options, 0);
        let d1 = choose_subregions(&options, 1);
        assert_eq!(d0.len(), 10);
        assert!(d0.contains(&CENTRAL));
        assert!(d1.contains(&CENTRAL));
        assert_ne!(d0, d1, "independent draws almost surely differ");
        let mut sorted = d0.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), d0.len(), "subset indices must be distinct");
    }

    #[test]
    fn explicit_absolute_floor_accepts_near_zero_kernels() {
        // A kernel that is tiny everywhere: relative flatness can never hold
        // around its zero crossing, but an absolute floor at the right scale
        // accepts immediately.
        let (det, probe) = setup();
        let k = user_kernel_from_expression("x * 0.000001").unwrap();
        let mut options = RefinementOptions::new(0.05);
        options.abs_floor = Some(1e-3);
        let est = refine_region(&k, [0.0; 4], &det, &probe, &options).unwrap();
        assert_eq!(est.depth, 0);
        assert!(est.value.norm() < 1e-7);

        // Without the floor the automatic one is far below the deviations and
        // refinement honestly fails.
        let mut auto = RefinementOptions::new(0.05);
        auto.max_depth = 2;
        let err = refine_region(&k, [0.0; 4], &det, &probe, &auto).unwrap_err();
        assert!(matches!(err, TomographyError::NonConvergence { .. }));
    }

    #[test]
    fn zero_kernel_is_flat_everywhere() {
        let (det, probe) = setup();
        let k = constant_kernel(Complex64::new(0.0, 0.0)).unwrap();
        let est = refine_region(&k, [1.0, 2.0, -1.5, 0.3], &det, &probe, &RefinementOptions::new(1e-9))
            .unwrap();
        assert_eq!(est.depth, 0);
        assert_eq!(est.value, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn invalid_options_are_rejected() {
        let (det, probe) = setup();
        let k = fourier_kernel();
        for bad in [
            RefinementOptions::new(0.0),
            RefinementOptions::new(f64::NAN),
            RefinementOptions {
                subset_size: Some(1),
                ..RefinementOptions::new(0.05)
            },
            RefinementOptions {
                subset_size: Some(82),
                ..RefinementOptions::new(0.05)
            },
            RefinementOptions {
                abs_floor: Some(-1.0),
                ..RefinementOptions::new(0.05)
            },
        ] {
            assert!(matches!(
                refine_region(&k, [0.0; 4], &det, &probe, &bad),
                Err(TomographyError::BadOptions(_))
            ));
        }
    }

    #[test]
    fn scan_preserves_point_order_and_matches_single_refinement() {
        let (det, probe) = setup();
        let k = fourier_kernel();
        let options = RefinementOptions::new(0.05);
        let points = [[0.0; 4], [1.0, 0.5, 0.0, 0.0], [2.0, 2.0, 0.0, 0.0]];
        let scanned = scan_mesh(&k, &points, &det, &probe, &options, None);
        assert_eq!(scanned.len(), 3);
        for (point, result) in points.iter().zip(&scanned) {
            let direct = refine_region(&k, *point, &det, &probe, &options).unwrap();
            let fromscan = result.as_ref().unwrap();
            assert_eq!(fromscan.value, direct.value);
            assert_eq!(fromscan.depth, direct.depth);
        }
    }

    #[test]
    fn scan_results_are_reproducible_across_runs() {
        let (det, probe) = setup();
        let k = fourier_kernel();
        let options = RefinementOptions::new(0.05);
        let plan = ShotPlan {
            count: ShotCount::Explicit(200_000),
            seed: 42,
        };
        let points = [[0.0; 4], [0.5, 0.5, 0.0, 0.0]];
        let a = scan_mesh(&k, &points, &det, &probe, &options, Some(&plan));
        let b = scan_mesh(&k, &points, &det, &probe, &options, Some(&plan));
        for (ra, rb) in a.iter().zip(&b) {
            let (ea, eb) = (ra.as_ref().unwrap(), rb.as_ref().unwrap());
            assert_eq!(ea.value, eb.value);
            assert_eq!(ea.shots, eb.shots);
        }
        // Shot records are attached and reflect the requested run count.
        let shots = a[0].as_ref().unwrap().shots.unwrap();
        assert_eq!(shots.sigma_x.m_runs, 200_000);
        assert_eq!(shots.sigma_y.m_runs, 200_000);
    }

    #[test]
    fn scan_reports_per_point_failures_without_aborting_the_rest() {
        let (det, probe) = setup();
        let k = fourier_kernel();
        let mut options = RefinementOptions::new(0.05);
        options.max_depth = 0;
        // The origin is flat at depth zero; the oscillatory point cannot be.
        let points = [[0.0; 4], [3.0, 3.0, 0.0, 0.0]];
        let scanned = scan_mesh(&k, &points, &det, &probe, &options, None);
        assert!(scanned[0].is_ok());
        assert!(matches!(
            scanned[1],
            Err(TomographyError::NonConvergence { .. })
        ));
    }
}
