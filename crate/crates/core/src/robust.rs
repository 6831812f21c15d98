//! RANSAC over the minimal solvers, scored by Sampson distance.

use log::debug;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::coeffs::AlgorithmKind;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Correspondence, InertialMeasurement, Mat3, NormalizedPoint, RelativePoseEstimate};
use crate::solvers::{count_positive_depths, minimal_candidates, SolverConfig, SolverOutput};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RansacConfig {
    /// Inlier threshold on the Sampson error, in normalized coordinates.
    pub threshold: f64,
    pub max_iterations: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl RansacConfig {
    /// Threshold given in pixels for a camera of focal length `focal`.
    pub fn with_pixel_threshold(pixels: f64, focal: f64) -> Self {
        Self {
            threshold: pixels / focal,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) || !self.threshold.is_finite() {
            return Err(Error::InvalidArgument("RANSAC threshold must be positive".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidArgument("RANSAC confidence must lie in (0, 1)".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("RANSAC needs at least one iteration".into()));
        }
        Ok(())
    }
}

impl Default for RansacConfig {
    /// One pixel at the default focal length.
    fn default() -> Self {
        Self {
            threshold: 1.0 / CameraIntrinsics::default().focal,
            max_iterations: 1000,
            confidence: 0.999,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RansacResult {
    pub best: SolverOutput,
    pub inlier_mask: Vec<bool>,
    /// Minimal samples drawn, including degenerate ones.
    pub iterations_run: usize,
}

impl RansacResult {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|b| **b).count()
    }

    pub fn inliers<'a>(&self, corrs: &'a [Correspondence]) -> Vec<Correspondence> {
        corrs
            .iter()
            .zip(&self.inlier_mask)
            .filter(|(_, m)| **m)
            .map(|(c, _)| *c)
            .collect()
    }
}

/// Signed first-order geometric error `m2^T E m1 / |grad|`, or `None` when
/// the gradient vanishes.
pub fn signed_sampson(e: &Mat3, p1: &NormalizedPoint, p2: &NormalizedPoint) -> Option<f64> {
    let em1 = e * p1.m;
    let m2e = e.tr_mul(&p2.m);
    let num = p2.m.dot(&em1);
    let den = (m2e.x * m2e.x + m2e.y * m2e.y + em1.x * em1.x + em1.y * em1.y).sqrt();
    if den < 1e-15 || !den.is_finite() {
        None
    } else {
        Some(num / den)
    }
}

/// Absolute Sampson error; `+inf` for a point at the epipole.
pub fn sampson_error(e: &Mat3, p1: &NormalizedPoint, p2: &NormalizedPoint) -> f64 {
    signed_sampson(e, p1, p2).map_or(f64::INFINITY, f64::abs)
}

/// Consensus of one model. A model with most of its inliers in front of
/// both cameras beats one without, whatever the counts: the twisted pair
/// of a slightly wrong rotation can fit more points than the rotation
/// itself. Then higher `inliers` wins, then lower truncated squared error.
#[derive(Clone, Debug, PartialEq)]
pub struct Score {
    pub inlier_mask: Vec<bool>,
    pub inliers: usize,
    pub cheiral: bool,
    pub truncated_cost: f64,
}

impl Score {
    pub fn better_than(&self, other: &Score) -> bool {
        (self.cheiral, self.inliers) > (other.cheiral, other.inliers)
            || (self.cheiral == other.cheiral
                && self.inliers == other.inliers
                && self.truncated_cost < other.truncated_cost)
    }
}

/// Per-correspondence Sampson errors under the row-dependent essential
/// matrix of `est`.
pub fn sampson_errors(est: &RelativePoseEstimate, corrs: &[Correspondence], readout: f64) -> Vec<f64> {
    corrs
        .iter()
        .map(|c| sampson_error(&est.essential_at(c.p1.row, c.p2.row, readout), &c.p1, &c.p2))
        .collect()
}

pub fn score_model(est: &RelativePoseEstimate, corrs: &[Correspondence], readout: f64, threshold: f64) -> Score {
    let t2 = threshold * threshold;
    let mut mask = Vec::with_capacity(corrs.len());
    let mut cost = 0.0;
    for e in sampson_errors(est, corrs, readout) {
        let inlier = e < threshold;
        mask.push(inlier);
        cost += if inlier { e * e } else { t2 };
    }
    let inlier_corrs: Vec<Correspondence> =
        corrs.iter().zip(&mask).filter(|(_, m)| **m).map(|(c, _)| *c).collect();
    Score {
        inliers: inlier_corrs.len(),
        cheiral: 2 * count_positive_depths(est, &inlier_corrs, readout) > inlier_corrs.len(),
        inlier_mask: mask,
        truncated_cost: cost,
    }
}

/// Samples needed to draw one all-inlier sample with probability
/// `confidence` at inlier ratio `w`.
pub fn required_iterations(confidence: f64, w: f64, k: usize) -> usize {
    let good = w.clamp(0.0, 1.0).powi(k as i32);
    if good >= 1.0 {
        return 1;
    }
    if good <= f64::EPSILON {
        return usize::MAX;
    }
    let n = (1.0 - confidence).ln() / (1.0 - good).ln();
    if n.is_finite() {
        n.ceil().max(1.0) as usize
    } else {
        usize::MAX
    }
}

fn is_sample_failure(e: &Error) -> bool {
    matches!(e, Error::Degenerate(_) | Error::NonFinite(_))
}

/// Seeded RANSAC. Sample `i` is drawn from stream `i` of a ChaCha8 generator
/// keyed by the seed, so results do not depend on evaluation order. Every
/// candidate of every sample is scored on all correspondences.
pub fn ransac_estimate(
    algorithm: AlgorithmKind,
    corrs: &[Correspondence],
    imu1: &InertialMeasurement,
    imu2: &InertialMeasurement,
    readout: f64,
    cfg: &RansacConfig,
    solver_cfg: &SolverConfig,
) -> Result<RansacResult> {
    cfg.validate()?;
    let n = corrs.len();
    let k = algorithm.min_points();
    if n < k {
        return Err(Error::InsufficientPoints {
            algorithm,
            required: k,
            got: n,
        });
    }

    let mut best: Option<(SolverOutput, Score)> = None;
    let mut needed = cfg.max_iterations;
    let mut productive = 0;
    let mut attempts = 0;
    let mut sample = Vec::with_capacity(k);

    while attempts < cfg.max_iterations && productive < needed {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(attempts as u64);
        attempts += 1;
        sample.clear();
        sample.extend(index::sample(&mut rng, n, k).into_iter().map(|i| corrs[i]));

        let candidates = match minimal_candidates(algorithm, &sample, imu1, imu2, readout, solver_cfg) {
            Ok(c) => c,
            Err(e) if is_sample_failure(&e) => {
                debug!("sample {attempts} skipped: {e}");
                continue;
            }
            Err(e) => return Err(e),
        };
        productive += 1;
        for cand in candidates {
            let score = score_model(&cand.estimate, corrs, readout, cfg.threshold);
            let improves = best.as_ref().is_none_or(|(_, b)| score.better_than(b));
            if improves {
                needed = required_iterations(cfg.confidence, score.inliers as f64 / n as f64, k);
                best = Some((cand, score));
            }
        }
    }

    let Some((model, _)) = best else {
        return Err(Error::NoConsensus(format!(
            "all {attempts} minimal samples were degenerate"
        )));
    };
    let score = score_model(&model.estimate, corrs, readout, cfg.threshold);
    if score.inliers < k {
        return Err(Error::NoConsensus(format!(
            "best model has {} inliers, fewer than the {k} needed by {algorithm}",
            score.inliers
        )));
    }
    Ok(RansacResult {
        best: model,
        inlier_mask: score.inlier_mask,
        iterations_run: attempts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{skew, Rotation, Vec3};
    use crate::sim::{add_pixel_noise, generate_scene, inject_outliers, normalize_all, synth_imu, ImuExtrinsics, NoiseConfig, SceneConfig};

    #[test]
    fn hand_example() {
        let e = skew(&Vec3::new(1.0, 0.0, 0.0));
        let m1 = NormalizedPoint::new(0.0, 0.0, 0.0);
        let m2 = NormalizedPoint::new(0.0, 1.0, 0.0);
        assert!((sampson_error(&e, &m1, &m2) - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((signed_sampson(&e, &m1, &m2).unwrap() + 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((sampson_error(&(e * 3.7), &m1, &m2) - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn epipole_returns_infinity() {
        let e = skew(&Vec3::new(0.0, 0.0, 1.0));
        let p = NormalizedPoint::new(0.0, 0.0, 0.0);
        assert_eq!(sampson_error(&e, &p, &p), f64::INFINITY);
    }

    #[test]
    fn iteration_bound() {
        assert_eq!(required_iterations(0.999, 1.0, 9), 1);
        assert_eq!(required_iterations(0.999, 0.0, 9), usize::MAX);
        let n = required_iterations(0.99, 0.5, 3);
        assert_eq!(n, ((0.01f64).ln() / (0.875f64).ln()).ceil() as usize);
    }

    fn moving_scene(seed: u64) -> crate::sim::SyntheticScene {
        generate_scene(
            &SceneConfig {
                seed,
                ..SceneConfig::default()
            }
            .with_opposite_velocities(Vec3::new(0.6, -0.3, 0.74), Vec3::new(-0.5, 0.7, 0.5)),
        )
    }

    #[test]
    fn truth_scores_all_noiseless_points() {
        let scene = moving_scene(1);
        let k = scene.intrinsics;
        let corrs = normalize_all(&scene.observe(), &k);
        let gt = scene.ground_truth();
        let s = score_model(&gt, &corrs, k.readout_time, RansacConfig::default().threshold);
        assert_eq!(s.inliers, corrs.len());
        for e in sampson_errors(&gt, &corrs, k.readout_time) {
            assert!(e < 1e-12);
        }
        let noisy = add_pixel_noise(&scene.observe(), 0.5, &k, 3);
        assert_eq!(score_model(&gt, &noisy, k.readout_time, 0.0).inliers, 0);
    }

    #[test]
    fn threshold_monotonicity() {
        let scene = moving_scene(2);
        let k = scene.intrinsics;
        let noisy = add_pixel_noise(&scene.observe(), 1.0, &k, 4);
        let gt = scene.ground_truth();
        let mut last = usize::MAX;
        for px in [3.0, 2.0, 1.0, 0.5, 0.1] {
            let s = score_model(&gt, &noisy, k.readout_time, px / k.focal);
            assert!(s.inliers <= last);
            last = s.inliers;
        }
    }

    #[test]
    fn truth_separates_outliers() {
        let scene = moving_scene(3);
        let k = scene.intrinsics;
        let mut corrs = add_pixel_noise(&scene.observe(), 0.3, &k, 5);
        let labels = inject_outliers(&mut corrs, 0.3, &k, 6);
        let s = score_model(&scene.ground_truth(), &corrs, k.readout_time, RansacConfig::default().threshold);
        let true_in = labels.iter().filter(|l| **l).count();
        let found = labels.iter().zip(&s.inlier_mask).filter(|(l, m)| **l && **m).count();
        assert!(found as f64 >= 0.95 * true_in as f64);
    }

    #[test]
    fn clean_data_stops_early_and_is_deterministic() {
        let scene = moving_scene(4);
        let k = scene.intrinsics;
        let corrs = normalize_all(&scene.observe(), &k);
        let (i1, i2) = synth_imu(&scene, &ImuExtrinsics::default(), &NoiseConfig::default());
        let cfg = RansacConfig {
            seed: 17,
            ..RansacConfig::default()
        };
        let a = ransac_estimate(AlgorithmKind::Uniform9, &corrs, &i1, &i2, k.readout_time, &cfg, &SolverConfig::default()).unwrap();
        assert!(a.iterations_run <= 3, "{}", a.iterations_run);
        assert_eq!(a.inlier_count(), corrs.len());
        let rescored = score_model(&a.best.estimate, &corrs, k.readout_time, cfg.threshold);
        assert_eq!(rescored.inlier_mask, a.inlier_mask);
        let b = ransac_estimate(AlgorithmKind::Uniform9, &corrs, &i1, &i2, k.readout_time, &cfg, &SolverConfig::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.best.estimate.rotation.angle_to(&Rotation::from_matrix(&scene.relative_rotation())).to_degrees() < 1e-3);
    }

    #[test]
    fn too_few_points() {
        let scene = moving_scene(5);
        let k = scene.intrinsics;
        let corrs: Vec<_> = normalize_all(&scene.observe(), &k).into_iter().take(8).collect();
        let (i1, i2) = synth_imu(&scene, &ImuExtrinsics::default(), &NoiseConfig::default());
        let r = ransac_estimate(AlgorithmKind::Uniform9, &corrs, &i1, &i2, k.readout_time, &RansacConfig::default(), &SolverConfig::default());
        assert!(matches!(r, Err(Error::InsufficientPoints { .. })));
    }
}
