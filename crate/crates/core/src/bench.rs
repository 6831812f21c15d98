//! Synthetic sweep benchmarks, error metrics and summaries.
//!
//! A sweep varies one quantity (velocity, pixel noise, IMU noise) over a
//! range and runs every requested method on the same randomly drawn trials.
//! Trial `i` uses the same geometry, velocity directions and noise draws at
//! every sweep value, so only the swept quantity changes along a row of the
//! results.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::AlgorithmKind;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Correspondence, InertialMeasurement, Mat3, RelativePoseEstimate, Vec3};
use crate::io::CorrespondenceFile;
use crate::refine::{refine, RefineConfig};
use crate::robust::{ransac_estimate, score_model, RansacConfig};
use crate::sim::{
    generate_scene, inject_pixel_outliers, normalize_all, perturb_pixels, synth_imu, ImuExtrinsics, MotionType,
    NoiseConfig, PixelCorrespondence, SceneConfig, SyntheticScene,
};
use crate::solvers::{minimal_candidates, SolverConfig};

/// A benchmarked estimator: one of the five solvers, or the global-shutter
/// baseline (Angular5 fed zero angular velocity).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Solver(AlgorithmKind),
    Gs5,
}

impl Method {
    pub fn algorithm(self) -> AlgorithmKind {
        match self {
            Method::Solver(a) => a,
            Method::Gs5 => AlgorithmKind::Angular5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Solver(a) => a.name(),
            Method::Gs5 => "gs5",
        }
    }

    /// The inertial input this method sees.
    pub fn prepare(self, imu: &InertialMeasurement) -> InertialMeasurement {
        match self {
            Method::Gs5 => imu.without_rotation_rate(),
            Method::Solver(_) => *imu,
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("gs5") {
            return Ok(Method::Gs5);
        }
        s.parse().map(Method::Solver)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepVariable {
    /// Linear velocity magnitude, m/s, with zero angular velocity.
    LinVel,
    /// Angular velocity magnitude, rad/s, with zero linear velocity.
    AngVel,
    /// Pixel noise standard deviation.
    PixelNoise,
    /// Gravity direction noise, degrees per axis.
    GravityNoise,
    /// Angular velocity direction noise, degrees.
    AngVelNoise,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::LinVel => "linvel",
            SweepVariable::AngVel => "angvel",
            SweepVariable::PixelNoise => "pixnoise",
            SweepVariable::GravityNoise => "gravnoise",
            SweepVariable::AngVelNoise => "wnoise",
        }
    }

    /// `(min, max, steps)`.
    pub fn default_range(self) -> (f64, f64, usize) {
        match self {
            SweepVariable::LinVel => (0.0, 10.0, 6),
            SweepVariable::AngVel => (0.0, 3.0, 7),
            SweepVariable::PixelNoise => (0.0, 1.0, 6),
            SweepVariable::GravityNoise => (0.0, 1.0, 6),
            SweepVariable::AngVelNoise => (0.0, 3.0, 7),
        }
    }
}

impl FromStr for SweepVariable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            SweepVariable::LinVel,
            SweepVariable::AngVel,
            SweepVariable::PixelNoise,
            SweepVariable::GravityNoise,
            SweepVariable::AngVelNoise,
        ]
        .into_iter()
        .find(|v| v.name().eq_ignore_ascii_case(s))
        .ok_or_else(|| Error::InvalidArgument(format!("unknown sweep '{s}'")))
    }
}

pub fn parse_motion(s: &str) -> Result<MotionType> {
    match s.to_ascii_lowercase().as_str() {
        "forward" => Ok(MotionType::Forward),
        "sideways" | "sideway" => Ok(MotionType::Sideways),
        _ => Err(Error::InvalidArgument(format!("unknown motion '{s}'"))),
    }
}

/// Everything that defines one synthetic trial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialSetup {
    pub motion: MotionType,
    /// Linear velocity magnitude of each camera, m/s.
    pub linear_speed: f64,
    /// Angular velocity magnitude of each camera, rad/s.
    pub angular_speed: f64,
    pub pixel_sigma: f64,
    pub gravity_noise_deg: f64,
    pub angvel_noise_deg: f64,
    pub outlier_fraction: f64,
    pub n_points: usize,
    pub seed: u64,
}

impl Default for TrialSetup {
    fn default() -> Self {
        Self {
            motion: MotionType::Forward,
            linear_speed: 1.0,
            angular_speed: 1.0,
            pixel_sigma: 0.0,
            gravity_noise_deg: 0.0,
            angvel_noise_deg: 0.0,
            outlier_fraction: 0.0,
            n_points: 300,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrialData {
    pub scene: SyntheticScene,
    /// Observed pixels after noise and outlier injection.
    pub pixels: Vec<PixelCorrespondence>,
    /// `false` for injected outliers.
    pub inlier_labels: Vec<bool>,
    pub corrs: Vec<Correspondence>,
    pub imu1: InertialMeasurement,
    pub imu2: InertialMeasurement,
}

impl TrialData {
    pub fn readout(&self) -> f64 {
        self.scene.intrinsics.readout_time
    }

    pub fn ground_truth(&self) -> RelativePoseEstimate {
        self.scene.ground_truth()
    }
}

/// Mixes two integers into a well-spread seed.
pub fn derive_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Velocities are drawn in random directions; the second camera moves
/// opposite to the first.
pub fn generate_trial(setup: &TrialSetup) -> TrialData {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(setup.seed, 1));
    let dir_d: [f64; 3] = UnitSphere.sample(&mut rng);
    let dir_w: [f64; 3] = UnitSphere.sample(&mut rng);
    let cfg = SceneConfig {
        n_points: setup.n_points,
        motion: setup.motion,
        seed: derive_seed(setup.seed, 2),
        ..SceneConfig::default()
    }
    .with_opposite_velocities(
        Vec3::from(dir_d) * setup.linear_speed,
        Vec3::from(dir_w) * setup.angular_speed,
    );
    let scene = generate_scene(&cfg);
    let k = scene.intrinsics;
    let mut pixels = perturb_pixels(&scene.observe(), setup.pixel_sigma, derive_seed(setup.seed, 3));
    let inlier_labels = inject_pixel_outliers(&mut pixels, setup.outlier_fraction, &k, derive_seed(setup.seed, 4));
    let noise = NoiseConfig {
        pixel_sigma: setup.pixel_sigma,
        gravity_angle_deg: setup.gravity_noise_deg,
        angvel_angle_deg: setup.angvel_noise_deg,
        seed: derive_seed(setup.seed, 5),
    };
    let (imu1, imu2) = synth_imu(&scene, &ImuExtrinsics::default(), &noise);
    TrialData {
        corrs: normalize_all(&pixels, &k),
        scene,
        pixels,
        inlier_labels,
        imu1,
        imu2,
    }
}

/// Angle of `R_gt^T R_est` in degrees.
pub fn rotation_error(r_gt: &Mat3, r_est: &Mat3) -> Result<f64> {
    for r in [r_gt, r_est] {
        let orth = (r.transpose() * r - Mat3::identity()).abs().max();
        if !(orth < 1e-6) || !(r.determinant() > 0.0) {
            return Err(Error::InvalidArgument("rotation error of a non-rotation matrix".into()));
        }
    }
    let c = (((r_gt.transpose() * r_est).trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    Ok(c.acos().to_degrees())
}

/// Angle between translation directions in degrees, folded to `[0, 90]`
/// because the sign of `t` is not observable from the epipolar constraint.
pub fn translation_error(t_gt: &Vec3, t_est: &Vec3) -> Result<f64> {
    let (a, b) = (t_gt.norm(), t_est.norm());
    if !(a > 1e-12) || !(b > 1e-12) {
        return Err(Error::InvalidArgument("translation error of a zero vector".into()));
    }
    let theta = (t_gt.dot(t_est) / (a * b)).clamp(-1.0, 1.0).acos().to_degrees();
    Ok(theta.min(180.0 - theta))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub ransac: RansacConfig,
    pub solver: SolverConfig,
    /// `None` skips refinement.
    pub refine: Option<RefineConfig>,
    /// Run full RANSAC. Otherwise the first minimal set is solved directly,
    /// its candidates are ranked by consensus on all correspondences, and
    /// every correspondence is used for refinement.
    pub full_ransac: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            ransac: RansacConfig::default(),
            solver: SolverConfig::default(),
            refine: Some(RefineConfig::default()),
            full_ransac: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutcome {
    pub estimate: RelativePoseEstimate,
    /// Estimate before refinement.
    pub initial: RelativePoseEstimate,
    pub inliers: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Refinement energy before and after, when refinement ran.
    pub energies: Option<(f64, f64)>,
}

/// Estimation as used by the benchmark and the `estimate` command.
pub fn run_pipeline(
    method: Method,
    corrs: &[Correspondence],
    imu1: &InertialMeasurement,
    imu2: &InertialMeasurement,
    readout: f64,
    cfg: &PipelineConfig,
) -> Result<PipelineOutcome> {
    let algorithm = method.algorithm();
    let imu1 = method.prepare(imu1);
    let imu2 = method.prepare(imu2);

    let (initial, converged, inlier_set, inliers, iterations) = if cfg.full_ransac {
        let r = ransac_estimate(algorithm, corrs, &imu1, &imu2, readout, &cfg.ransac, &cfg.solver)?;
        let set = r.inliers(corrs);
        (r.best.estimate, r.best.converged, set, r.inlier_count(), r.iterations_run)
    } else {
        let k = algorithm.min_points();
        if corrs.len() < k {
            return Err(Error::InsufficientPoints {
                algorithm,
                required: k,
                got: corrs.len(),
            });
        }
        let candidates = minimal_candidates(algorithm, &corrs[..k], &imu1, &imu2, readout, &cfg.solver)?;
        let (best, score) = candidates
            .into_iter()
            .map(|c| {
                let s = score_model(&c.estimate, corrs, readout, cfg.ransac.threshold);
                (c, s)
            })
            .reduce(|a, b| if b.1.better_than(&a.1) { b } else { a })
            .expect("at least one candidate");
        (best.estimate, best.converged, corrs.to_vec(), score.inliers, 1)
    };

    let (estimate, energies, refined_ok) = match &cfg.refine {
        Some(rc) if !inlier_set.is_empty() => match refine(&initial, &inlier_set, readout, algorithm, rc) {
            Ok(out) => (out.estimate, Some((out.initial_energy, out.final_energy)), true),
            Err(e) => {
                warn!("refinement failed: {e}");
                (initial, None, false)
            }
        },
        _ => (initial, None, true),
    };
    Ok(PipelineOutcome {
        estimate,
        initial,
        inliers,
        iterations,
        converged: converged && refined_ok,
        energies,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub algorithm: String,
    pub sweep_value: f64,
    pub trial: usize,
    pub rot_err_deg: f64,
    pub trans_err_deg: f64,
    pub runtime_ms: f64,
    pub inliers: usize,
    pub converged: bool,
}

pub const CSV_HEADER: &str = "algorithm,sweep_value,trial,rot_err_deg,trans_err_deg,runtime_ms,inliers,converged";

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub min: f64,
    pub max: f64,
    pub steps: usize,
    pub motion: MotionType,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub seed: u64,
    pub outlier_fraction: f64,
    pub n_points: usize,
    pub pipeline: PipelineConfig,
    /// Record wall-clock runtimes. Off by default so that output files are
    /// reproducible byte for byte.
    pub timing: bool,
}

impl SweepSpec {
    /// Default range for `variable`, the proposed solvers plus the
    /// baseline, 100 trials.
    pub fn new(variable: SweepVariable, motion: MotionType) -> Self {
        let (min, max, steps) = variable.default_range();
        Self {
            variable,
            min,
            max,
            steps,
            motion,
            methods: vec![
                Method::Solver(AlgorithmKind::Uniform9),
                Method::Solver(AlgorithmKind::Uniform11),
                Method::Gs5,
            ],
            trials: 100,
            seed: 0,
            outlier_fraction: 0.0,
            n_points: 300,
            pipeline: PipelineConfig {
                full_ransac: false,
                ..PipelineConfig::default()
            },
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min <= self.max) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(Error::InvalidArgument("sweep range needs finite min <= max".into()));
        }
        if self.min < 0.0 {
            return Err(Error::InvalidArgument("sweep values must be non-negative".into()));
        }
        if self.steps < 2 {
            return Err(Error::InvalidArgument("a sweep needs at least 2 steps".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("a sweep needs at least 1 trial".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no algorithms requested".into()));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::InvalidArgument("outlier fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.steps)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (self.steps - 1) as f64)
            .collect()
    }

    pub fn trial_setup(&self, value: f64, trial: usize) -> TrialSetup {
        let mut s = TrialSetup {
            motion: self.motion,
            outlier_fraction: self.outlier_fraction,
            n_points: self.n_points,
            seed: derive_seed(self.seed, trial as u64),
            ..TrialSetup::default()
        };
        match self.variable {
            SweepVariable::LinVel => {
                s.linear_speed = value;
                s.angular_speed = 0.0;
            }
            SweepVariable::AngVel => {
                s.linear_speed = 0.0;
                s.angular_speed = value;
            }
            SweepVariable::PixelNoise => s.pixel_sigma = value,
            SweepVariable::GravityNoise => s.gravity_noise_deg = value,
            SweepVariable::AngVelNoise => s.angvel_noise_deg = value,
        }
        s
    }
}

fn failure_record(method: Method, value: f64, trial: usize, runtime_ms: f64) -> TrialRecord {
    TrialRecord {
        algorithm: method.name().to_string(),
        sweep_value: value,
        trial,
        rot_err_deg: 180.0,
        trans_err_deg: 90.0,
        runtime_ms,
        inliers: 0,
        converged: false,
    }
}

/// Copy of `cfg` whose refinement measures Sampson errors in pixels.
pub fn with_pixel_residuals(cfg: &PipelineConfig, focal: f64) -> PipelineConfig {
    let mut out = cfg.clone();
    if let Some(r) = out.refine.as_mut() {
        r.residual_scale = focal;
    }
    out
}

fn run_one(spec: &SweepSpec, method: Method, data: &TrialData, value: f64, trial: usize) -> TrialRecord {
    let start = Instant::now();
    let cfg = with_pixel_residuals(&spec.pipeline, data.scene.intrinsics.focal);
    let outcome = run_pipeline(method, &data.corrs, &data.imu1, &data.imu2, data.readout(), &cfg);
    let runtime_ms = if spec.timing {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    let out = match outcome {
        Ok(o) => o,
        Err(e) => {
            log::debug!("{method} value {value} trial {trial}: {e}");
            return failure_record(method, value, trial, runtime_ms);
        }
    };
    let gt = data.ground_truth();
    let rot = rotation_error(&gt.rotation.to_matrix(), &out.estimate.rotation.to_matrix());
    let trans = translation_error(&gt.translation, &out.estimate.translation);
    match (rot, trans) {
        (Ok(r), Ok(t)) => TrialRecord {
            algorithm: method.name().to_string(),
            sweep_value: value,
            trial,
            rot_err_deg: r,
            trans_err_deg: t,
            runtime_ms,
            inliers: out.inliers,
            converged: out.converged,
        },
        _ => failure_record(method, value, trial, runtime_ms),
    }
}

/// Runs every (value, trial, method) combination. Records come back sorted
/// by algorithm name, sweep value and trial.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<TrialRecord>> {
    spec.validate()?;
    let values = spec.values();
    let jobs: Vec<(f64, usize)> = values
        .iter()
        .flat_map(|&v| (0..spec.trials).map(move |t| (v, t)))
        .collect();
    let mut records: Vec<TrialRecord> = jobs
        .par_iter()
        .flat_map_iter(|&(value, trial)| {
            let data = generate_trial(&spec.trial_setup(value, trial));
            spec.methods
                .iter()
                .map(|&m| run_one(spec, m, &data, value, trial))
                .collect::<Vec<_>>()
        })
        .collect();
    records.sort_by(|a, b| {
        a.algorithm
            .cmp(&b.algorithm)
            .then(a.sweep_value.total_cmp(&b.sweep_value))
            .then(a.trial.cmp(&b.trial))
    });
    Ok(records)
}

pub fn write_records<W: std::io::Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: std::io::Read>(input: R) -> Result<Vec<TrialRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected CSV header '{}'", header.join(",")),
        });
    }
    rd.deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Box-plot statistics of one group.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxStats {
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub mean: f64,
    /// Values beyond 1.5 IQR from the quartiles.
    pub outliers: usize,
}

/// Quantile by linear interpolation between order statistics at position
/// `p (n - 1)`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q1 = quantile(&v, 0.25);
        let q3 = quantile(&v, 0.75);
        let iqr = q3 - q1;
        let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        Some(Self {
            count: v.len(),
            median: quantile(&v, 0.5),
            q1,
            q3,
            mean: v.iter().sum::<f64>() / v.len() as f64,
            outliers: v.iter().filter(|x| **x < lo || **x > hi).count(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub algorithm: String,
    pub sweep_value: f64,
    pub rotation: BoxStats,
    pub translation: BoxStats,
    pub failures: usize,
}

/// Groups records by algorithm and sweep value. When `algorithms` is
/// non-empty only those are kept, and requested algorithms with no records
/// are reported with a warning.
pub fn summarize_records(records: &[TrialRecord], algorithms: &[String]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, u64), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        if !algorithms.is_empty() && !algorithms.iter().any(|a| a.eq_ignore_ascii_case(&r.algorithm)) {
            continue;
        }
        // order-preserving key for non-negative values
        groups
            .entry((r.algorithm.clone(), r.sweep_value.to_bits()))
            .or_default()
            .push(r);
    }
    for a in algorithms {
        if !records.iter().any(|r| r.algorithm.eq_ignore_ascii_case(a)) {
            warn!("no records for algorithm '{a}'");
        }
    }
    let mut rows: Vec<SummaryRow> = groups
        .into_iter()
        .filter_map(|((algorithm, _), g)| {
            let rot: Vec<f64> = g.iter().map(|r| r.rot_err_deg).collect();
            let tr: Vec<f64> = g.iter().map(|r| r.trans_err_deg).collect();
            Some(SummaryRow {
                algorithm,
                sweep_value: g[0].sweep_value,
                rotation: BoxStats::from_values(&rot)?,
                translation: BoxStats::from_values(&tr)?,
                failures: g.iter().filter(|r| !r.converged).count(),
            })
        })
        .collect();
    rows.sort_by(|a, b| a.algorithm.cmp(&b.algorithm).then(a.sweep_value.total_cmp(&b.sweep_value)));
    rows
}

pub fn summarize(path: &Path, algorithms: &[String]) -> Result<Vec<SummaryRow>> {
    let file = std::fs::File::open(path)?;
    let records = read_records(file)?;
    Ok(summarize_records(&records, algorithms))
}

pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:<10} {:>8} {:>5} | {:>10} {:>10} {:>10} {:>10} {:>4} | {:>10} {:>10} {:>10} {:>10} {:>4} | {:>4}",
        "algorithm", "value", "n", "rot_med", "rot_q1", "rot_q3", "rot_mean", "out", "tr_med", "tr_q1", "tr_q3", "tr_mean", "out", "fail"
    )
    .unwrap();
    for r in rows {
        let (a, b) = (&r.rotation, &r.translation);
        writeln!(
            s,
            "{:<10} {:>8.4} {:>5} | {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>4} | {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>4} | {:>4}",
            r.algorithm, r.sweep_value, a.count, a.median, a.q1, a.q3, a.mean, a.outliers, b.median, b.q1, b.q3, b.mean, b.outliers, r.failures
        )
        .unwrap();
    }
    s
}

/// Spearman rank correlation, with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FileEstimate {
    pub method: Method,
    pub outcome: PipelineOutcome,
    pub total: usize,
}

/// Reads a correspondence file and runs RANSAC followed by refinement.
/// `ransac_px` is the inlier threshold in pixels.
pub fn estimate_from_file(
    path: &Path,
    method: Method,
    ransac_px: f64,
    seed: u64,
    refine_cfg: Option<RefineConfig>,
) -> Result<FileEstimate> {
    let file = CorrespondenceFile::read(path)?;
    estimate_from_data(&file, method, ransac_px, seed, refine_cfg)
}

pub fn estimate_from_data(
    file: &CorrespondenceFile,
    method: Method,
    ransac_px: f64,
    seed: u64,
    refine_cfg: Option<RefineConfig>,
) -> Result<FileEstimate> {
    let corrs = file.correspondences();
    let k: &CameraIntrinsics = &file.intrinsics;
    let cfg = PipelineConfig {
        ransac: RansacConfig {
            seed,
            ..RansacConfig::with_pixel_threshold(ransac_px, k.focal)
        },
        refine: refine_cfg.map(|r| RefineConfig {
            residual_scale: k.focal,
            ..r
        }),
        full_ransac: true,
        ..PipelineConfig::default()
    };
    let outcome = run_pipeline(method, &corrs, &file.imu1, &file.imu2, k.readout_time, &cfg)?;
    Ok(FileEstimate {
        method,
        outcome,
        total: corrs.len(),
    })
}

fn fmt_vec(v: &Vec3) -> String {
    format!("{:.9} {:.9} {:.9}", v.x, v.y, v.z)
}

pub fn format_estimate(e: &FileEstimate) -> String {
    let est = &e.outcome.estimate;
    let q = est.rotation.wxyz();
    let r = est.rotation.to_matrix();
    let mut s = String::new();
    writeln!(s, "algorithm {}", e.method).unwrap();
    writeln!(s, "quaternion_wxyz {:.9} {:.9} {:.9} {:.9}", q[0], q[1], q[2], q[3]).unwrap();
    for i in 0..3 {
        writeln!(s, "rotation_row{} {:.9} {:.9} {:.9}", i, r[(i, 0)], r[(i, 1)], r[(i, 2)]).unwrap();
    }
    writeln!(s, "translation {}", fmt_vec(&est.translation)).unwrap();
    writeln!(s, "d1 {}", fmt_vec(&est.d1)).unwrap();
    writeln!(s, "d2 {}", fmt_vec(&est.d2)).unwrap();
    writeln!(s, "w1 {}", fmt_vec(&est.w1)).unwrap();
    writeln!(s, "w2 {}", fmt_vec(&est.w2)).unwrap();
    writeln!(s, "inliers {} / {}", e.outcome.inliers, e.total).unwrap();
    writeln!(s, "ransac_iterations {}", e.outcome.iterations).unwrap();
    if let Some((a, b)) = e.outcome.energies {
        writeln!(s, "energy {a:.6e} -> {b:.6e}").unwrap();
    }
    s
}
