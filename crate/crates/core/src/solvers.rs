//! Minimal solvers.
//!
//! Every algorithm reduces to the same recipe. The coefficient matrix `A(R)`
//! must be rank deficient at the true rotation, so the rotation is found by
//! driving the determinant(s) of `A` to zero with Levenberg-Marquardt, and
//! the translation/velocity vector is the right singular vector of the
//! smallest singular value. Determinants are trigonometric polynomials in the
//! rotation and have several roots; every distinct root reached from the
//! multistart set is returned as a candidate.

use nalgebra::{DMatrix, DVector};

use crate::coeffs::{
    build_matrix, build_matrix_raw, build_matrix_unchecked, model_angular_velocities, split_unknowns,
    AlgorithmKind, CoefficientMatrix, RotationHypothesis,
};
use crate::error::{Error, Result};
use crate::geometry::{
    quat_local_update, row_rotation, rotation_tilt, rotation_yaw, tilt_from_gravity, Correspondence,
    InertialMeasurement, Mat3, RelativePoseEstimate, Rotation, Vec3,
};
use crate::lm;

/// Relative objective below which a yaw hypothesis counts as a root of the
/// determinant system when searching for neighbouring roots.
const ROOT_TOLERANCE: f64 = 1e-8;

/// `sigma_min / sigma_max` below which `A` counts as exactly rank deficient.
const NULLSPACE_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub max_lm_iterations: usize,
    pub lm_initial_damping: f64,
    /// Stop once an accepted step is smaller than this (max-norm, radians).
    pub convergence_tol: f64,
    /// Evenly spaced yaw starts, in addition to the polynomial roots.
    pub yaw_multistart_count: usize,
    /// Row sets whose determinants form the objective of the non-square
    /// systems. Empty selects the consecutive windows starting at rows 0, 1
    /// and 2.
    pub submatrix_row_windows: Vec<Vec<usize>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_lm_iterations: 100,
            lm_initial_damping: 1e-3,
            convergence_tol: 1e-10,
            yaw_multistart_count: 8,
            submatrix_row_windows: Vec::new(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_lm_iterations == 0 || self.yaw_multistart_count == 0 {
            return Err(Error::InvalidArgument(
                "solver iteration and multistart counts must be positive".into(),
            ));
        }
        if !(self.lm_initial_damping > 0.0) || !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidArgument(
                "solver damping and tolerance must be positive".into(),
            ));
        }
        Ok(())
    }

    fn lm_settings(&self) -> lm::Settings {
        lm::Settings {
            max_iterations: self.max_lm_iterations,
            initial_damping: self.lm_initial_damping,
            step_tolerance: self.convergence_tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOutput {
    pub estimate: RelativePoseEstimate,
    /// Euclidean norm of the determinant residuals at the returned rotation.
    pub objective_value: f64,
    /// Distinct rotation candidates produced by the multistart.
    pub candidates_considered: usize,
    /// False when the rotation search ran out of iterations.
    pub converged: bool,
    /// Correspondences triangulated in front of both cameras.
    pub positive_depths: usize,
    /// `sigma_min / sigma_max` of the row-normalized `A` at the returned
    /// rotation.
    pub nullspace_residual: f64,
}

/// The rotation found from one start.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationSolution {
    pub hypothesis: RotationHypothesis,
    pub objective: f64,
    pub initial_objective: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn default_windows(nrows: usize, ncols: usize) -> Vec<Vec<usize>> {
    if nrows <= ncols {
        return vec![(0..ncols).collect()];
    }
    (0..3)
        .filter(|s| s + ncols <= nrows)
        .map(|s| (s..s + ncols).collect())
        .collect()
}

fn resolve_windows(cfg: &SolverConfig, algorithm: AlgorithmKind) -> Result<Vec<Vec<usize>>> {
    let rows = algorithm.min_points();
    let cols = algorithm.unknowns();
    if rows == cols || cfg.submatrix_row_windows.is_empty() {
        return Ok(default_windows(rows, cols));
    }
    for w in &cfg.submatrix_row_windows {
        if w.len() != cols || w.iter().any(|&r| r >= rows) {
            return Err(Error::InvalidArgument(format!(
                "row window {w:?} does not select {cols} of the {rows} rows of {algorithm}"
            )));
        }
    }
    Ok(cfg.submatrix_row_windows.clone())
}

/// Determinants of the selected square row subsets of `a`.
pub fn window_determinants(a: &DMatrix<f64>, windows: &[Vec<usize>]) -> DVector<f64> {
    if a.nrows() == a.ncols() {
        return DVector::from_element(1, a.determinant());
    }
    DVector::from_iterator(
        windows.len(),
        windows.iter().map(|w| a.select_rows(w.iter()).determinant()),
    )
}

/// Determinant residuals of `A` under `hyp`: one determinant for the square
/// systems, three consecutive row-window determinants for Angular5 and
/// Uniform11.
pub fn determinant_objective(
    hyp: &RotationHypothesis,
    corrs: &[Correspondence],
    imu1: &InertialMeasurement,
    imu2: &InertialMeasurement,
    readout: f64,
    algorithm: AlgorithmKind,
) -> Result<DVector<f64>> {
    let a = build_matrix(corrs, hyp, imu1, imu2, readout, algorithm)?;
    let windows = default_windows(a.nrows(), algorithm.unknowns());
    Ok(window_determinants(&a.entries, &windows))
}

struct DeterminantSystem<'a> {
    corrs: &'a [Correspondence],
    imu1: &'a InertialMeasurement,
    imu2: &'a InertialMeasurement,
    readout: f64,
    algorithm: AlgorithmKind,
    windows: Vec<Vec<usize>>,
}

impl DeterminantSystem<'_> {
    fn residuals_at(&self, r: &Mat3) -> DVector<f64> {
        let a = build_matrix_unchecked(self.corrs, r, self.imu1, self.imu2, self.readout, self.algorithm);
        window_determinants(&a.entries, &self.windows)
    }
}

struct YawProblem<'a> {
    system: &'a DeterminantSystem<'a>,
    tilt1: Mat3,
    tilt2_t: Mat3,
}

impl YawProblem<'_> {
    fn rotation(&self, psi: f64) -> Mat3 {
        self.tilt2_t * rotation_yaw(psi) * self.tilt1
    }
}

impl lm::Problem for YawProblem<'_> {
    type State = f64;
    fn dim(&self) -> usize {
        1
    }
    fn residuals(&self, psi: &f64) -> DVector<f64> {
        self.system.residuals_at(&self.rotation(*psi))
    }
    fn retract(&self, psi: &f64, delta: &DVector<f64>) -> f64 {
        psi + delta[0]
    }
    fn fd_step(&self) -> f64 {
        1e-7
    }
}

struct FullProblem<'a> {
    system: &'a DeterminantSystem<'a>,
}

impl lm::Problem for FullProblem<'_> {
    type State = Rotation;
    fn dim(&self) -> usize {
        3
    }
    fn residuals(&self, q: &Rotation) -> DVector<f64> {
        self.system.residuals_at(&q.to_matrix())
    }
    fn retract(&self, q: &Rotation, delta: &DVector<f64>) -> Rotation {
        quat_local_update(q, &Vec3::new(delta[0], delta[1], delta[2])).renormalized()
    }
    fn fd_step(&self) -> f64 {
        1e-6
    }
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
    if w == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        w
    }
}

fn tilts(imu1: &InertialMeasurement, imu2: &InertialMeasurement, algorithm: AlgorithmKind) -> Result<(Mat3, Mat3)> {
    let (g1, g2) = match (imu1.gravity, imu2.gravity) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::MissingInertial {
                algorithm,
                channel: "gravity",
            })
        }
    };
    let (p1, t1) = tilt_from_gravity(&g1)?;
    let (p2, t2) = tilt_from_gravity(&g2)?;
    Ok((rotation_tilt(p1, t1), rotation_tilt(p2, t2).transpose()))
}

fn solve_in_system(
    system: &DeterminantSystem<'_>,
    init: &RotationHypothesis,
    cfg: &SolverConfig,
) -> Result<RotationSolution> {
    let settings = cfg.lm_settings();
    match init {
        RotationHypothesis::Yaw(psi0) => {
            if !psi0.is_finite() {
                return Err(Error::NonFinite("initial yaw"));
            }
            let (tilt1, tilt2_t) = tilts(system.imu1, system.imu2, system.algorithm)?;
            let problem = YawProblem {
                system,
                tilt1,
                tilt2_t,
            };
            let report = lm::minimize(&problem, *psi0, &settings);
            Ok(RotationSolution {
                hypothesis: RotationHypothesis::Yaw(wrap_angle(report.state)),
                objective: report.cost.sqrt(),
                initial_objective: report.initial_cost.sqrt(),
                converged: report.converged,
                iterations: report.iterations,
            })
        }
        RotationHypothesis::Full(q0) => {
            let problem = FullProblem { system };
            let report = lm::minimize(&problem, q0.renormalized(), &settings);
            Ok(RotationSolution {
                hypothesis: RotationHypothesis::Full(report.state),
                objective: report.cost.sqrt(),
                initial_objective: report.initial_cost.sqrt(),
                converged: report.converged,
                iterations: report.iterations,
            })
        }
    }
}

/// Minimizes the determinant residuals from `init`. The yaw case searches
/// over the single angle; the full case over a tangent increment applied to
/// the quaternion. The returned objective never exceeds the initial one.
pub fn solve_rotation(
    corrs: &[Correspondence],
    imu1: &InertialMeasurement,
    imu2: &InertialMeasurement,
    readout: f64,
    algorithm: AlgorithmKind,
    init: &RotationHypothesis,
    cfg: &SolverConfig,
) -> Result<RotationSolution> {
    let system = checked_system(algorithm, corrs, imu1, imu2, readout, cfg)?;
    solve_in_system(&system, init, cfg)
}

/// Singular values of `A`, zero-padded to square, in ascending order with
/// the matching right singular vectors.
fn sorted_svd(a: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    let n = a.ncols();
    let m = if a.nrows() < n {
        let mut padded = DMatrix::zeros(n, n);
        padded.rows_mut(0, a.nrows()).copy_from(a);
        padded
    } else {
        a.clone()
    };
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("coefficient matrix"));
    }
    let svd = m.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    Ok((
        order.iter().map(|&i| sv[i]).collect(),
        order.iter().map(|&i| v_t.row(i).transpose()).collect(),
    ))
}

/// Nullspace of `A` as the two sign candidates `(x, -x)`, scaled so the
/// translation part has unit norm.
pub fn extract_translation(a: &CoefficientMatrix) -> Result<(DVector<f64>, DVector<f64>)> {
    let (sv, vectors) = sorted_svd(&a.entries)?;
    let s_max = sv[sv.len() - 1];
    if s_max < 1e-12 {
        return Err(Error::Degenerate("coefficient matrix is zero".into()));
    }
    if sv.len() > 1 && sv[1] <= 1e-10 * s_max {
        return Err(Error::Degenerate(
            "coefficient matrix has a multi-dimensional nullspace".into(),
        ));
    }
    let x = &vectors[0];
    let t_norm = x.rows(0, 3).norm();
    if t_norm < 1e-9 * x.norm() {
        return Err(Error::Degenerate("nullspace has no translation component".into()));
    }
    let x = x / t_norm;
    let neg = -&x;
    Ok((x, neg))
}

/// `sigma_min / sigma_max` of `A`: zero exactly when `A` is rank deficient.
pub fn nullspace_residual(a: &CoefficientMatrix) -> Result<f64> {
    let (sv, _) = sorted_svd(&a.entries)?;
    let s_max = sv[sv.len() - 1];
    Ok(if s_max > 0.0 { sv[0] / s_max } else { 0.0 })
}

fn in_front(c: &Correspondence, r: &Mat3, t: &Vec3) -> bool {
    let a = c.p1.m;
    let b = r.transpose() * c.p2.m;
    let aa = a.dot(&a);
    let bb = b.dot(&b);
    let ab = a.dot(&b);
    let det = ab * ab - aa * bb;
    if det.abs() < 1e-14 * aa * bb {
        return false;
    }
    let at = a.dot(t);
    let bt = b.dot(t);
    // alpha a - beta b = t in the least-squares sense
    let alpha = (ab * bt - bb * at) / det;
    let beta = (aa * bt - ab * at) / det;
    let x = (a * alpha + t + b * beta) * 0.5;
    let z2 = (r * (x - t)).z;
    alpha > 0.0 && beta > 0.0 && x.z > 0.0 && z2 > 0.0
}

/// Counts correspondences whose midpoint triangulation lies in front of
/// both cameras. Each correspondence is triangulated with its own row pose
/// `(R_r, b)`, so in-frame motion does not masquerade as parallax.
pub fn count_positive_depths(est: &RelativePoseEstimate, corrs: &[Correspondence], readout: f64) -> usize {
    corrs
        .iter()
        .filter(|c| {
            let (r, b) = est.row_pose(c.p1.row, c.p2.row, readout);
            in_front(c, &r, &b)
        })
        .count()
}

/// The estimate with translation and linear velocities negated, which has
/// the same essential matrices up to sign.
pub fn flipped(est: &RelativePoseEstimate) -> RelativePoseEstimate {
    RelativePoseEstimate {
        translation: -est.translation,
        d1: -est.d1,
        d2: -est.d2,
        ..*est
    }
}

/// Picks between the two sign candidates by cheirality. Ties go to `plus`.
/// Returns the choice and its positive-depth count.
pub fn disambiguate_sign(
    plus: &RelativePoseEstimate,
    minus: &RelativePoseEstimate,
    corrs: &[Correspondence],
    readout: f64,
) -> (RelativePoseEstimate, usize) {
    let n_plus = count_positive_depths(plus, corrs, readout);
    let n_minus = count_positive_depths(minus, corrs, readout);
    if n_minus > n_plus {
        (*minus, n_minus)
    } else {
        (*plus, n_plus)
    }
}

fn yaw_grid(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / n as f64)
}

/// Without row scaling every row of `A` is affine in `(cos psi, sin psi)`,
/// so the determinant of an `n`-row window is a trigonometric polynomial of
/// degree `n`. Its coefficients are read off exactly from `2n + 4` samples
/// and the real roots come from the companion matrix of the half-angle
/// polynomial.
fn yaw_roots(system: &DeterminantSystem<'_>, tilt1: &Mat3, tilt2_t: &Mat3) -> Vec<f64> {
    use std::f64::consts::PI;
    let n = system.algorithm.unknowns();
    let samples = 2 * n + 4;
    let grid: Vec<f64> = (0..samples).map(|j| 2.0 * PI * j as f64 / samples as f64).collect();
    let dets: Vec<DVector<f64>> = grid
        .iter()
        .map(|&psi| {
            let a = build_matrix_raw(system.corrs, &(tilt2_t * rotation_yaw(psi) * tilt1), system.imu1, system.imu2, system.readout, system.algorithm);
            window_determinants(&a, &system.windows)
        })
        .collect();
    let mut roots = Vec::new();
    for w in 0..system.windows.len() {
        let f: Vec<f64> = dets.iter().map(|d| d[w]).collect();
        let scale = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(scale > 0.0) || !scale.is_finite() {
            continue;
        }
        let mut a = vec![0.0; n + 1];
        let mut b = vec![0.0; n + 1];
        for (psi, v) in grid.iter().zip(&f) {
            let v = v / scale;
            for k in 0..=n {
                a[k] += v * (k as f64 * psi).cos();
                b[k] += v * (k as f64 * psi).sin();
            }
        }
        let norm = 2.0 / samples as f64;
        a.iter_mut().for_each(|x| *x *= norm);
        b.iter_mut().for_each(|x| *x *= norm);
        a[0] *= 0.5;
        roots.extend(trig_poly_roots(&a, &b));
    }
    roots
}

/// Real roots of `a0 + sum_k (a_k cos k psi + b_k sin k psi)`, including
/// near-real pairs that may hide clustered roots.
fn trig_poly_roots(a: &[f64], b: &[f64]) -> Vec<f64> {
    use nalgebra::Complex;
    let n = a.len() - 1;
    // with t = tan(psi / 2): e^{ik psi} (1 + t^2)^n = (1 + it)^(n+k) (1 - it)^(n-k)
    let mul = |p: &[Complex<f64>], q: [Complex<f64>; 2]| {
        let mut out = vec![Complex::new(0.0, 0.0); p.len() + 1];
        for (i, c) in p.iter().enumerate() {
            out[i] += c * q[0];
            out[i + 1] += c * q[1];
        }
        out
    };
    let plus = [Complex::new(1.0, 0.0), Complex::new(0.0, 1.0)];
    let minus = [Complex::new(1.0, 0.0), Complex::new(0.0, -1.0)];
    let mut poly = vec![0.0; 2 * n + 1];
    for k in 0..=n {
        let mut p = vec![Complex::new(1.0, 0.0)];
        for _ in 0..n + k {
            p = mul(&p, plus);
        }
        for _ in 0..n - k {
            p = mul(&p, minus);
        }
        let c = Complex::new(a[k], -b[k]);
        for (slot, coef) in poly.iter_mut().zip(&p) {
            *slot += (c * coef).re;
        }
    }
    let big = poly.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut roots = Vec::new();
    while poly.len() > 1 && poly.last().is_some_and(|v| v.abs() <= 1e-13 * big) {
        poly.pop();
        // a dropped leading coefficient is a root at t = infinity
        if roots.is_empty() {
            roots.push(std::f64::consts::PI);
        }
    }
    let deg = poly.len() - 1;
    if deg == 0 {
        return roots;
    }
    let lead = poly[deg];
    let mut companion = DMatrix::zeros(deg, deg);
    for i in 0..deg {
        companion[(0, i)] = -poly[deg - 1 - i] / lead;
        if i + 1 < deg {
            companion[(i + 1, i)] = 1.0;
        }
    }
    for z in companion.complex_eigenvalues().iter() {
        let t = z.re;
        let spread = 2.0 * z.im.abs() / (1.0 + t * t);
        if z.re.is_finite() && spread < 0.05 {
            roots.push(2.0 * t.atan());
        }
    }
    roots
}

fn yaw_starts(system: &DeterminantSystem<'_>, tilt1: &Mat3, tilt2_t: &Mat3, cfg: &SolverConfig) -> Vec<f64> {
    let mut starts: Vec<f64> = yaw_roots(system, tilt1, tilt2_t)
        .into_iter()
        .chain(yaw_grid(cfg.yaw_multistart_count))
        .map(wrap_angle)
        .collect();
    starts.sort_by(f64::total_cmp);
    starts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    starts
}

/// Hypotheses the multistart begins from: the real roots of the yaw
/// determinant polynomial(s) plus `yaw_multistart_count` evenly spaced yaw
/// angles. The full-rotation algorithms compose those angles with the
/// gravity tilts and also start from the identity.
pub fn multistart_inits(
    algorithm: AlgorithmKind,
    corrs: &[Correspondence],
    imu1: &InertialMeasurement,
    imu2: &InertialMeasurement,
    readout: f64,
    cfg: &SolverConfig,
) -> Result<Vec<RotationHypothesis>> {
    let system = checked_system(algorithm, corrs, imu1, imu2, readout, cfg)?;
    let yaws = match tilts(imu1, imu2, algorithm) {
        Ok((t1, t2_t)) => yaw_starts(&system, &t1, &t2_t, cfg)
            .into_iter()
            .map(|psi| (psi, t2_t * rotation_yaw(psi) * t1))
            .collect(),
        Err(_) => Vec::new(),
    };
    if algorithm.uses_gravity() {
        return Ok(yaws.into_iter().map(|(psi, _)| RotationHypothesis::Yaw(psi)).collect());
    }
    Ok(std::iter::once(RotationHypothesis::Full(Rotation::identity()))
        .chain(yaws.into_iter().map(|(_, r)| RotationHypothesis::Full(Rotation::from_matrix(&r))))
        .collect())
}

fn checked_system<'a>(
    algorithm: AlgorithmKind,
    corrs: &'a [Correspondence],
    imu1: &'a InertialMeasurement,
    imu2: &'a InertialMeasurement,
    readout: f64,
    cfg: &SolverConfig,
) -> Result<DeterminantSystem<'a>> {
    cfg.validate()?;
    // validates point count and inertial channels
    let probe = if algorithm.uses_gravity() {
        RotationHypothesis::Yaw(0.0)
    } else {
        RotationHypothesis::Full(Rotation::identity())
    };
    build_matrix(corrs, &probe, imu1, imu2, readout, algorithm)?;
    if corrs.len() != algorithm.min_points() {
        return Err(Error::InvalidArgument(format!(
            "{algorithm} takes exactly {} correspondences, got {}",
            algorithm.min_points(),
            corrs.len()
        )));
    }
    Ok(DeterminantSystem {
        corrs,
        imu1,
        imu2,
        readout,
        algorithm,
        windows: resolve_windows(cfg, algorithm)?,
    })
}

/// Yaw residuals divided by `2 sin((psi - r) / 2)` for each known root `r`,
/// so local search started next to a root moves on to its neighbours.
struct DeflatedYaw<'a> {
    inner: YawProblem<'a>,
    roots: Vec<f64>,
}

impl lm::Problem for DeflatedYaw<'_> {
    type State = f64;
    fn dim(&self) -> usize {
        1
    }
    fn residuals(&self, psi: &f64) -> DVector<f64> {
        let d: f64 = self.roots.iter().map(|r| 2.0 * ((psi - r) / 2.0).sin()).product();
        self.inner.residuals(psi) / d
    }
    fn retract(&self, psi: &f64, delta: &DVector<f64>) -> f64 {
        psi + delta[0]
    }
    fn fd_step(&self) -> f64 {
        1e-9
    }
}

/// Roots within this distance of each other are treated as one cluster.
const CLUSTER_RADIUS: f64 = 0.05;

/// Searches next to every exact yaw root for further roots hidden in the
/// same cluster. Determinants of nearly degenerate minimal sets often have
/// several real roots within a fraction of a degree, and the polynomial
/// starts cannot separate them.
fn deflated_yaw_roots(
    system: &DeterminantSystem<'_>,
    tilt1: Mat3,
    tilt2_t: Mat3,
    solutions: &[RotationSolution],
    root_level: f64,
    cfg: &SolverConfig,
) -> Vec<RotationSolution> {
    let plain = YawProblem {
        system,
        tilt1,
        tilt2_t,
    };
    let mut known: Vec<f64> = solutions
        .iter()
        .filter(|s| s.objective <= root_level)
        .filter_map(|s| match s.hypothesis {
            RotationHypothesis::Yaw(psi) => Some(psi),
            RotationHypothesis::Full(_) => None,
        })
        .collect();
    known.sort_by(f64::total_cmp);
    known.dedup_by(|a, b| (*a - *b).abs() < 1e-7);
    let mut queue = known.clone();
    let mut found = Vec::new();
    let settings = cfg.lm_settings();
    let cap = 2 * system.algorithm.unknowns();
    while let Some(root) = queue.pop() {
        if found.len() >= cap {
            break;
        }
        for side in [-1.0, 1.0] {
            let problem = DeflatedYaw {
                inner: YawProblem {
                    system,
                    tilt1,
                    tilt2_t,
                },
                roots: known
                    .iter()
                    .copied()
                    .filter(|r| wrap_angle(r - root).abs() < CLUSTER_RADIUS)
                    .collect(),
            };
            let report = lm::minimize(&problem, root + side * 1e-4, &settings);
            let psi = wrap_angle(report.state);
            if wrap_angle(psi - root).abs() > CLUSTER_RADIUS || known.iter().any(|k| wrap_angle(psi - k).abs() < 1e-7) {
                continue;
            }
            let objective = lm::Problem::residuals(&plain, &psi).norm();
            if objective <= root_level {
                known.push(psi);
                queue.push(psi);
                found.push(RotationSolution {
                    hypothesis: RotationHypothesis::Yaw(psi),
                    objective,
                    initial_objective: objective,
                    converged: report.converged,
                    iterations: report.iterations,
                });
            }
        }
    }
    found
}

/// Rotations from a linear fit of the angular model. Undoing the row
/// rotations of both points leaves, to first order in `v λ w`, an ordinary
/// epipolar constraint with a single essential matrix, which the eight-point
/// construction recovers from all points. Only the known angular velocities
/// enter, never gravity.
fn derotated_starts(system: &DeterminantSystem<'_>) -> Vec<Rotation> {
    let (w1, w2) = model_angular_velocities(AlgorithmKind::Angular5, system.imu1, system.imu2);
    let z = Vec3::zeros();
    let mut a = DMatrix::zeros(system.corrs.len(), 9);
    for (i, c) in system.corrs.iter().enumerate() {
        let x1 = row_rotation(&Mat3::identity(), &w1, &z, c.p1.row, 0.0, system.readout) * c.p1.m;
        let x2 = row_rotation(&Mat3::identity(), &z, &w2, 0.0, c.p2.row, system.readout).transpose() * c.p2.m;
        for j in 0..3 {
            for k in 0..3 {
                a[(i, 3 * j + k)] = x2[j] * x1[k];
            }
        }
    }
    let Ok((_, vectors)) = sorted_svd(&a) else {
        return Vec::new();
    };
    let e = Mat3::from_row_slice(vectors[0].as_slice());
    let svd = e.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Vec::new();
    };
    let weakest = svd.singular_values.imin();
    let order: Vec<usize> = (0..3).filter(|&i| i != weakest).chain([weakest]).collect();
    let mut u = Mat3::from_columns(&[u.column(order[0]), u.column(order[1]), u.column(order[2])]);
    let mut v = Mat3::from_columns(&[
        v_t.row(order[0]).transpose(),
        v_t.row(order[1]).transpose(),
        v_t.row(order[2]).transpose(),
    ]);
    if u.determinant() < 0.0 {
        u = -u;
    }
    if v.determinant() < 0.0 {
        v = -v;
    }
    let w = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    [u * w * v.transpose(), u * w.transpose() * v.transpose()]
        .iter()
        .filter(|r| r.iter().all(|x| x.is_finite()))
        .map(Rotation::from_matrix)
        .collect()
}

struct DeflatedFull<'a> {
    inner: FullProblem<'a>,
    roots: Vec<Rotation>,
}

/// `sin` of half the angle between two rotations.
fn half_angle_sin(a: &Rotation, b: &Rotation) -> f64 {
    (a.quaternion().inverse() * b.quaternion()).imag().norm()
}

impl lm::Problem for DeflatedFull<'_> {
    type State = Rotation;
    fn dim(&self) -> usize {
        3
    }
    fn residuals(&self, q: &Rotation) -> DVector<f64> {
        let d: f64 = self.roots.iter().map(|r| 2.0 * half_angle_sin(r, q)).product();
        self.inner.residuals(q) / d
    }
    fn retract(&self, q: &Rotation, delta: &DVector<f64>) -> Rotation {
        self.inner.retract(q, delta)
    }
    fn fd_step(&self) -> f64 {
        1e-8
    }
}

/// The same cluster search as [`deflated_yaw_roots`] for full rotations.
fn deflated_full_roots(
    system: &DeterminantSystem<'_>,
    solutions: &[RotationSolution],
    root_level: f64,
    cfg: &SolverConfig,
) -> Vec<RotationSolution> {
    let plain = FullProblem { system };
    let mut known: Vec<Rotation> = Vec::new();
    for s in solutions.iter().filter(|s| s.objective <= root_level) {
        if let RotationHypothesis::Full(q) = s.hypothesis {
            if !known.iter().any(|k| half_angle_sin(k, &q) < 5e-8) {
                known.push(q);
            }
        }
    }
    let mut queue = known.clone();
    let mut found = Vec::new();
    let settings = cfg.lm_settings();
    let cap = 2 * system.algorithm.unknowns();
    let radius = (CLUSTER_RADIUS / 2.0).sin();
    while let Some(root) = queue.pop() {
        // the roots of a cluster line up along the weakest direction of the
        // determinant map
        let svd = lm::jacobian(&plain, &root, system.windows.len()).svd(false, true);
        let Some(v_t) = svd.v_t else {
            continue;
        };
        let weakest = v_t.row(svd.singular_values.imin()).transpose();
        for side in [-1.0, 1.0] {
            if found.len() >= cap {
                return found;
            }
            let step = Vec3::new(weakest[0], weakest[1], weakest[2]) * (side * 1e-4);
            let problem = DeflatedFull {
                inner: FullProblem { system },
                roots: known.iter().copied().filter(|r| half_angle_sin(r, &root) < radius).collect(),
            };
            let report = lm::minimize(&problem, quat_local_update(&root, &step), &settings);
            let q = report.state;
            if half_angle_sin(&q, &root) > radius || known.iter().any(|k| half_angle_sin(k, &q) < 5e-8) {
                continue;
            }
            let objective = lm::Problem::residuals(&plain, &q).norm();
            if objective <= root_level {
                known.push(q);
                queue.push(q);
                found.push(RotationSolution {
                    hypothesis: RotationHypothesis::Full(q),
                    objective,
                    initial_objective: objective,
                    converged: report.converged,
                    iterations: report.iterations,
                });
            }
        }
    }
    found
}

/// Local search along the gravity-consistent rotations from every yaw start,
/// followed by the cluster search. Also returns the largest initial
/// objective, the scale against which roots are judged.
fn yaw_stage(system: &DeterminantSystem<'_>, tilt1: Mat3, tilt2_t: Mat3, cfg: &SolverConfig) -> (Vec<RotationSolution>, f64) {
    let problem = YawProblem {
        system,
        tilt1,
        tilt2_t,
    };
    let settings = cfg.lm_settings();
    let mut out: Vec<RotationSolution> = Vec::new();
    let mut scale: f64 = 0.0;
    for psi0 in yaw_starts(system, &tilt1, &tilt2_t, cfg) {
        let report = lm::minimize(&problem, psi0, &settings);
        scale = scale.max(report.initial_cost.sqrt());
        let sol = RotationSolution {
            hypothesis: RotationHypothesis::Yaw(wrap_angle(report.state)),
            objective: report.cost.sqrt(),
            initial_objective: report.initial_cost.sqrt(),
            converged: report.converged,
            iterations: report.iterations,
        };
        if sol.objective.is_finite() {
            out.push(sol);
        }
    }
    let level = ROOT_TOLERANCE * scale;
    let extra = deflated_yaw_roots(system, tilt1, tilt2_t, &out, level, cfg);
    out.extend(extra);
    (out, scale)
}

fn output_from_rotation(
    system: &DeterminantSystem<'_>,
    sol: &RotationSolution,
    r: &Mat3,
) -> Result<SolverOutput> {
    let a = build_matrix_unchecked(system.corrs, r, system.imu1, system.imu2, system.readout, system.algorithm);
    let (x_plus, _) = extract_translation(&a)?;
    let residual = nullspace_residual(&a)?;
    let (t, d1, d2) = split_unknowns(x_plus.as_slice());
    let (w1, w2) = model_angular_velocities(system.algorithm, system.imu1, system.imu2);
    let plus = RelativePoseEstimate {
        rotation: Rotation::from_matrix(r),
        translation: t,
        d1,
        d2,
        w1,
        w2,
    };
    let (estimate, positive_depths) = disambiguate_sign(&plus, &flipped(&plus), system.corrs, system.readout);
    Ok(SolverOutput {
        estimate,
        objective_value: sol.objective,
        nullspace_residual: residual,
        candidates_considered: 0,
        converged: sol.converged,
        positive_depths,
    })
}

/// Every distinct solution reached from the multistart, best first.
///
/// Candidates are ranked by whether `A` is exactly rank deficient there, then
/// by cheirality count, then by `sigma_min / sigma_max` of `A`. The window
/// determinants of the non-square systems also vanish where only the rows
/// shared by all windows lose rank, so the determinant value alone cannot
/// tell true roots apart.
pub fn minimal_candidates(
    algorithm: AlgorithmKind,
    corrs: &[Correspondence],
    imu1: &InertialMeasurement,
    imu2: &InertialMeasurement,
    readout: f64,
    cfg: &SolverConfig,
) -> Result<Vec<SolverOutput>> {
    let system = checked_system(algorithm, corrs, imu1, imu2, readout, cfg)?;
    let tilts = tilts(imu1, imu2, algorithm);
    let mut found: Vec<RotationSolution> = Vec::new();
    let mut full_starts = vec![Rotation::identity()];
    if let Ok((t1, t2_t)) = tilts {
        let (yaws, _) = yaw_stage(&system, t1, t2_t, cfg);
        if algorithm.uses_gravity() {
            found = yaws;
        } else {
            full_starts.extend(yaws.iter().filter_map(|s| match s.hypothesis {
                RotationHypothesis::Yaw(psi) => Some(Rotation::from_matrix(&(t2_t * rotation_yaw(psi) * t1))),
                RotationHypothesis::Full(_) => None,
            }));
        }
    }
    if algorithm == AlgorithmKind::Uniform11 {
        full_starts.extend(derotated_starts(&system));
    }
    if !algorithm.uses_gravity() {
        let mut scale: f64 = 0.0;
        let mut full = Vec::with_capacity(full_starts.len());
        for q in full_starts {
            let sol = solve_in_system(&system, &RotationHypothesis::Full(q), cfg)?;
            scale = scale.max(sol.initial_objective);
            full.push(sol);
        }
        let extra = deflated_full_roots(&system, &full, ROOT_TOLERANCE * scale, cfg);
        found.extend(full);
        found.extend(extra);
    }

    let mut solutions: Vec<(RotationSolution, Mat3)> = Vec::new();
    for sol in found {
        if !sol.objective.is_finite() {
            continue;
        }
        let r = sol.hypothesis.to_matrix(imu1, imu2)?;
        match solutions.iter_mut().find(|(_, q)| (q - r).abs().max() < 1e-7) {
            Some(existing) if existing.0.objective <= sol.objective => {}
            Some(existing) => *existing = (sol, r),
            None => solutions.push((sol, r)),
        }
    }

    let mut last_err = None;
    let mut out = Vec::with_capacity(solutions.len());
    for (sol, r) in &solutions {
        match output_from_rotation(&system, sol, r) {
            Ok(o) => out.push(o),
            Err(e) => last_err = Some(e),
        }
    }
    if out.is_empty() {
        return Err(last_err.unwrap_or_else(|| Error::Degenerate("no rotation candidate".into())));
    }
    out.sort_by(|a, b| {
        let ra = a.nullspace_residual <= NULLSPACE_TOLERANCE;
        let rb = b.nullspace_residual <= NULLSPACE_TOLERANCE;
        rb.cmp(&ra)
            .then(b.positive_depths.cmp(&a.positive_depths))
            .then(a.nullspace_residual.total_cmp(&b.nullspace_residual))
    });
    let n = out.len();
    for o in &mut out {
        o.candidates_considered = n;
    }
    Ok(out)
}

/// The top-ranked candidate of [`minimal_candidates`].
pub fn estimate_minimal(
    algorithm: AlgorithmKind,
    corrs: &[Correspondence],
    imu1: &InertialMeasurement,
    imu2: &InertialMeasurement,
    readout: f64,
    cfg: &SolverConfig,
) -> Result<SolverOutput> {
    let mut all = minimal_candidates(algorithm, corrs, imu1, imu2, readout, cfg)?;
    Ok(all.swap_remove(0))
}
