//! Sampson-energy refinement on RANSAC inliers.
//!
//! The energy is the sum of squared signed Sampson errors plus
//! `lambda_t (|t| - 1)^2 + lambda_d1 |d1|^2 + lambda_d2 |d2|^2`. The rotation
//! and the `[t, d1, d2]` block are minimized in turn; measured angular
//! velocities stay fixed.

use log::{debug, warn};
use nalgebra::DVector;

use crate::coeffs::AlgorithmKind;
use crate::error::{Error, Result};
use crate::geometry::{quat_local_update, skew, Correspondence, Mat3, RelativePoseEstimate, Rotation, Vec3};
use crate::lm;
use crate::robust::signed_sampson;
use crate::solvers::SolverConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct RefineConfig {
    pub lambda_t: f64,
    pub lambda_d1: f64,
    pub lambda_d2: f64,
    /// Sampson residuals are multiplied by this before squaring. Setting it
    /// to the focal length puts them in pixels, which is the scale the
    /// default weights are meant for. 1.0 keeps normalized units.
    pub residual_scale: f64,
    pub max_outer_iterations: usize,
    /// Stop when an outer iteration lowers the energy by less than this
    /// fraction.
    pub outer_tol: f64,
    /// Iteration budget and damping of the inner solves.
    pub inner: SolverConfig,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            lambda_t: 1.0,
            lambda_d1: 1e-3,
            lambda_d2: 1e-3,
            residual_scale: 1.0,
            max_outer_iterations: 20,
            outer_tol: 1e-8,
            inner: SolverConfig::default(),
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [self.lambda_t, self.lambda_d1, self.lambda_d2];
        if !w.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::InvalidArgument("regularization weights must be non-negative".into()));
        }
        if !(self.residual_scale.is_finite() && self.residual_scale > 0.0) {
            return Err(Error::InvalidArgument("residual scale must be positive".into()));
        }
        if !(self.outer_tol >= 0.0) {
            return Err(Error::InvalidArgument("outer tolerance must be non-negative".into()));
        }
        self.inner.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineOutcome {
    pub estimate: RelativePoseEstimate,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub outer_iterations: usize,
    /// Energy after each outer iteration, starting with the initial energy.
    pub trace: Vec<f64>,
}

fn sampson_residual(e: &Mat3, c: &Correspondence) -> f64 {
    signed_sampson(e, &c.p1, &c.p2).unwrap_or(0.0)
}

fn penalties(est: &RelativePoseEstimate, cfg: &RefineConfig) -> [f64; 7] {
    let a = cfg.lambda_t.sqrt() * (est.translation.norm() - 1.0);
    let b = est.d1 * cfg.lambda_d1.sqrt();
    let c = est.d2 * cfg.lambda_d2.sqrt();
    [a, b.x, b.y, b.z, c.x, c.y, c.z]
}

/// Residual vector whose squared norm is the energy.
pub fn residuals(est: &RelativePoseEstimate, inliers: &[Correspondence], readout: f64, cfg: &RefineConfig) -> DVector<f64> {
    let n = inliers.len();
    let mut r = DVector::zeros(n + 7);
    for (i, c) in inliers.iter().enumerate() {
        r[i] = cfg.residual_scale * sampson_residual(&est.essential_at(c.p1.row, c.p2.row, readout), c);
    }
    r.rows_mut(n, 7).copy_from_slice(&penalties(est, cfg));
    r
}

pub fn energy(est: &RelativePoseEstimate, inliers: &[Correspondence], readout: f64, cfg: &RefineConfig) -> Result<f64> {
    if inliers.is_empty() {
        return Err(Error::InvalidArgument("energy of an empty inlier set".into()));
    }
    Ok(residuals(est, inliers, readout, cfg).norm_squared())
}

struct RotationBlock<'a> {
    base: RelativePoseEstimate,
    inliers: &'a [Correspondence],
    readout: f64,
    cfg: &'a RefineConfig,
}

impl lm::Problem for RotationBlock<'_> {
    type State = Rotation;
    fn dim(&self) -> usize {
        3
    }
    fn residuals(&self, q: &Rotation) -> DVector<f64> {
        let est = RelativePoseEstimate {
            rotation: *q,
            ..self.base
        };
        residuals(&est, self.inliers, self.readout, self.cfg)
    }
    fn retract(&self, q: &Rotation, d: &DVector<f64>) -> Rotation {
        quat_local_update(q, &Vec3::new(d[0], d[1], d[2])).renormalized()
    }
    fn fd_step(&self) -> f64 {
        1e-6
    }
}

/// `[t]` or `[t, d1, d2]` with the rotation fixed. The row rotations
/// `R_r` do not depend on this block and are computed once.
struct TranslationBlock<'a> {
    base: RelativePoseEstimate,
    row_rotations: Vec<Mat3>,
    inliers: &'a [Correspondence],
    readout: f64,
    cfg: &'a RefineConfig,
    with_velocity: bool,
}

impl TranslationBlock<'_> {
    fn unpack(&self, x: &DVector<f64>) -> RelativePoseEstimate {
        let t = Vec3::new(x[0], x[1], x[2]);
        if self.with_velocity {
            RelativePoseEstimate {
                translation: t,
                d1: Vec3::new(x[3], x[4], x[5]),
                d2: Vec3::new(x[6], x[7], x[8]),
                ..self.base
            }
        } else {
            RelativePoseEstimate {
                translation: t,
                ..self.base
            }
        }
    }

    fn pack(&self, est: &RelativePoseEstimate) -> DVector<f64> {
        let mut v: Vec<f64> = est.translation.iter().copied().collect();
        if self.with_velocity {
            v.extend(est.d1.iter().chain(est.d2.iter()));
        }
        DVector::from_vec(v)
    }
}

impl lm::Problem for TranslationBlock<'_> {
    type State = DVector<f64>;
    fn dim(&self) -> usize {
        if self.with_velocity {
            9
        } else {
            3
        }
    }
    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let est = self.unpack(x);
        let n = self.inliers.len();
        let mut r = DVector::zeros(n + 7);
        for (i, (c, rr)) in self.inliers.iter().zip(&self.row_rotations).enumerate() {
            let b = est.translation - est.d1 * (c.p1.row * self.readout) + est.d2 * (c.p2.row * self.readout);
            r[i] = self.cfg.residual_scale * sampson_residual(&(rr * skew(&b)), c);
        }
        r.rows_mut(n, 7).copy_from_slice(&penalties(&est, self.cfg));
        r
    }
    fn retract(&self, x: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
        x + d
    }
    fn fd_step(&self) -> f64 {
        1e-7
    }
}

fn row_rotation(est: &RelativePoseEstimate, c: &Correspondence, readout: f64) -> Mat3 {
    est.row_pose(c.p1.row, c.p2.row, readout).0
}

/// `a` moved `beta` times along the step from `a` to `b`.
fn step_along(a: &RelativePoseEstimate, b: &RelativePoseEstimate, beta: f64) -> RelativePoseEstimate {
    let spin = (b.rotation * a.rotation.inverse()).quaternion().scaled_axis();
    RelativePoseEstimate {
        rotation: (Rotation::from_scaled_axis(&(spin * beta)) * a.rotation).renormalized(),
        translation: a.translation + (b.translation - a.translation) * beta,
        d1: a.d1 + (b.d1 - a.d1) * beta,
        d2: a.d2 + (b.d2 - a.d2) * beta,
        ..*b
    }
}

/// Alternating block updates zig-zag slowly when rotation and translation
/// are coupled. Continue along the net step of the last outer iteration,
/// doubling its length while the energy keeps dropping.
fn extrapolate(
    from: &RelativePoseEstimate,
    to: &RelativePoseEstimate,
    energy_at_to: f64,
    inliers: &[Correspondence],
    readout: f64,
    cfg: &RefineConfig,
) -> Result<(RelativePoseEstimate, f64)> {
    let (mut best, mut best_energy) = (*to, energy_at_to);
    let mut beta = 2.0;
    while beta <= 64.0 {
        let trial = step_along(from, to, beta);
        let e = energy(&trial, inliers, readout, cfg)?;
        if !(e < best_energy) {
            break;
        }
        (best, best_energy) = (trial, e);
        beta *= 2.0;
    }
    Ok((best, best_energy))
}

/// Alternating minimization starting from `init`. The linear velocities are
/// refined only for algorithms that estimate them. The result has unit
/// translation; if renormalizing would raise the energy above the starting
/// energy, `init` is returned instead.
pub fn refine(
    init: &RelativePoseEstimate,
    inliers: &[Correspondence],
    readout: f64,
    algorithm: AlgorithmKind,
    cfg: &RefineConfig,
) -> Result<RefineOutcome> {
    cfg.validate()?;
    if inliers.is_empty() {
        return Err(Error::InvalidArgument("refinement needs at least one inlier".into()));
    }
    if inliers.len() < 9 {
        warn!("refining on only {} inliers", inliers.len());
    }
    let settings = lm::Settings {
        max_iterations: cfg.inner.max_lm_iterations,
        initial_damping: cfg.inner.lm_initial_damping,
        step_tolerance: cfg.inner.convergence_tol,
    };
    let with_velocity = algorithm.estimates_linear_velocity();

    let mut est = *init;
    if !with_velocity {
        est.d1 = Vec3::zeros();
        est.d2 = Vec3::zeros();
    }
    let initial_energy = energy(init, inliers, readout, cfg)?;
    let mut current = energy(&est, inliers, readout, cfg)?;
    let mut trace = vec![current];
    let mut outer = 0;
    let mut previous = est;

    while outer < cfg.max_outer_iterations {
        outer += 1;
        let before = current;

        let rot = RotationBlock {
            base: est,
            inliers,
            readout,
            cfg,
        };
        est.rotation = lm::minimize(&rot, est.rotation, &settings).state;

        let block = TranslationBlock {
            base: est,
            row_rotations: inliers.iter().map(|c| row_rotation(&est, c, readout)).collect(),
            inliers,
            readout,
            cfg,
            with_velocity,
        };
        let x = lm::minimize(&block, block.pack(&est), &settings).state;
        est = block.unpack(&x);

        current = energy(&est, inliers, readout, cfg)?;
        if current <= before {
            (est, current) = extrapolate(&previous, &est, current, inliers, readout, cfg)?;
        }
        previous = est;
        if current > before * (1.0 + 1e-12) + f64::MIN_POSITIVE {
            return Err(Error::EnergyIncrease {
                before,
                after: current,
            });
        }
        trace.push(current);
        if before - current <= cfg.outer_tol * before {
            break;
        }
    }

    let normalized = est
        .normalized()
        .ok_or_else(|| Error::Degenerate("refined translation collapsed to zero".into()))?;
    let final_energy = energy(&normalized, inliers, readout, cfg)?;
    if final_energy > initial_energy {
        debug!("refinement kept the initial estimate ({final_energy} > {initial_energy})");
        return Ok(RefineOutcome {
            estimate: *init,
            initial_energy,
            final_energy: initial_energy,
            outer_iterations: outer,
            trace,
        });
    }
    Ok(RefineOutcome {
        estimate: normalized,
        initial_energy,
        final_energy,
        outer_iterations: outer,
        trace,
    })
}
