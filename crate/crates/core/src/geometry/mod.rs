//! Geometric primitives: rotations, the rolling-shutter essential matrices,
//! camera intrinsics and the measurement types consumed by the solvers.

mod camera;
mod essential;
mod rotation;

pub use camera::{denormalize_point, normalize_pixel, CameraIntrinsics, NormalizedPoint};
pub use essential::{epipolar_residual, essential_angular, essential_linear, essential_uniform, row_rotation};
pub use rotation::{
    quat_local_update, rotation_tilt, rotation_yaw, skew, tilt_from_gravity, Rotation,
    VERTICAL_AXIS,
};

use nalgebra::{Matrix3, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Standard gravity magnitude in m/s².
pub const GRAVITY: f64 = 9.81;

/// A matched point pair between frame 1 and frame 2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    pub p1: NormalizedPoint,
    pub p2: NormalizedPoint,
}

impl Correspondence {
    pub fn new(p1: NormalizedPoint, p2: NormalizedPoint) -> Self {
        Self { p1, p2 }
    }
}

/// Inertial readings for one frame, expressed in that frame's camera
/// coordinates. Either channel may be absent; solvers that need a missing
/// channel reject the input.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct InertialMeasurement {
    /// Gravity in m/s².
    pub gravity: Option<Vec3>,
    /// Angular velocity in rad/s.
    pub angular_velocity: Option<Vec3>,
}

impl InertialMeasurement {
    pub fn new(gravity: Vec3, angular_velocity: Vec3) -> Self {
        Self {
            gravity: Some(gravity),
            angular_velocity: Some(angular_velocity),
        }
    }

    /// True when gravity is present, finite, and within 20% of [`GRAVITY`].
    pub fn gravity_is_plausible(&self) -> bool {
        self.gravity.is_some_and(|g| {
            let n = g.norm();
            g.iter().all(|c| c.is_finite()) && (n - GRAVITY).abs() <= 0.2 * GRAVITY
        })
    }

    /// Copy with the angular velocity replaced by zero.
    pub fn without_rotation_rate(&self) -> Self {
        Self {
            gravity: self.gravity,
            angular_velocity: Some(Vec3::zeros()),
        }
    }
}

/// Relative pose between the two frames plus the per-frame velocities.
///
/// `translation` is the position of the second camera centre in the first
/// camera's row-0 frame, normalized to unit length. `d1` and `d2` share that
/// unknown global scale and are both expressed in the first camera's frame;
/// `w1` and `w2` are in their own camera frames.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativePoseEstimate {
    pub rotation: Rotation,
    pub translation: Vec3,
    pub d1: Vec3,
    pub d2: Vec3,
    pub w1: Vec3,
    pub w2: Vec3,
}

impl RelativePoseEstimate {
    /// Per-row essential matrix for a correspondence observed at rows
    /// `row1`, `row2`.
    pub fn essential_at(&self, row1: f64, row2: f64, readout: f64) -> Mat3 {
        essential_uniform(
            &self.rotation.to_matrix(),
            &self.translation,
            &self.d1,
            &self.d2,
            &self.w1,
            &self.w2,
            row1,
            row2,
            readout,
        )
    }

    /// Relative pose `(R_r, b)` seen by a correspondence at rows `row1`,
    /// `row2`: the second camera is at `b` with rotation `R_r`.
    pub fn row_pose(&self, row1: f64, row2: f64, readout: f64) -> (Mat3, Vec3) {
        let r = row_rotation(&self.rotation.to_matrix(), &self.w1, &self.w2, row1, row2, readout);
        let b = self.translation - self.d1 * (row1 * readout) + self.d2 * (row2 * readout);
        (r, b)
    }

    /// Rescales translation to unit norm, scaling the linear velocities by the
    /// same factor. Returns `None` for a zero translation.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.translation.norm();
        if !(n > 0.0) || !n.is_finite() {
            return None;
        }
        Some(Self {
            translation: self.translation / n,
            d1: self.d1 / n,
            d2: self.d2 / n,
            ..*self
        })
    }
}
