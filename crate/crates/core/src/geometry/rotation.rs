use nalgebra::{Quaternion, Rotation3, UnitQuaternion};

use super::{Mat3, Vec3};
use crate::error::{Error, Result};

/// The vertical axis of the gravity-aligned frame: the axis [`rotation_yaw`]
/// rotates about. A camera whose gravity reading points along this axis has
/// zero tilt.
pub const VERTICAL_AXIS: Vec3 = Vec3::new(0.0, 1.0, 0.0);

/// A 3D rotation stored as a unit quaternion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Self(UnitQuaternion::identity())
    }

    /// Builds a rotation from quaternion components `(w, x, y, z)`; the input
    /// is normalized.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self(UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)))
    }

    pub fn from_quaternion(q: UnitQuaternion<f64>) -> Self {
        Self(q)
    }

    /// Nearest rotation to a (nearly) orthonormal matrix.
    pub fn from_matrix(m: &Mat3) -> Self {
        Self(UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix(m)))
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        Self(UnitQuaternion::from_scaled_axis(axis.normalize() * angle))
    }

    /// Rotation given by a rotation vector (axis times angle).
    pub fn from_scaled_axis(v: &Vec3) -> Self {
        Self(UnitQuaternion::from_scaled_axis(*v))
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    /// `(w, x, y, z)`.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn to_matrix(&self) -> Mat3 {
        *self.0.to_rotation_matrix().matrix()
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    /// Angle in radians between this rotation and `other`.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        self.0.angle_to(&other.0)
    }

    /// Renormalizes the stored quaternion to unit length.
    pub fn renormalized(&self) -> Self {
        Self(UnitQuaternion::from_quaternion(*self.0.quaternion()))
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

/// Cross-product matrix: `skew(v) * u == v.cross(&u)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rotation by `psi` about the vertical (second) axis.
pub fn rotation_yaw(psi: f64) -> Mat3 {
    let (s, c) = psi.sin_cos();
    Mat3::new(c, 0.0, -s, 0.0, 1.0, 0.0, s, 0.0, c)
}

/// Tilt rotation `Rx(phi) * Rz(theta)` that levels a camera frame given its
/// roll and pitch.
pub fn rotation_tilt(phi: f64, theta: f64) -> Mat3 {
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let rx = Mat3::new(1.0, 0.0, 0.0, 0.0, cp, -sp, 0.0, sp, cp);
    let rz = Mat3::new(ct, -st, 0.0, st, ct, 0.0, 0.0, 0.0, 1.0);
    rx * rz
}

/// Roll and pitch `(phi, theta)` such that `rotation_tilt(phi, theta)` maps
/// the gravity direction onto [`VERTICAL_AXIS`].
///
/// `theta` zeroes the first component of the gravity direction, then `phi`
/// zeroes the third. `phi` lands in `[-pi/2, pi/2]`, `theta` in `(-pi, pi]`.
pub fn tilt_from_gravity(g: &Vec3) -> Result<(f64, f64)> {
    if !g.iter().all(|c| c.is_finite()) {
        return Err(Error::NonFinite("gravity"));
    }
    let n = g.norm();
    if n < 1e-6 {
        return Err(Error::DegenerateGravity(n));
    }
    let g = g / n;
    let theta = g.x.atan2(g.y);
    let horizontal = g.x.hypot(g.y);
    let phi = (-g.z).atan2(horizontal);
    Ok((phi, theta))
}

/// Applies a tangent-space increment `delta` to `q`:
/// `[cos|delta|, sin|delta|/|delta| * delta] * q`.
pub fn quat_local_update(q: &Rotation, delta: &Vec3) -> Rotation {
    let norm = delta.norm();
    // sin(x)/x by its series near zero
    let sinc = if norm < 1e-6 {
        1.0 - norm * norm / 6.0
    } else {
        norm.sin() / norm
    };
    let dq = Quaternion::new(norm.cos(), sinc * delta.x, sinc * delta.y, sinc * delta.z);
    let out = dq * q.0.into_inner();
    Rotation(UnitQuaternion::from_quaternion(out))
}
