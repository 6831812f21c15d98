//! Rolling-shutter essential matrices.
//!
//! All three models share the form `E = R_r * [b]x`, where the row-dependent
//! rotation `R_r = (I + v2*lr*[w2]x)^T * R * (I + v1*lr*[w1]x)` absorbs the
//! angular velocities and the baseline `b = t - v1*lr*d1 + v2*lr*d2` absorbs
//! the linear velocities. `v1`, `v2` are image rows in pixels and `lr` is the
//! readout time per row.

use super::{skew, Mat3, NormalizedPoint, Vec3};

/// The row-dependent rotation `R_r`.
pub fn row_rotation(r: &Mat3, w1: &Vec3, w2: &Vec3, v1: f64, v2: f64, readout: f64) -> Mat3 {
    let p1 = Mat3::identity() + skew(w1) * (v1 * readout);
    let p2 = Mat3::identity() + skew(w2) * (v2 * readout);
    p2.transpose() * r * p1
}

/// Essential matrix under the angular model (linear velocities zero).
pub fn essential_angular(
    r: &Mat3,
    t: &Vec3,
    w1: &Vec3,
    w2: &Vec3,
    v1: f64,
    v2: f64,
    readout: f64,
) -> Mat3 {
    row_rotation(r, w1, w2, v1, v2, readout) * skew(t)
}

/// Essential matrix under the linear model (angular velocities zero).
pub fn essential_linear(
    r: &Mat3,
    t: &Vec3,
    d1: &Vec3,
    d2: &Vec3,
    v1: f64,
    v2: f64,
    readout: f64,
) -> Mat3 {
    let b = t - d1 * (v1 * readout) + d2 * (v2 * readout);
    r * skew(&b)
}

/// Essential matrix under the uniform model (both velocity kinds).
#[allow(clippy::too_many_arguments)]
pub fn essential_uniform(
    r: &Mat3,
    t: &Vec3,
    d1: &Vec3,
    d2: &Vec3,
    w1: &Vec3,
    w2: &Vec3,
    v1: f64,
    v2: f64,
    readout: f64,
) -> Mat3 {
    let b = t - d1 * (v1 * readout) + d2 * (v2 * readout);
    row_rotation(r, w1, w2, v1, v2, readout) * skew(&b)
}

/// Signed epipolar residual `m2^T E m1`.
pub fn epipolar_residual(e: &Mat3, p1: &NormalizedPoint, p2: &NormalizedPoint) -> f64 {
    p2.m.dot(&(e * p1.m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Sample {
        r: Mat3,
        t: Vec3,
        d1: Vec3,
        d2: Vec3,
        w1: Vec3,
        w2: Vec3,
        v1: f64,
        v2: f64,
    }

    fn sample(rng: &mut ChaCha8Rng) -> Sample {
        let mut v = |s: f64| {
            Vec3::new(
                rng.random_range(-s..s),
                rng.random_range(-s..s),
                rng.random_range(-s..s),
            )
        };
        let r = Rotation::from_scaled_axis(&v(0.7)).to_matrix();
        let t = v(1.0);
        let d1 = v(5.0);
        let d2 = v(5.0);
        let w1 = v(3.0);
        let w2 = v(3.0);
        Sample {
            r,
            t,
            d1,
            d2,
            w1,
            w2,
            v1: rng.random_range(0.0..1080.0),
            v2: rng.random_range(0.0..1080.0),
        }
    }

    const LR: f64 = 60e-6;

    #[test]
    fn zero_velocity_reduces_to_global_shutter() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let z = Vec3::zeros();
        for _ in 0..50 {
            let s = sample(&mut rng);
            let gs = s.r * skew(&s.t);
            let ea = essential_angular(&s.r, &s.t, &z, &z, s.v1, s.v2, LR);
            let el = essential_linear(&s.r, &s.t, &z, &z, s.v1, s.v2, LR);
            let eu = essential_uniform(&s.r, &s.t, &z, &z, &z, &z, s.v1, s.v2, LR);
            assert!((ea - gs).abs().max() < 1e-14);
            assert!((el - gs).abs().max() < 1e-14);
            assert!((eu - gs).abs().max() < 1e-14);
            // first-row points see no rolling-shutter effect at all
            let e0 = essential_uniform(&s.r, &s.t, &s.d1, &s.d2, &s.w1, &s.w2, 0.0, 0.0, LR);
            assert!((e0 - gs).abs().max() < 1e-14);
            let a0 = essential_angular(&s.r, &s.t, &s.w1, &s.w2, 0.0, 0.0, LR);
            assert!((a0 - gs).abs().max() < 1e-14);
        }
    }

    #[test]
    fn uniform_nests_linear_and_angular() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let z = Vec3::zeros();
        for _ in 0..50 {
            let s = sample(&mut rng);
            let u_lin = essential_uniform(&s.r, &s.t, &s.d1, &s.d2, &z, &z, s.v1, s.v2, LR);
            let lin = essential_linear(&s.r, &s.t, &s.d1, &s.d2, s.v1, s.v2, LR);
            assert!((u_lin - lin).abs().max() < 1e-14);
            let u_ang = essential_uniform(&s.r, &s.t, &z, &z, &s.w1, &s.w2, s.v1, s.v2, LR);
            let ang = essential_angular(&s.r, &s.t, &s.w1, &s.w2, s.v1, s.v2, LR);
            assert!((u_ang - ang).abs().max() < 1e-14);
        }
    }

    #[test]
    fn linear_model_is_affine_in_velocity() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let s = sample(&mut rng);
        let z = Vec3::zeros();
        let base = essential_linear(&s.r, &s.t, &z, &s.d2, s.v1, s.v2, LR);
        let unit = essential_linear(&s.r, &s.t, &s.d1, &s.d2, s.v1, s.v2, LR) - base;
        for alpha in [-3.0, -0.5, 0.25, 2.0, 7.0] {
            let e = essential_linear(&s.r, &s.t, &(s.d1 * alpha), &s.d2, s.v1, s.v2, LR);
            assert!((e - base - unit * alpha).abs().max() < 1e-12);
        }
    }
}
