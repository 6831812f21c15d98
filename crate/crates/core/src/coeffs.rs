//! Coefficient matrices `A(R)` of the homogeneous systems `A x = 0`.
//!
//! Every algorithm stacks one epipolar constraint per correspondence. Once the
//! rotation is fixed the constraint is linear in
//! `x = [tx, ty, tz, d1x, d1y, d1z, d2x, d2y, d2z]` (or just `[tx, ty, tz]`
//! for the angular models), so each row is read off by evaluating the
//! epipolar form on the canonical basis vectors of `x`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{
    essential_uniform, rotation_tilt, rotation_yaw, tilt_from_gravity, Correspondence,
    InertialMeasurement, Mat3, Rotation, Vec3,
};

/// The five minimal solvers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AlgorithmKind {
    /// Linear model, gravity known: 9 points, unknowns `[t, d1, d2]`.
    Linear9,
    /// Angular model, angular velocity known: 5 points, unknowns `t`.
    Angular5,
    /// Angular model, gravity and angular velocity known: 3 points.
    Angular3,
    /// Uniform model, angular velocity known: 11 points, unknowns `[t, d1, d2]`.
    Uniform11,
    /// Uniform model, gravity and angular velocity known: 9 points.
    Uniform9,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 5] = [
        AlgorithmKind::Linear9,
        AlgorithmKind::Angular5,
        AlgorithmKind::Angular3,
        AlgorithmKind::Uniform11,
        AlgorithmKind::Uniform9,
    ];

    pub fn min_points(self) -> usize {
        match self {
            AlgorithmKind::Linear9 => 9,
            AlgorithmKind::Angular5 => 5,
            AlgorithmKind::Angular3 => 3,
            AlgorithmKind::Uniform11 => 11,
            AlgorithmKind::Uniform9 => 9,
        }
    }

    /// Length of the unknown vector `x`.
    pub fn unknowns(self) -> usize {
        match self {
            AlgorithmKind::Angular5 | AlgorithmKind::Angular3 => 3,
            _ => 9,
        }
    }

    /// Whether the rotation is reduced to a yaw angle using gravity.
    pub fn uses_gravity(self) -> bool {
        matches!(
            self,
            AlgorithmKind::Linear9 | AlgorithmKind::Angular3 | AlgorithmKind::Uniform9
        )
    }

    pub fn uses_angular_velocity(self) -> bool {
        !matches!(self, AlgorithmKind::Linear9)
    }

    pub fn estimates_linear_velocity(self) -> bool {
        self.unknowns() == 9
    }

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::Linear9 => "linear9",
            AlgorithmKind::Angular5 => "angular5",
            AlgorithmKind::Angular3 => "angular3",
            AlgorithmKind::Uniform11 => "uniform11",
            AlgorithmKind::Uniform9 => "uniform9",
        }
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlgorithmKind::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm '{s}'")))
    }
}

/// The rotation unknown: a yaw angle for the gravity-aided solvers, a full
/// rotation otherwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RotationHypothesis {
    Yaw(f64),
    Full(Rotation),
}

impl RotationHypothesis {
    /// The full relative rotation implied by the hypothesis. Yaw hypotheses
    /// need the gravity readings of both frames.
    pub fn to_matrix(&self, imu1: &InertialMeasurement, imu2: &InertialMeasurement) -> Result<Mat3> {
        match self {
            RotationHypothesis::Full(q) => Ok(q.to_matrix()),
            RotationHypothesis::Yaw(psi) => {
                let (g1, g2) = match (imu1.gravity, imu2.gravity) {
                    (Some(a), Some(b)) => (a, b),
                    _ => return Err(Error::InvalidArgument("yaw hypothesis needs gravity".into())),
                };
                Ok(compose_from_gravity(*psi, &g1, &g2)?)
            }
        }
    }
}

/// `R(phi2, theta2)^T R(psi) R(phi1, theta1)` with the tilts taken from the
/// two gravity readings.
pub fn compose_from_gravity(psi: f64, g1: &Vec3, g2: &Vec3) -> Result<Mat3> {
    let (p1, t1) = tilt_from_gravity(g1)?;
    let (p2, t2) = tilt_from_gravity(g2)?;
    Ok(rotation_tilt(p2, t2).transpose() * rotation_yaw(psi) * rotation_tilt(p1, t1))
}

/// Stacked coefficient matrix for one algorithm.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientMatrix {
    pub entries: DMatrix<f64>,
    pub algorithm: AlgorithmKind,
}

impl CoefficientMatrix {
    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    /// `A x` for a candidate unknown vector.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.entries * x
    }
}

/// Angular velocities that enter the model for `algorithm`: the measured ones
/// for angular and uniform models, zero for the linear model.
pub(crate) fn model_angular_velocities(
    algorithm: AlgorithmKind,
    imu1: &InertialMeasurement,
    imu2: &InertialMeasurement,
) -> (Vec3, Vec3) {
    if algorithm.uses_angular_velocity() {
        (
            imu1.angular_velocity.unwrap_or_else(Vec3::zeros),
            imu2.angular_velocity.unwrap_or_else(Vec3::zeros),
        )
    } else {
        (Vec3::zeros(), Vec3::zeros())
    }
}

/// Splits an unknown vector into `(t, d1, d2)`; three-element vectors have
/// zero velocities.
pub fn split_unknowns(x: &[f64]) -> (Vec3, Vec3, Vec3) {
    let t = Vec3::new(x[0], x[1], x[2]);
    if x.len() >= 9 {
        (
            t,
            Vec3::new(x[3], x[4], x[5]),
            Vec3::new(x[6], x[7], x[8]),
        )
    } else {
        (t, Vec3::zeros(), Vec3::zeros())
    }
}

/// One row of `A`: the coefficients `r` with `r . x = m2^T E_r(R, x) m1`.
pub fn constraint_coefficients(
    c: &Correspondence,
    algorithm: AlgorithmKind,
    r_full: &Mat3,
    imu1: &InertialMeasurement,
    imu2: &InertialMeasurement,
    readout: f64,
) -> DVector<f64> {
    let (w1, w2) = model_angular_velocities(algorithm, imu1, imu2);
    let n = algorithm.unknowns();
    let mut basis = vec![0.0; n];
    DVector::from_iterator(
        n,
        (0..n).map(|k| {
            basis.iter_mut().for_each(|b| *b = 0.0);
            basis[k] = 1.0;
            let (t, d1, d2) = split_unknowns(&basis);
            let e = essential_uniform(r_full, &t, &d1, &d2, &w1, &w2, c.p1.row, c.p2.row, readout);
            c.p2.m.dot(&(e * c.p1.m))
        }),
    )
}

fn check_inputs(
    n_corrs: usize,
    hyp: &RotationHypothesis,
    imu1: &InertialMeasurement,
    imu2: &InertialMeasurement,
    algorithm: AlgorithmKind,
) -> Result<()> {
    let required = algorithm.min_points();
    if n_corrs < required {
        return Err(Error::InsufficientPoints {
            algorithm,
            required,
            got: n_corrs,
        });
    }
    let needs_gravity = matches!(hyp, RotationHypothesis::Yaw(_));
    if needs_gravity && (imu1.gravity.is_none() || imu2.gravity.is_none()) {
        return Err(Error::MissingInertial {
            algorithm,
            channel: "gravity",
        });
    }
    if algorithm.uses_angular_velocity()
        && (imu1.angular_velocity.is_none() || imu2.angular_velocity.is_none())
    {
        return Err(Error::MissingInertial {
            algorithm,
            channel: "angular velocity",
        });
    }
    Ok(())
}

/// Stacks the constraint rows of `corrs` under rotation hypothesis `hyp` and
/// scales each row to unit length. Rows that vanish to rounding level are
/// left as zero.
pub fn build_matrix(
    corrs: &[Correspondence],
    hyp: &RotationHypothesis,
    imu1: &InertialMeasurement,
    imu2: &InertialMeasurement,
    readout: f64,
    algorithm: AlgorithmKind,
) -> Result<CoefficientMatrix> {
    check_inputs(corrs.len(), hyp, imu1, imu2, algorithm)?;
    let r_full = hyp.to_matrix(imu1, imu2)?;
    Ok(build_matrix_unchecked(corrs, &r_full, imu1, imu2, readout, algorithm))
}

/// Rows shorter than this, relative to the lengths of the two bearings, are
/// rounding noise and are not rescaled.
const ROW_FLOOR: f64 = 1e-12;

/// The stacked rows without any scaling.
pub(crate) fn build_matrix_raw(
    corrs: &[Correspondence],
    r_full: &Mat3,
    imu1: &InertialMeasurement,
    imu2: &InertialMeasurement,
    readout: f64,
    algorithm: AlgorithmKind,
) -> DMatrix<f64> {
    let mut entries = DMatrix::zeros(corrs.len(), algorithm.unknowns());
    for (i, c) in corrs.iter().enumerate() {
        let row = constraint_coefficients(c, algorithm, r_full, imu1, imu2, readout);
        entries.row_mut(i).copy_from(&row.transpose());
    }
    entries
}

pub(crate) fn build_matrix_unchecked(
    corrs: &[Correspondence],
    r_full: &Mat3,
    imu1: &InertialMeasurement,
    imu2: &InertialMeasurement,
    readout: f64,
    algorithm: AlgorithmKind,
) -> CoefficientMatrix {
    let n = algorithm.unknowns();
    let mut entries = DMatrix::zeros(corrs.len(), n);
    for (i, c) in corrs.iter().enumerate() {
        let row = constraint_coefficients(c, algorithm, r_full, imu1, imu2, readout);
        let norm = row.norm();
        let floor = ROW_FLOOR * c.p1.m.norm() * c.p2.m.norm();
        let scale = if norm > floor.max(f64::MIN_POSITIVE) { 1.0 / norm } else { 0.0 };
        entries.row_mut(i).copy_from(&(row * scale).transpose());
    }
    CoefficientMatrix { entries, algorithm }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{skew, NormalizedPoint};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_corr(rng: &mut ChaCha8Rng) -> Correspondence {
        Correspondence::new(
            NormalizedPoint::new(rng.random_range(-1.0..1.0), rng.random_range(-0.8..0.8), rng.random_range(0.0..1080.0)),
            NormalizedPoint::new(rng.random_range(-1.0..1.0), rng.random_range(-0.8..0.8), rng.random_range(0.0..1080.0)),
        )
    }

    fn random_vec(rng: &mut ChaCha8Rng, s: f64) -> Vec3 {
        Vec3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
    }

    fn imu(rng: &mut ChaCha8Rng) -> InertialMeasurement {
        InertialMeasurement::new(
            (Vec3::y() + random_vec(rng, 0.3)).normalize() * 9.81,
            random_vec(rng, 2.0),
        )
    }

    #[test]
    fn table_of_sizes() {
        let expected = [(9, 9), (5, 3), (3, 3), (11, 9), (9, 9)];
        for (a, (p, d)) in AlgorithmKind::ALL.iter().zip(expected) {
            assert_eq!(a.min_points(), p);
            assert_eq!(a.unknowns(), d);
            assert_eq!(a.name().parse::<AlgorithmKind>().unwrap(), *a);
        }
        assert!("gs5".parse::<AlgorithmKind>().is_err());
    }

    #[test]
    fn basis_row_matches_global_shutter_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut c = random_corr(&mut rng);
        c.p1.row = 0.0;
        c.p2.row = 0.0;
        let r = Rotation::from_scaled_axis(&random_vec(&mut rng, 0.5)).to_matrix();
        let i1 = imu(&mut rng);
        let i2 = imu(&mut rng);
        for alg in AlgorithmKind::ALL {
            let row = constraint_coefficients(&c, alg, &r, &i1, &i2, 60e-6);
            assert_eq!(row.len(), alg.unknowns());
            for k in 0..3 {
                let mut e = Vec3::zeros();
                e[k] = 1.0;
                let expected = c.p2.m.dot(&(r * skew(&e) * c.p1.m));
                assert!((row[k] - expected).abs() < 1e-15);
            }
            if alg.unknowns() == 9 {
                // velocities have no effect on first-row points
                assert!(row.rows(3, 6).amax() < 1e-15);
            }
        }
    }

    /// Independent closed form: the epipolar form equals `b . (m1 x R_r^T m2)`
    /// with `b = t - v1 lr d1 + v2 lr d2`.
    #[test]
    fn rows_match_closed_form_and_are_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let lr = 60e-6;
        for _ in 0..50 {
            let c = random_corr(&mut rng);
            let r = Rotation::from_scaled_axis(&random_vec(&mut rng, 0.5)).to_matrix();
            let i1 = imu(&mut rng);
            let i2 = imu(&mut rng);
            let w1 = i1.angular_velocity.unwrap();
            let w2 = i2.angular_velocity.unwrap();
            let p1 = Mat3::identity() + skew(&w1) * (c.p1.row * lr);
            let p2 = Mat3::identity() + skew(&w2) * (c.p2.row * lr);
            let rr = p2.transpose() * r * p1;
            let n = c.p1.m.cross(&(rr.transpose() * c.p2.m));
            let row = constraint_coefficients(&c, AlgorithmKind::Uniform9, &r, &i1, &i2, lr);
            let expected: Vec<f64> = n
                .iter()
                .copied()
                .chain(n.iter().map(|v| -v * c.p1.row * lr))
                .chain(n.iter().map(|v| v * c.p2.row * lr))
                .collect();
            for k in 0..9 {
                assert!((row[k] - expected[k]).abs() < 1e-13, "{k}: {} vs {}", row[k], expected[k]);
            }
            // linearity through the full epipolar form
            let x = DVector::from_iterator(9, (0..9).map(|_| rng.random_range(-2.0..2.0)));
            let y = DVector::from_iterator(9, (0..9).map(|_| rng.random_range(-2.0..2.0)));
            let alpha = rng.random_range(-3.0..3.0);
            let form = |v: &DVector<f64>| {
                let (t, d1, d2) = split_unknowns(v.as_slice());
                let e = essential_uniform(&r, &t, &d1, &d2, &w1, &w2, c.p1.row, c.p2.row, lr);
                c.p2.m.dot(&(e * c.p1.m))
            };
            let combo = &x * alpha + &y;
            assert!((form(&combo) - (alpha * form(&x) + form(&y))).abs() < 1e-12);
            assert!((row.dot(&combo) - form(&combo)).abs() < 1e-12);
        }
    }

    #[test]
    fn row_scaling_and_normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let c = random_corr(&mut rng);
        let r = Rotation::from_scaled_axis(&random_vec(&mut rng, 0.5)).to_matrix();
        let i1 = imu(&mut rng);
        let i2 = imu(&mut rng);
        let mut scaled = c;
        scaled.p1.m *= 2.5;
        scaled.p2.m *= -0.4;
        let a = constraint_coefficients(&c, AlgorithmKind::Uniform11, &r, &i1, &i2, 60e-6);
        let b = constraint_coefficients(&scaled, AlgorithmKind::Uniform11, &r, &i1, &i2, 60e-6);
        assert!((b - &a * -1.0).amax() < 1e-12);
        let ma = build_matrix_unchecked(&[c], &r, &i1, &i2, 60e-6, AlgorithmKind::Uniform11);
        let mb = build_matrix_unchecked(&[scaled], &r, &i1, &i2, 60e-6, AlgorithmKind::Uniform11);
        assert!((ma.entries.row(0).norm() - 1.0).abs() < 1e-14);
        assert!((ma.entries + mb.entries).amax() < 1e-14);
    }

    #[test]
    fn build_matrix_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let corrs: Vec<_> = (0..8).map(|_| random_corr(&mut rng)).collect();
        let i = imu(&mut rng);
        let err = build_matrix(&corrs, &RotationHypothesis::Yaw(0.0), &i, &i, 6e-5, AlgorithmKind::Uniform9)
            .unwrap_err();
        assert!(matches!(err, Error::InsufficientPoints { required: 9, got: 8, .. }));
        let no_g = InertialMeasurement {
            gravity: None,
            angular_velocity: Some(Vec3::zeros()),
        };
        let err = build_matrix(&corrs[..3], &RotationHypothesis::Yaw(0.0), &no_g, &no_g, 6e-5, AlgorithmKind::Angular3)
            .unwrap_err();
        assert!(matches!(err, Error::MissingInertial { channel: "gravity", .. }));
        let no_w = InertialMeasurement {
            gravity: Some(Vec3::y() * 9.81),
            angular_velocity: None,
        };
        let full = RotationHypothesis::Full(Rotation::identity());
        let err = build_matrix(&corrs[..5], &full, &no_w, &no_w, 6e-5, AlgorithmKind::Angular5).unwrap_err();
        assert!(matches!(err, Error::MissingInertial { channel: "angular velocity", .. }));
        // linear model ignores angular velocity
        let a = build_matrix(&corrs[..8], &RotationHypothesis::Yaw(0.3), &no_w, &no_w, 6e-5, AlgorithmKind::Linear9);
        assert!(matches!(a, Err(Error::InsufficientPoints { .. })));
        let mut more = corrs.clone();
        more.push(random_corr(&mut rng));
        let a = build_matrix(&more, &RotationHypothesis::Yaw(0.3), &no_w, &no_w, 6e-5, AlgorithmKind::Linear9).unwrap();
        assert_eq!(a.entries.shape(), (9, 9));
    }
}
