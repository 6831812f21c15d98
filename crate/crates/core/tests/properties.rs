use proptest::prelude::*;

use rspose::bench::{rotation_error, spearman, translation_error};
use rspose::geometry::{
    essential_angular, essential_linear, essential_uniform, quat_local_update, rotation_tilt, rotation_yaw, skew,
    NormalizedPoint,
};
use rspose::io::{parse, CorrespondenceFile};
use rspose::refine::{energy, RefineConfig};
use rspose::robust::sampson_error;
use rspose::{CameraIntrinsics, Correspondence, InertialMeasurement, Mat3, RelativePoseEstimate, Rotation, Vec3};

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-range..range).prop_map(|a| Vec3::new(a[0], a[1], a[2]))
}

fn rotation() -> impl Strategy<Value = Rotation> {
    vec3(3.0).prop_map(|v| Rotation::from_scaled_axis(&v))
}

fn is_rotation(m: &Mat3, tol: f64) -> bool {
    (m.transpose() * m - Mat3::identity()).abs().max() < tol && (m.determinant() - 1.0).abs() < tol
}

proptest! {
    #[test]
    fn skew_is_the_cross_product(a in vec3(10.0), b in vec3(10.0)) {
        let s = skew(&a);
        prop_assert!((s * b - a.cross(&b)).norm() <= 1e-12 * (1.0 + a.norm() * b.norm()));
        prop_assert_eq!(s.transpose(), -s);
    }

    #[test]
    fn rotations_stay_orthonormal(q in rotation(), delta in vec3(0.5), psi in -7.0..7.0f64, phi in -1.5..1.5f64, theta in -1.5..1.5f64) {
        prop_assert!((q.quaternion().norm() - 1.0).abs() < 1e-12);
        prop_assert!(is_rotation(&q.to_matrix(), 1e-10));
        let u = quat_local_update(&q, &delta);
        prop_assert!((u.quaternion().norm() - 1.0).abs() < 1e-12);
        prop_assert!(is_rotation(&rotation_yaw(psi), 1e-12));
        prop_assert!(is_rotation(&rotation_tilt(phi, theta), 1e-12));
    }

    #[test]
    fn uniform_model_nests_the_others(
        q in rotation(), t in vec3(1.0), d1 in vec3(5.0), d2 in vec3(5.0), w1 in vec3(3.0), w2 in vec3(3.0),
        v1 in 0.0..1080.0f64, v2 in 0.0..1080.0f64,
    ) {
        let r = q.to_matrix();
        let z = Vec3::zeros();
        let ro = 6e-5;
        let lin = essential_uniform(&r, &t, &d1, &d2, &z, &z, v1, v2, ro) - essential_linear(&r, &t, &d1, &d2, v1, v2, ro);
        let ang = essential_uniform(&r, &t, &z, &z, &w1, &w2, v1, v2, ro) - essential_angular(&r, &t, &w1, &w2, v1, v2, ro);
        let gs = essential_uniform(&r, &t, &d1, &d2, &w1, &w2, v1, v2, 0.0) - r * skew(&t);
        prop_assert!(lin.abs().max() < 1e-14);
        prop_assert!(ang.abs().max() < 1e-14);
        prop_assert!(gs.abs().max() < 1e-14);
    }

    #[test]
    fn sampson_ignores_the_scale_of_e(q in rotation(), t in vec3(1.0), x in vec3(0.8), s in 0.01..100.0f64) {
        prop_assume!(t.norm() > 1e-3);
        let e = q.to_matrix() * skew(&t);
        let p1 = NormalizedPoint::new(x.x, x.y, 10.0);
        let p2 = NormalizedPoint::new(x.y, x.z, 20.0);
        let a = sampson_error(&e, &p1, &p2);
        let b = sampson_error(&(e * s), &p1, &p2);
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
    }

    #[test]
    fn error_metrics_are_symmetric_and_bounded(a in rotation(), b in rotation(), t1 in vec3(1.0), t2 in vec3(1.0)) {
        let (ra, rb) = (a.to_matrix(), b.to_matrix());
        let e = rotation_error(&ra, &rb).unwrap();
        prop_assert!((0.0..=180.0).contains(&e));
        prop_assert!((e - rotation_error(&rb, &ra).unwrap()).abs() < 1e-9);
        prop_assume!(t1.norm() > 1e-3 && t2.norm() > 1e-3);
        let d = translation_error(&t1, &t2).unwrap();
        prop_assert!((0.0..=90.0).contains(&d));
        prop_assert!((d - translation_error(&t1, &(-t2)).unwrap()).abs() < 1e-9);
        prop_assert!((d - translation_error(&(t1 * 3.0), &t2).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn energy_ignores_inlier_order(
        q in rotation(), t in vec3(1.0), d1 in vec3(1.0),
        pts in prop::collection::vec((vec3(0.9), 0.0..1080.0f64, 0.0..1080.0f64), 2..20),
        rot in 0usize..20,
    ) {
        let est = RelativePoseEstimate {
            rotation: q,
            translation: t,
            d1,
            d2: -d1,
            w1: Vec3::new(0.1, 0.2, 0.3),
            w2: Vec3::zeros(),
        };
        let corrs: Vec<Correspondence> = pts
            .iter()
            .map(|(p, r1, r2)| Correspondence::new(NormalizedPoint::new(p.x, p.y, *r1), NormalizedPoint::new(p.z, p.x, *r2)))
            .collect();
        let mut shuffled = corrs.clone();
        shuffled.rotate_left(rot % corrs.len());
        shuffled.reverse();
        let cfg = RefineConfig::default();
        let a = energy(&est, &corrs, 6e-5, &cfg).unwrap();
        let b = energy(&est, &shuffled, 6e-5, &cfg).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
    }

    #[test]
    fn correspondence_files_round_trip(
        g1 in vec3(10.0), w1 in vec3(3.0), g2 in vec3(10.0), w2 in vec3(3.0),
        pixels in prop::collection::vec(prop::array::uniform4(0.0..1080.0f64), 0..30),
        focal in 100.0..2000.0f64, readout in 0.0..1e-4f64,
    ) {
        let file = CorrespondenceFile {
            intrinsics: CameraIntrinsics::new(focal, 960.0, 540.0, 1920.0, 1080.0, readout).unwrap(),
            imu1: InertialMeasurement::new(g1, w1),
            imu2: InertialMeasurement::new(g2, w2),
            pixels,
        };
        prop_assert_eq!(parse(&file.to_text()).unwrap(), file);
    }

    #[test]
    fn spearman_of_increasing_maps_is_one(xs in prop::collection::btree_set(0i32..1000, 3..20)) {
        let x: Vec<f64> = xs.iter().map(|v| *v as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0).collect();
        let yr: Vec<f64> = y.iter().map(|v| -v).collect();
        prop_assert!((spearman(&x, &y) - 1.0).abs() < 1e-12);
        prop_assert!((spearman(&x, &yr) + 1.0).abs() < 1e-12);
    }
}
