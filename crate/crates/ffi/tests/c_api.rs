use std::ffi::{CStr, CString};
use std::ptr;

use rspose::bench::{generate_trial, rotation_error, translation_error, TrialSetup};
use rspose::geometry::{essential_uniform, skew};
use rspose::io::CorrespondenceFile;
use rspose::{Mat3, Vec3};
use rspose_ffi::*;

fn last_error() -> String {
    let p = rspose_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn setup() -> TrialSetup {
    TrialSetup {
        n_points: 120,
        seed: 11,
        ..TrialSetup::default()
    }
}

unsafe fn problem_from(data: &rspose::bench::TrialData) -> *mut RsposeProblem {
    let k = data.scene.intrinsics;
    let p = rspose_problem_new(k.focal, k.cx, k.cy, k.width, k.height, k.readout_time);
    assert!(!p.is_null());
    for (frame, imu) in [(1, data.imu1), (2, data.imu2)] {
        let g = imu.gravity.unwrap();
        let w = imu.angular_velocity.unwrap();
        assert_eq!(rspose_problem_set_imu(p, frame, g.as_ptr(), w.as_ptr()), RsposeStatus::Ok);
    }
    for c in &data.pixels {
        assert_eq!(
            rspose_problem_add_correspondence(p, c.p1[0], c.p1[1], c.p2[0], c.p2[1]),
            RsposeStatus::Ok
        );
    }
    p
}

#[test]
fn estimate_through_handle_matches_truth() {
    let data = generate_trial(&setup());
    let gt = data.scene.ground_truth();
    unsafe {
        let p = problem_from(&data);
        assert_eq!(rspose_problem_len(p), data.pixels.len());
        let mut out = RsposeEstimate::default();
        let st = rspose_estimate(p, RsposeAlgorithm::Uniform9, ptr::null(), &mut out);
        assert_eq!(st, RsposeStatus::Ok, "{}", last_error());
        let r = Mat3::from_row_slice(&out.rotation_matrix);
        let t = Vec3::from_column_slice(&out.translation);
        assert!(rotation_error(&gt.rotation.to_matrix(), &r).unwrap() < 0.01);
        assert!(translation_error(&gt.translation, &t).unwrap() < 0.1);
        assert_eq!(out.total as usize, data.pixels.len());
        assert!(out.inliers as usize >= data.pixels.len() * 9 / 10);
        let q = out.rotation_wxyz;
        assert!(((q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]) - 1.0).abs() < 1e-12);
        rspose_problem_free(p);
    }
}

#[test]
fn same_seed_same_answer() {
    let data = generate_trial(&setup());
    let opts = RsposeOptions {
        seed: 5,
        ..rspose_default_options()
    };
    unsafe {
        let p = problem_from(&data);
        let mut a = RsposeEstimate::default();
        let mut b = RsposeEstimate::default();
        assert_eq!(rspose_estimate(p, RsposeAlgorithm::Angular5, &opts, &mut a), RsposeStatus::Ok);
        assert_eq!(rspose_estimate(p, RsposeAlgorithm::Angular5, &opts, &mut b), RsposeStatus::Ok);
        assert_eq!(a, b);
        rspose_problem_free(p);
    }
}

#[test]
fn load_file_round_trip() {
    let data = generate_trial(&setup());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.txt");
    CorrespondenceFile::from_pixels(data.scene.intrinsics, data.imu1, data.imu2, &data.pixels)
        .write(&path)
        .unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let mut loaded: *mut RsposeProblem = ptr::null_mut();
        assert_eq!(rspose_problem_load_file(cpath.as_ptr(), &mut loaded), RsposeStatus::Ok);
        assert_eq!(rspose_problem_len(loaded), data.pixels.len());
        let built = problem_from(&data);
        let mut a = RsposeEstimate::default();
        let mut b = RsposeEstimate::default();
        let opts = RsposeOptions {
            refine: 0,
            ..rspose_default_options()
        };
        assert_eq!(rspose_estimate(loaded, RsposeAlgorithm::Uniform11, &opts, &mut a), RsposeStatus::Ok);
        assert_eq!(rspose_estimate(built, RsposeAlgorithm::Uniform11, &opts, &mut b), RsposeStatus::Ok);
        assert_eq!(a, b);
        rspose_problem_free(loaded);
        rspose_problem_free(built);
    }
}

#[test]
fn error_codes() {
    unsafe {
        let mut out = RsposeEstimate::default();
        assert_eq!(
            rspose_estimate(ptr::null(), RsposeAlgorithm::Uniform9, ptr::null(), &mut out),
            RsposeStatus::NullPointer
        );
        assert!(rspose_problem_new(-1.0, 960.0, 540.0, 1920.0, 1080.0, 6e-5).is_null());
        assert!(!last_error().is_empty());

        let p = rspose_problem_new(640.0, 960.0, 540.0, 1920.0, 1080.0, 6e-5);
        assert_eq!(rspose_problem_set_imu(p, 3, ptr::null(), ptr::null()), RsposeStatus::InvalidArgument);
        assert_eq!(
            rspose_problem_add_correspondence(p, -5.0, 10.0, 10.0, 10.0),
            RsposeStatus::InvalidArgument
        );
        assert_eq!(
            rspose_problem_add_correspondence(p, f64::NAN, 10.0, 10.0, 10.0),
            RsposeStatus::InvalidArgument
        );
        for i in 0..4 {
            let u = 100.0 + 50.0 * i as f64;
            assert_eq!(rspose_problem_add_correspondence(p, u, 200.0, u + 3.0, 210.0), RsposeStatus::Ok);
        }
        assert_eq!(
            rspose_estimate(p, RsposeAlgorithm::Uniform9, ptr::null(), &mut out),
            RsposeStatus::InsufficientPoints
        );
        assert_eq!(
            rspose_estimate(p, RsposeAlgorithm::Angular3, ptr::null(), &mut out),
            RsposeStatus::MissingInertial
        );
        rspose_problem_free(p);
        rspose_problem_free(ptr::null_mut());

        let missing = CString::new("/nonexistent/rspose/input.txt").unwrap();
        let mut loaded: *mut RsposeProblem = ptr::null_mut();
        assert_eq!(rspose_problem_load_file(missing.as_ptr(), &mut loaded), RsposeStatus::Io);
        assert!(loaded.is_null());

        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.txt");
        std::fs::write(&bad, "META focal 640 cx 960\nCORR 1 2 3\n").unwrap();
        let bad = CString::new(bad.to_str().unwrap()).unwrap();
        assert_eq!(rspose_problem_load_file(bad.as_ptr(), &mut loaded), RsposeStatus::Parse);
        assert_eq!(rspose_problem_len(ptr::null()), 0);
    }
}

#[test]
fn sampson_hand_value() {
    let e = skew(&Vec3::new(1.0, 0.0, 0.0));
    let mut rm = [0.0; 9];
    for (i, v) in rm.iter_mut().enumerate() {
        *v = e[(i / 3, i % 3)];
    }
    let got = unsafe { rspose_sampson_error(rm.as_ptr(), [0.0, 0.0].as_ptr(), [0.0, 1.0].as_ptr()) };
    assert!((got - 0.5f64.sqrt()).abs() < 1e-12);
    let nan = unsafe { rspose_sampson_error(ptr::null(), [0.0, 0.0].as_ptr(), [0.0, 1.0].as_ptr()) };
    assert!(nan.is_nan());
}

#[test]
fn essential_matches_library() {
    let r = rspose::Rotation::from_scaled_axis(&Vec3::new(0.1, -0.2, 0.05)).to_matrix();
    let vs = [
        Vec3::new(0.3, 0.1, 0.9),
        Vec3::new(0.5, -1.0, 0.2),
        Vec3::new(-0.4, 0.3, 0.7),
        Vec3::new(0.2, 0.9, -0.3),
        Vec3::new(-0.6, 0.1, 0.4),
    ];
    let mut rm = [0.0; 9];
    for (i, v) in rm.iter_mut().enumerate() {
        *v = r[(i / 3, i % 3)];
    }
    let mut out = [0.0; 9];
    let st = unsafe {
        rspose_essential_uniform(
            rm.as_ptr(),
            vs[0].as_ptr(),
            vs[1].as_ptr(),
            vs[2].as_ptr(),
            vs[3].as_ptr(),
            vs[4].as_ptr(),
            120.0,
            800.0,
            6e-5,
            out.as_mut_ptr(),
        )
    };
    assert_eq!(st, RsposeStatus::Ok);
    let want = essential_uniform(&r, &vs[0], &vs[1], &vs[2], &vs[3], &vs[4], 120.0, 800.0, 6e-5);
    assert_eq!(Mat3::from_row_slice(&out), want);
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/rspose.h");
    for name in [
        "rspose_problem_new",
        "rspose_problem_free",
        "rspose_problem_set_imu",
        "rspose_problem_add_correspondence",
        "rspose_problem_len",
        "rspose_problem_load_file",
        "rspose_estimate",
        "rspose_default_options",
        "rspose_sampson_error",
        "rspose_essential_uniform",
        "rspose_last_error",
        "rspose_version",
        "typedef struct RsposeProblem RsposeProblem",
    ] {
        assert!(header.contains(name), "{name}");
    }
    let v = unsafe { CStr::from_ptr(rspose_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
