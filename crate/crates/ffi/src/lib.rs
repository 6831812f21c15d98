//! C interface to the rspose estimators.
//!
//! A problem is built through an opaque `RsposeProblem` handle: camera
//! intrinsics at creation, IMU readings per frame, then pixel
//! correspondences. `rspose_estimate` runs RANSAC and optional refinement.
//! Every fallible call returns an `RsposeStatus`; the message of the last
//! failure on the calling thread is available from `rspose_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rspose::bench::{estimate_from_data, Method};
use rspose::geometry::{essential_uniform, NormalizedPoint};
use rspose::io::CorrespondenceFile;
use rspose::robust::sampson_error;
use rspose::{AlgorithmKind, CameraIntrinsics, Error, InertialMeasurement, Mat3, RefineConfig, Vec3};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RsposeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InsufficientPoints = 3,
    MissingInertial = 4,
    Degenerate = 5,
    NoConsensus = 6,
    Parse = 7,
    Io = 8,
    Internal = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RsposeAlgorithm {
    Linear9 = 0,
    Angular5 = 1,
    Angular3 = 2,
    Uniform11 = 3,
    Uniform9 = 4,
    /// Global-shutter baseline: Angular5 with zero angular velocity.
    Gs5 = 5,
}

impl RsposeAlgorithm {
    fn method(self) -> Method {
        match self {
            RsposeAlgorithm::Linear9 => Method::Solver(AlgorithmKind::Linear9),
            RsposeAlgorithm::Angular5 => Method::Solver(AlgorithmKind::Angular5),
            RsposeAlgorithm::Angular3 => Method::Solver(AlgorithmKind::Angular3),
            RsposeAlgorithm::Uniform11 => Method::Solver(AlgorithmKind::Uniform11),
            RsposeAlgorithm::Uniform9 => Method::Solver(AlgorithmKind::Uniform9),
            RsposeAlgorithm::Gs5 => Method::Gs5,
        }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RsposeOptions {
    /// Inlier threshold in pixels.
    pub ransac_threshold_px: f64,
    pub seed: u64,
    /// Nonzero runs the Sampson refinement after RANSAC.
    pub refine: i32,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RsposeEstimate {
    /// Unit quaternion, scalar first.
    pub rotation_wxyz: [f64; 4],
    /// Row-major rotation matrix.
    pub rotation_matrix: [f64; 9],
    pub translation: [f64; 3],
    pub d1: [f64; 3],
    pub d2: [f64; 3],
    pub w1: [f64; 3],
    pub w2: [f64; 3],
    pub inliers: u64,
    pub total: u64,
    pub iterations: u64,
    /// 1 when the solver and refinement converged.
    pub converged: i32,
}

/// Opaque problem handle.
pub struct RsposeProblem {
    intrinsics: CameraIntrinsics,
    imu1: InertialMeasurement,
    imu2: InertialMeasurement,
    pixels: Vec<[f64; 4]>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RsposeStatus {
    match e {
        Error::InsufficientPoints { .. } => RsposeStatus::InsufficientPoints,
        Error::MissingInertial { .. } => RsposeStatus::MissingInertial,
        Error::Degenerate(_) | Error::DegenerateGravity(_) => RsposeStatus::Degenerate,
        Error::NoConsensus(_) => RsposeStatus::NoConsensus,
        Error::Parse { .. } | Error::Csv(_) => RsposeStatus::Parse,
        Error::Io(_) => RsposeStatus::Io,
        Error::NonFinite(_) | Error::InvalidArgument(_) => RsposeStatus::InvalidArgument,
        Error::EnergyIncrease { .. } => RsposeStatus::Internal,
    }
}

fn fail(status: RsposeStatus, msg: &str) -> RsposeStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), RsposeStatus>) -> RsposeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RsposeStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(RsposeStatus::Internal, "panic inside rspose"),
    }
}

fn lift(e: Error) -> RsposeStatus {
    fail(status_of(&e), &e.to_string())
}

unsafe fn vec3(p: *const f64) -> Option<Vec3> {
    if p.is_null() {
        None
    } else {
        let s = std::slice::from_raw_parts(p, 3);
        Some(Vec3::new(s[0], s[1], s[2]))
    }
}

fn arr3(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rspose_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rspose_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn rspose_default_options() -> RsposeOptions {
    RsposeOptions {
        ransac_threshold_px: 1.0,
        seed: 0,
        refine: 1,
    }
}

/// Creates an empty problem. Returns NULL on invalid intrinsics.
#[no_mangle]
pub extern "C" fn rspose_problem_new(
    focal: f64,
    cx: f64,
    cy: f64,
    width: f64,
    height: f64,
    readout_time: f64,
) -> *mut RsposeProblem {
    let made = catch_unwind(|| CameraIntrinsics::new(focal, cx, cy, width, height, readout_time));
    match made {
        Ok(Ok(intrinsics)) => Box::into_raw(Box::new(RsposeProblem {
            intrinsics,
            imu1: InertialMeasurement::default(),
            imu2: InertialMeasurement::default(),
            pixels: Vec::new(),
        })),
        Ok(Err(e)) => {
            set_error(&e.to_string());
            ptr::null_mut()
        }
        Err(_) => {
            set_error("panic inside rspose");
            ptr::null_mut()
        }
    }
}

/// Reads a correspondence file into a new problem stored in `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rspose_problem_load_file(path: *const c_char, out: *mut *mut RsposeProblem) -> RsposeStatus {
    if path.is_null() || out.is_null() {
        return fail(RsposeStatus::NullPointer, "null argument");
    }
    guard(|| {
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(RsposeStatus::InvalidArgument, "path is not UTF-8"))?;
        let file = CorrespondenceFile::read(Path::new(path)).map_err(lift)?;
        *out = Box::into_raw(Box::new(RsposeProblem {
            intrinsics: file.intrinsics,
            imu1: file.imu1,
            imu2: file.imu2,
            pixels: file.pixels,
        }));
        Ok(())
    })
}

/// Releases a problem. NULL is ignored.
///
/// # Safety
/// `problem` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rspose_problem_free(problem: *mut RsposeProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Sets the IMU reading of frame 1 or 2. Either pointer may be NULL to mark
/// that channel as unavailable; otherwise each points to 3 doubles.
///
/// # Safety
/// `problem` must be a live handle; non-null vectors must hold 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn rspose_problem_set_imu(
    problem: *mut RsposeProblem,
    frame: u32,
    gravity: *const f64,
    angular_velocity: *const f64,
) -> RsposeStatus {
    let Some(p) = problem.as_mut() else {
        return fail(RsposeStatus::NullPointer, "null problem");
    };
    let imu = InertialMeasurement {
        gravity: vec3(gravity),
        angular_velocity: vec3(angular_velocity),
    };
    let finite = imu.gravity.iter().chain(imu.angular_velocity.iter()).all(|v| v.iter().all(|c| c.is_finite()));
    if !finite {
        return fail(RsposeStatus::InvalidArgument, "non-finite IMU reading");
    }
    match frame {
        1 => p.imu1 = imu,
        2 => p.imu2 = imu,
        _ => return fail(RsposeStatus::InvalidArgument, "frame must be 1 or 2"),
    }
    RsposeStatus::Ok
}

/// Appends a pixel correspondence `(u1, v1)` in frame 1 to `(u2, v2)` in
/// frame 2. Rows are the `v` coordinates.
///
/// # Safety
/// `problem` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rspose_problem_add_correspondence(
    problem: *mut RsposeProblem,
    u1: f64,
    v1: f64,
    u2: f64,
    v2: f64,
) -> RsposeStatus {
    let Some(p) = problem.as_mut() else {
        return fail(RsposeStatus::NullPointer, "null problem");
    };
    let px = [u1, v1, u2, v2];
    if !px.iter().all(|c| c.is_finite()) {
        return fail(RsposeStatus::InvalidArgument, "non-finite pixel");
    }
    let k = &p.intrinsics;
    if !(k.contains(&[u1, v1]) && k.contains(&[u2, v2])) {
        return fail(RsposeStatus::InvalidArgument, "pixel outside the image");
    }
    p.pixels.push(px);
    RsposeStatus::Ok
}

/// Number of correspondences, 0 for NULL.
///
/// # Safety
/// `problem` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rspose_problem_len(problem: *const RsposeProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.pixels.len())
}

/// Estimates the relative pose. `options` may be NULL for the defaults.
///
/// # Safety
/// `problem` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rspose_estimate(
    problem: *const RsposeProblem,
    algorithm: RsposeAlgorithm,
    options: *const RsposeOptions,
    out: *mut RsposeEstimate,
) -> RsposeStatus {
    let (Some(p), false) = (problem.as_ref(), out.is_null()) else {
        return fail(RsposeStatus::NullPointer, "null argument");
    };
    let opts = options.as_ref().copied().unwrap_or(rspose_default_options());
    guard(|| {
        let file = CorrespondenceFile {
            intrinsics: p.intrinsics,
            imu1: p.imu1,
            imu2: p.imu2,
            pixels: p.pixels.clone(),
        };
        let refine = (opts.refine != 0).then(RefineConfig::default);
        let est = estimate_from_data(&file, algorithm.method(), opts.ransac_threshold_px, opts.seed, refine)
            .map_err(lift)?;
        let e = &est.outcome.estimate;
        let m = e.rotation.to_matrix();
        let mut rm = [0.0; 9];
        for (i, v) in rm.iter_mut().enumerate() {
            *v = m[(i / 3, i % 3)];
        }
        *out = RsposeEstimate {
            rotation_wxyz: e.rotation.wxyz(),
            rotation_matrix: rm,
            translation: arr3(&e.translation),
            d1: arr3(&e.d1),
            d2: arr3(&e.d2),
            w1: arr3(&e.w1),
            w2: arr3(&e.w2),
            inliers: est.outcome.inliers as u64,
            total: est.total as u64,
            iterations: est.outcome.iterations as u64,
            converged: est.outcome.converged as i32,
        };
        Ok(())
    })
}

/// Per-row essential matrix of the uniform model, written row-major to
/// `out` (9 doubles). `r` is a row-major rotation; the vectors hold 3
/// doubles each.
///
/// # Safety
/// All pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn rspose_essential_uniform(
    r: *const f64,
    t: *const f64,
    d1: *const f64,
    d2: *const f64,
    w1: *const f64,
    w2: *const f64,
    row1: f64,
    row2: f64,
    readout_time: f64,
    out: *mut f64,
) -> RsposeStatus {
    if r.is_null() || out.is_null() {
        return fail(RsposeStatus::NullPointer, "null argument");
    }
    let (Some(t), Some(d1), Some(d2), Some(w1), Some(w2)) = (vec3(t), vec3(d1), vec3(d2), vec3(w1), vec3(w2)) else {
        return fail(RsposeStatus::NullPointer, "null argument");
    };
    let rm = Mat3::from_row_slice(std::slice::from_raw_parts(r, 9));
    guard(|| {
        let e = essential_uniform(&rm, &t, &d1, &d2, &w1, &w2, row1, row2, readout_time);
        let dst = std::slice::from_raw_parts_mut(out, 9);
        for (i, v) in dst.iter_mut().enumerate() {
            *v = e[(i / 3, i % 3)];
        }
        Ok(())
    })
}

/// Sampson distance of normalized points `p1`, `p2` (2 doubles each) under
/// the row-major essential matrix `e`. Returns infinity for a degenerate
/// configuration and NaN for a null pointer.
///
/// # Safety
/// `e` must hold 9 doubles, `p1` and `p2` 2 doubles each.
#[no_mangle]
pub unsafe extern "C" fn rspose_sampson_error(e: *const f64, p1: *const f64, p2: *const f64) -> f64 {
    if e.is_null() || p1.is_null() || p2.is_null() {
        set_error("null argument");
        return f64::NAN;
    }
    let e = Mat3::from_row_slice(std::slice::from_raw_parts(e, 9));
    let a = std::slice::from_raw_parts(p1, 2);
    let b = std::slice::from_raw_parts(p2, 2);
    sampson_error(&e, &NormalizedPoint::new(a[0], a[1], 0.0), &NormalizedPoint::new(b[0], b[1], 0.0))
}
