//! Synthetic two-view rolling-shutter scenes.
//!
//! Frames and conventions:
//!
//! * The world frame has gravity `[0, 0, 9.81]`. A fixed alignment maps world
//!   `z` onto the camera's vertical axis (image `y`), so an untilted camera
//!   reads gravity along [`VERTICAL_AXIS`](crate::geometry::VERTICAL_AXIS).
//! * Camera poses are world-to-camera rotations plus camera centres, valid
//!   for image row 0.
//! * At row `v` the first camera maps a point `X` (its row-0 coordinates) to
//!   `(I + v lr [w1]x)^T (X - v lr d1)`.
//! * The second camera is modelled relative to the first so that the
//!   rolling-shutter epipolar constraint holds exactly: its row-`v2` linear
//!   map is `(I + v2 lr [w2]x)^-1 R` and its centre is
//!   `v1 lr d1 + (I + v1 lr [w1]x)^-T (t - v1 lr d1 + v2 lr d2)`. When `w1 = 0`
//!   this is the constant-velocity camera centre `t + v2 lr d2`.

use nalgebra::Matrix3;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

use crate::geometry::{
    normalize_pixel, skew, CameraIntrinsics, Correspondence, InertialMeasurement, Mat3,
    RelativePoseEstimate, Rotation, Vec3, GRAVITY,
};

/// Tolerance on the row fixed point, in rows.
pub const ROW_TOLERANCE: f64 = 1e-10;
pub const ROW_MAX_ITERATIONS: usize = 50;

/// World-to-camera rotation of an untilted camera: camera `x` is world `x`,
/// camera `y` (image down) is world `z`, and the optical axis is world `-y`.
pub fn world_alignment() -> Mat3 {
    Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0)
}

pub fn gravity_world() -> Vec3 {
    Vec3::new(0.0, 0.0, GRAVITY)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MotionType {
    /// Second camera displaced along the nominal optical axis.
    Forward,
    /// Second camera displaced along the nominal image `x` axis.
    Sideways,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub n_points: usize,
    /// Mean point depth in metres, measured from the first camera.
    pub mean_depth: f64,
    /// Mean distance between the camera centres in metres.
    pub baseline: f64,
    /// Each camera's orientation is drawn uniformly within this many degrees
    /// per axis of the nominal orientation.
    pub max_orientation_deg: f64,
    pub motion: MotionType,
    /// Linear velocities in m/s, each in its own camera frame.
    pub d1: Vec3,
    pub d2: Vec3,
    /// Angular velocities in rad/s, each in its own camera frame.
    pub w1: Vec3,
    pub w2: Vec3,
    pub intrinsics: CameraIntrinsics,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_points: 300,
            mean_depth: 20.0,
            baseline: 2.0,
            max_orientation_deg: 20.0,
            motion: MotionType::Forward,
            d1: Vec3::zeros(),
            d2: Vec3::zeros(),
            w1: Vec3::zeros(),
            w2: Vec3::zeros(),
            intrinsics: CameraIntrinsics::default(),
            seed: 0,
        }
    }
}

impl SceneConfig {
    /// Sets `d2 = -d1` and `w2 = -w1`.
    pub fn with_opposite_velocities(mut self, d1: Vec3, w1: Vec3) -> Self {
        self.d1 = d1;
        self.d2 = -d1;
        self.w1 = w1;
        self.w2 = -w1;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraPose {
    /// World-to-camera rotation at row 0.
    pub rotation: Mat3,
    /// Camera centre in world coordinates at row 0.
    pub center: Vec3,
}

impl CameraPose {
    pub fn to_camera(&self, x: &Vec3) -> Vec3 {
        self.rotation * (x - self.center)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub points: Vec<Vec3>,
    pub pose1: CameraPose,
    pub pose2: CameraPose,
    pub d1: Vec3,
    pub d2: Vec3,
    pub w1: Vec3,
    pub w2: Vec3,
    pub intrinsics: CameraIntrinsics,
    pub gravity_world: Vec3,
}

/// Pixel observations of one scene point in both frames.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelCorrespondence {
    pub p1: [f64; 2],
    pub p2: [f64; 2],
    /// Index into [`SyntheticScene::points`].
    pub point: usize,
}

/// A rolling-shutter projection: the pixel and the row at which it was exposed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RsProjection {
    pub pixel: [f64; 2],
    pub row: f64,
}

/// Maps reference-frame points into camera coordinates at a given image row.
pub trait RowPose {
    fn to_camera(&self, x: &Vec3, row: f64) -> Vec3;
}

/// A camera moving with constant linear and angular velocity during readout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantVelocityCamera {
    pub pose: CameraPose,
    /// Linear velocity in the camera's row-0 frame, m/s.
    pub linear_velocity: Vec3,
    /// Angular velocity in the camera frame, rad/s.
    pub angular_velocity: Vec3,
    pub readout_time: f64,
}

impl RowPose for ConstantVelocityCamera {
    fn to_camera(&self, x: &Vec3, row: f64) -> Vec3 {
        let s = row * self.readout_time;
        let p = Mat3::identity() + skew(&self.angular_velocity) * s;
        p.transpose() * (self.pose.to_camera(x) - self.linear_velocity * s)
    }
}

/// Second view of a pair, expressed in the first camera's row-0 frame and
/// tied to the row at which the first camera saw the point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoupledSecondView {
    /// Relative rotation, first camera to second camera.
    pub rotation: Mat3,
    /// Second camera centre in the first camera frame (metric).
    pub translation: Vec3,
    /// Both linear velocities in the first camera frame.
    pub d1: Vec3,
    pub d2: Vec3,
    pub w1: Vec3,
    pub w2: Vec3,
    pub first_row: f64,
    pub readout_time: f64,
}

impl RowPose for CoupledSecondView {
    fn to_camera(&self, x: &Vec3, row: f64) -> Vec3 {
        let s1 = self.first_row * self.readout_time;
        let s2 = row * self.readout_time;
        let p1 = Mat3::identity() + skew(&self.w1) * s1;
        let p2 = Mat3::identity() + skew(&self.w2) * s2;
        let baseline = self.translation - self.d1 * s1 + self.d2 * s2;
        let p1_inv_t = p1
            .transpose()
            .try_inverse()
            .expect("I + s[w]x is always invertible");
        let center = self.d1 * s1 + p1_inv_t * baseline;
        let p2_inv = p2.try_inverse().expect("I + s[w]x is always invertible");
        p2_inv * (self.rotation * (x - center))
    }
}

/// Projects `x` through a rolling-shutter camera by iterating on the exposure
/// row, starting from the row-0 (global-shutter) projection. Returns `None`
/// when the point is behind the camera, leaves the image, or the iteration
/// does not settle.
pub fn project_rs<P: RowPose + ?Sized>(
    x: &Vec3,
    pose: &P,
    k: &CameraIntrinsics,
) -> Option<RsProjection> {
    let mut row = 0.0;
    let mut pixel = k.project(&pose.to_camera(x, row))?;
    let mut settled = false;
    for _ in 0..ROW_MAX_ITERATIONS {
        let next_row = pixel[1];
        if !next_row.is_finite() {
            return None;
        }
        let delta = (next_row - row).abs();
        row = next_row;
        if delta < ROW_TOLERANCE {
            settled = true;
            break;
        }
        pixel = k.project(&pose.to_camera(x, row))?;
    }
    if !settled || !k.contains(&pixel) {
        return None;
    }
    Some(RsProjection {
        pixel,
        row: pixel[1],
    })
}

fn uniform_angle(rng: &mut ChaCha8Rng, max_rad: f64) -> f64 {
    if max_rad > 0.0 {
        rng.random_range(-max_rad..=max_rad)
    } else {
        0.0
    }
}

fn random_orientation(rng: &mut ChaCha8Rng, max_deg: f64) -> Mat3 {
    let m = max_deg.to_radians();
    let a = uniform_angle(rng, m);
    let b = uniform_angle(rng, m);
    let c = uniform_angle(rng, m);
    let rx = Rotation::from_axis_angle(&Vec3::x(), a).to_matrix();
    let ry = Rotation::from_axis_angle(&Vec3::y(), b).to_matrix();
    let rz = Rotation::from_axis_angle(&Vec3::z(), c).to_matrix();
    rx * ry * rz * world_alignment()
}

/// Draws a random two-camera scene. Points are spread uniformly over the
/// first image with Gaussian depth and kept only if the second camera also
/// sees them (global-shutter check), up to 100 tries each.
pub fn generate_scene(cfg: &SceneConfig) -> SyntheticScene {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = &cfg.intrinsics;

    let r1 = random_orientation(&mut rng, cfg.max_orientation_deg);
    let r2 = random_orientation(&mut rng, cfg.max_orientation_deg);
    let nominal = world_alignment().transpose();
    let direction = match cfg.motion {
        MotionType::Forward => nominal * Vec3::z(),
        MotionType::Sideways => nominal * Vec3::x(),
    };
    let length = cfg.baseline * rng.random_range(0.75..1.25);
    let pose1 = CameraPose {
        rotation: r1,
        center: Vec3::zeros(),
    };
    let pose2 = CameraPose {
        rotation: r2,
        center: direction * length,
    };

    let depth = Normal::new(cfg.mean_depth, 0.25 * cfg.mean_depth).expect("finite depth spread");
    let min_depth = 0.25 * cfg.mean_depth;
    let mut points = Vec::with_capacity(cfg.n_points);
    for _ in 0..cfg.n_points {
        for _attempt in 0..100 {
            let u = rng.random_range(0.0..k.width);
            let v = rng.random_range(0.0..k.height);
            let z: f64 = depth.sample(&mut rng).max(min_depth);
            let ray = Vec3::new((u - k.cx) / k.focal, (v - k.cy) / k.focal, 1.0);
            let world = r1.transpose() * (ray * z) + pose1.center;
            let in_second = k
                .project(&pose2.to_camera(&world))
                .is_some_and(|px| k.contains(&px));
            if in_second {
                points.push(world);
                break;
            }
        }
    }

    SyntheticScene {
        points,
        pose1,
        pose2,
        d1: cfg.d1,
        d2: cfg.d2,
        w1: cfg.w1,
        w2: cfg.w2,
        intrinsics: cfg.intrinsics,
        gravity_world: gravity_world(),
    }
}

impl SyntheticScene {
    /// Rotation from the first camera frame to the second.
    pub fn relative_rotation(&self) -> Mat3 {
        self.pose2.rotation * self.pose1.rotation.transpose()
    }

    /// Second camera centre in the first camera frame, in metres.
    pub fn metric_translation(&self) -> Vec3 {
        self.pose1.rotation * (self.pose2.center - self.pose1.center)
    }

    /// Second camera's linear velocity expressed in the first camera frame.
    pub fn d2_in_first_frame(&self) -> Vec3 {
        self.relative_rotation().transpose() * self.d2
    }

    /// Ground-truth solver unknowns with unit translation.
    pub fn ground_truth(&self) -> RelativePoseEstimate {
        RelativePoseEstimate {
            rotation: Rotation::from_matrix(&self.relative_rotation()),
            translation: self.metric_translation(),
            d1: self.d1,
            d2: self.d2_in_first_frame(),
            w1: self.w1,
            w2: self.w2,
        }
        .normalized()
        .expect("cameras are distinct")
    }

    pub fn first_camera(&self) -> ConstantVelocityCamera {
        ConstantVelocityCamera {
            pose: self.pose1,
            linear_velocity: self.d1,
            angular_velocity: self.w1,
            readout_time: self.intrinsics.readout_time,
        }
    }

    /// The second view conditioned on the first view's exposure row.
    pub fn second_view(&self, first_row: f64) -> CoupledSecondView {
        CoupledSecondView {
            rotation: self.relative_rotation(),
            translation: self.metric_translation(),
            d1: self.d1,
            d2: self.d2_in_first_frame(),
            w1: self.w1,
            w2: self.w2,
            first_row,
            readout_time: self.intrinsics.readout_time,
        }
    }

    /// Projects point `i` into both frames.
    pub fn observe_point(&self, i: usize) -> Option<PixelCorrespondence> {
        let k = &self.intrinsics;
        let x = &self.points[i];
        let first = project_rs(x, &self.first_camera(), k)?;
        let x1 = self.pose1.to_camera(x);
        let second = project_rs(&x1, &self.second_view(first.row), k)?;
        Some(PixelCorrespondence {
            p1: first.pixel,
            p2: second.pixel,
            point: i,
        })
    }

    /// Noiseless observations of every point visible in both frames.
    pub fn observe(&self) -> Vec<PixelCorrespondence> {
        (0..self.points.len()).filter_map(|i| self.observe_point(i)).collect()
    }
}

/// Normalizes pixel observations. Each exposure row is the pixel row clamped
/// to the image.
pub fn normalize_all(pixels: &[PixelCorrespondence], k: &CameraIntrinsics) -> Vec<Correspondence> {
    pixels
        .iter()
        .map(|p| {
            let mut p1 = normalize_pixel(p.p1, k).expect("finite pixel");
            let mut p2 = normalize_pixel(p.p2, k).expect("finite pixel");
            p1.row = p1.row.clamp(0.0, k.height);
            p2.row = p2.row.clamp(0.0, k.height);
            Correspondence::new(p1, p2)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NoiseConfig {
    /// Standard deviation of the pixel noise.
    pub pixel_sigma: f64,
    /// Per-axis bound, in degrees, of the gravity direction error.
    pub gravity_angle_deg: f64,
    /// Angle, in degrees, of the angular velocity direction error.
    pub angvel_angle_deg: f64,
    pub seed: u64,
}

/// Rotation from the camera frame to the IMU frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuExtrinsics {
    pub camera_to_imu: Rotation,
}

impl Default for ImuExtrinsics {
    fn default() -> Self {
        Self {
            camera_to_imu: Rotation::identity(),
        }
    }
}

/// Simulated IMU readings for both frames, returned in camera coordinates.
///
/// Gravity and angular velocity are moved into the IMU frame, perturbed
/// there, and brought back through the extrinsics. The gravity error is a
/// rotation whose per-axis components are uniform in
/// `[-gravity_angle, gravity_angle]`, applied in opposite directions in the
/// two frames. The angular velocity error rotates each reading by exactly
/// `angvel_angle` about a random axis.
pub fn synth_imu(
    scene: &SyntheticScene,
    extrinsics: &ImuExtrinsics,
    noise: &NoiseConfig,
) -> (InertialMeasurement, InertialMeasurement) {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed ^ 0x1b3a_55c4_9e37_79b9);
    let to_imu = extrinsics.camera_to_imu.to_matrix();

    let g_bound = noise.gravity_angle_deg.to_radians();
    let g_noise = Vec3::new(
        uniform_angle(&mut rng, g_bound),
        uniform_angle(&mut rng, g_bound),
        uniform_angle(&mut rng, g_bound),
    );
    let g_rot = [
        Rotation::from_scaled_axis(&g_noise).to_matrix(),
        Rotation::from_scaled_axis(&-g_noise).to_matrix(),
    ];

    let w_angle = noise.angvel_angle_deg.to_radians();
    let mut w_rot = || -> Mat3 {
        let axis: [f64; 3] = UnitSphere.sample(&mut rng);
        Rotation::from_axis_angle(&Vec3::from(axis), w_angle).to_matrix()
    };
    let w_rot = [w_rot(), w_rot()];

    let frames = [(&scene.pose1, scene.w1), (&scene.pose2, scene.w2)];
    let mut out = frames.iter().enumerate().map(|(i, (pose, w))| {
        let g_cam = pose.rotation * scene.gravity_world;
        let g_imu = g_rot[i] * (to_imu * g_cam);
        let w_imu = w_rot[i] * (to_imu * w);
        InertialMeasurement::new(to_imu.transpose() * g_imu, to_imu.transpose() * w_imu)
    });
    let first = out.next().expect("two frames");
    let second = out.next().expect("two frames");
    (first, second)
}

/// Adds isotropic Gaussian noise with standard deviation `sigma` pixels to
/// both observations of every correspondence.
pub fn perturb_pixels(pixels: &[PixelCorrespondence], sigma: f64, seed: u64) -> Vec<PixelCorrespondence> {
    if !(sigma > 0.0) {
        return pixels.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let mut jitter = |p: [f64; 2]| [p[0] + normal.sample(&mut rng), p[1] + normal.sample(&mut rng)];
    pixels
        .iter()
        .map(|c| PixelCorrespondence {
            p1: jitter(c.p1),
            p2: jitter(c.p2),
            point: c.point,
        })
        .collect()
}

/// [`perturb_pixels`] followed by [`normalize_all`]; exposure rows follow the
/// noisy pixel rows.
pub fn add_pixel_noise(
    pixels: &[PixelCorrespondence],
    sigma: f64,
    k: &CameraIntrinsics,
    seed: u64,
) -> Vec<Correspondence> {
    normalize_all(&perturb_pixels(pixels, sigma, seed), k)
}

fn pick_outliers(rng: &mut ChaCha8Rng, n: usize, fraction: f64) -> Vec<usize> {
    let count = ((n as f64) * fraction.clamp(0.0, 1.0)).round() as usize;
    let mut picked = index::sample(rng, n, count).into_vec();
    picked.sort_unstable();
    picked
}

fn random_pixel(rng: &mut ChaCha8Rng, k: &CameraIntrinsics) -> [f64; 2] {
    [rng.random_range(0.0..k.width), rng.random_range(0.0..k.height)]
}

/// Replaces a `fraction` of the observations with random pixel pairs.
/// Returns the inlier labels (`true` for untouched observations).
pub fn inject_pixel_outliers(
    pixels: &mut [PixelCorrespondence],
    fraction: f64,
    k: &CameraIntrinsics,
    seed: u64,
) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = vec![true; pixels.len()];
    for i in pick_outliers(&mut rng, pixels.len(), fraction) {
        pixels[i].p1 = random_pixel(&mut rng, k);
        pixels[i].p2 = random_pixel(&mut rng, k);
        labels[i] = false;
    }
    labels
}

/// Normalized-coordinate counterpart of [`inject_pixel_outliers`].
pub fn inject_outliers(
    corrs: &mut [Correspondence],
    fraction: f64,
    k: &CameraIntrinsics,
    seed: u64,
) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = vec![true; corrs.len()];
    for i in pick_outliers(&mut rng, corrs.len(), fraction) {
        let a = random_pixel(&mut rng, k);
        let b = random_pixel(&mut rng, k);
        corrs[i] = Correspondence::new(
            normalize_pixel(a, k).expect("finite pixel"),
            normalize_pixel(b, k).expect("finite pixel"),
        );
        labels[i] = false;
    }
    labels
}
