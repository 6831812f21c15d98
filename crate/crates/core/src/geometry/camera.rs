use log::warn;

use super::Vec3;
use crate::error::{Error, Result};

/// Pinhole intrinsics of a rolling-shutter camera without lens distortion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics {
    /// Focal length in pixels.
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
    /// Seconds between the exposure of consecutive rows.
    pub readout_time: f64,
}

impl CameraIntrinsics {
    pub fn new(focal: f64, cx: f64, cy: f64, width: f64, height: f64, readout_time: f64) -> Result<Self> {
        let k = Self {
            focal,
            cx,
            cy,
            width,
            height,
            readout_time,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.focal, self.cx, self.cy, self.width, self.height, self.readout_time];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("camera intrinsics"));
        }
        if self.focal <= 0.0 {
            return Err(Error::InvalidArgument(format!("focal must be positive, got {}", self.focal)));
        }
        if self.width <= 0.0 || self.height <= 0.0 {
            return Err(Error::InvalidArgument("image size must be positive".into()));
        }
        if self.readout_time < 0.0 {
            return Err(Error::InvalidArgument("readout time must be non-negative".into()));
        }
        Ok(())
    }

    /// Projects a point in camera coordinates to pixels. Returns `None` for
    /// points at or behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<[f64; 2]> {
        if p.z <= 0.0 {
            return None;
        }
        Some([
            self.focal * p.x / p.z + self.cx,
            self.focal * p.y / p.z + self.cy,
        ])
    }

    pub fn contains(&self, px: &[f64; 2]) -> bool {
        px[0] >= 0.0 && px[0] < self.width && px[1] >= 0.0 && px[1] < self.height
    }
}

impl Default for CameraIntrinsics {
    /// 1920x1080 sensor, 640 px focal length, 60 µs row readout.
    fn default() -> Self {
        Self {
            focal: 640.0,
            cx: 960.0,
            cy: 540.0,
            width: 1920.0,
            height: 1080.0,
            readout_time: 60e-6,
        }
    }
}

/// A point in normalized camera coordinates `(x, y, 1)` together with the
/// image row, in pixels from the top, at which it was exposed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizedPoint {
    pub m: Vec3,
    pub row: f64,
}

impl NormalizedPoint {
    pub fn new(x: f64, y: f64, row: f64) -> Self {
        Self {
            m: Vec3::new(x, y, 1.0),
            row,
        }
    }
}

/// Converts a pixel to normalized coordinates; the row index is the pixel's
/// vertical coordinate.
pub fn normalize_pixel(p: [f64; 2], k: &CameraIntrinsics) -> Result<NormalizedPoint> {
    if !p.iter().all(|c| c.is_finite()) {
        return Err(Error::NonFinite("pixel coordinate"));
    }
    if !k.contains(&p) && !(p[1] == k.height && p[0] >= 0.0 && p[0] <= k.width) {
        warn!("pixel ({}, {}) lies outside the image", p[0], p[1]);
    }
    Ok(NormalizedPoint::new(
        (p[0] - k.cx) / k.focal,
        (p[1] - k.cy) / k.focal,
        p[1],
    ))
}

/// Inverse of [`normalize_pixel`].
pub fn denormalize_point(p: &NormalizedPoint, k: &CameraIntrinsics) -> [f64; 2] {
    [p.m.x * k.focal + k.cx, p.m.y * k.focal + k.cy]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn principal_point_maps_to_axis() {
        let k = CameraIntrinsics::default();
        let p = normalize_pixel([k.cx, k.cy], &k).unwrap();
        assert_eq!(p.m, Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(p.row, k.cy);
        let q = normalize_pixel([k.cx + k.focal, k.cy], &k).unwrap();
        assert_eq!(q.m, Vec3::new(1.0, 0.0, 1.0));
    }

    #[test]
    fn normalize_round_trip() {
        let k = CameraIntrinsics::default();
        for &(u, v) in &[(0.0, 0.0), (13.25, 1079.5), (1919.9, 3.3), (960.5, 540.25)] {
            let p = normalize_pixel([u, v], &k).unwrap();
            let back = denormalize_point(&p, &k);
            assert!((back[0] - u).abs() < 1e-12 && (back[1] - v).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_bounds_is_accepted_and_non_finite_rejected() {
        let k = CameraIntrinsics::default();
        assert!(normalize_pixel([-5.0, 2000.0], &k).is_ok());
        assert!(matches!(
            normalize_pixel([f64::NAN, 1.0], &k),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 2.0, 2.0, 0.0).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 1.0, 2.0, 2.0, -1.0).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 1.0, 0.0, 2.0, 0.0).is_err());
        assert!(CameraIntrinsics::new(500.0, 320.0, 240.0, 640.0, 480.0, 3e-5).is_ok());
    }
}
