//! Line-oriented correspondence files.
//!
//! ```text
//! # comment
//! META focal 640 cx 960 cy 540 readout 6e-5 height 1080 [width 1920]
//! IMU1 gx gy gz wx wy wz
//! IMU2 gx gy gz wx wy wz
//! CORR u1 v1 u2 v2
//! ```
//!
//! Pixels are in the image of the respective frame. The width defaults to
//! `2 cx` when omitted. Numbers are written in Rust's shortest round-trip
//! form, so writing and reading back reproduces every value exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Correspondence, InertialMeasurement, Vec3};
use crate::sim::{normalize_all, PixelCorrespondence};

#[derive(Clone, Debug, PartialEq)]
pub struct CorrespondenceFile {
    pub intrinsics: CameraIntrinsics,
    pub imu1: InertialMeasurement,
    pub imu2: InertialMeasurement,
    /// `[u1, v1, u2, v2]` per correspondence.
    pub pixels: Vec<[f64; 4]>,
}

impl CorrespondenceFile {
    pub fn from_pixels(
        intrinsics: CameraIntrinsics,
        imu1: InertialMeasurement,
        imu2: InertialMeasurement,
        pixels: &[PixelCorrespondence],
    ) -> Self {
        Self {
            intrinsics,
            imu1,
            imu2,
            pixels: pixels
                .iter()
                .map(|p| [p.p1[0], p.p1[1], p.p2[0], p.p2[1]])
                .collect(),
        }
    }

    pub fn pixel_correspondences(&self) -> Vec<PixelCorrespondence> {
        self.pixels
            .iter()
            .enumerate()
            .map(|(i, p)| PixelCorrespondence {
                p1: [p[0], p[1]],
                p2: [p[2], p[3]],
                point: i,
            })
            .collect()
    }

    /// Normalized correspondences, with the same conversion the simulator
    /// uses.
    pub fn correspondences(&self) -> Vec<Correspondence> {
        normalize_all(&self.pixel_correspondences(), &self.intrinsics)
    }

    pub fn to_text(&self) -> String {
        let k = &self.intrinsics;
        let mut s = String::new();
        writeln!(
            s,
            "META focal {} cx {} cy {} readout {} height {} width {}",
            k.focal, k.cx, k.cy, k.readout_time, k.height, k.width
        )
        .unwrap();
        for (name, imu) in [("IMU1", &self.imu1), ("IMU2", &self.imu2)] {
            let g = imu.gravity.unwrap_or_else(Vec3::zeros);
            let w = imu.angular_velocity.unwrap_or_else(Vec3::zeros);
            writeln!(s, "{name} {} {} {} {} {} {}", g.x, g.y, g.z, w.x, w.y, w.z).unwrap();
        }
        for p in &self.pixels {
            writeln!(s, "CORR {} {} {} {}", p[0], p[1], p[2], p[3]).unwrap();
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        parse(&fs::read_to_string(path)?)
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn numbers(line: usize, fields: &[&str], expected: usize, what: &str) -> Result<Vec<f64>> {
    if fields.len() != expected {
        return Err(parse_err(
            line,
            format!("{what} takes {expected} numbers, found {}", fields.len()),
        ));
    }
    fields
        .iter()
        .map(|f| {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(line, format!("'{f}' is not a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(line, format!("'{f}' is not finite")))
            }
        })
        .collect()
}

fn parse_meta(line: usize, fields: &[&str]) -> Result<CameraIntrinsics> {
    if fields.len() % 2 != 0 {
        return Err(parse_err(line, "META expects key/value pairs"));
    }
    let (mut focal, mut cx, mut cy, mut readout, mut height, mut width) = (None, None, None, None, None, None);
    for pair in fields.chunks(2) {
        let v = numbers(line, &pair[1..], 1, pair[0])?[0];
        let slot = match pair[0] {
            "focal" => &mut focal,
            "cx" => &mut cx,
            "cy" => &mut cy,
            "readout" => &mut readout,
            "height" => &mut height,
            "width" => &mut width,
            other => return Err(parse_err(line, format!("unknown META key '{other}'"))),
        };
        if slot.replace(v).is_some() {
            return Err(parse_err(line, format!("duplicate META key '{}'", pair[0])));
        }
    }
    let need = |v: Option<f64>, key: &str| v.ok_or_else(|| parse_err(line, format!("META is missing '{key}'")));
    let cx = need(cx, "cx")?;
    let k = CameraIntrinsics {
        focal: need(focal, "focal")?,
        cx,
        cy: need(cy, "cy")?,
        width: width.unwrap_or(2.0 * cx),
        height: need(height, "height")?,
        readout_time: need(readout, "readout")?,
    };
    k.validate().map_err(|e| parse_err(line, e.to_string()))?;
    Ok(k)
}

pub fn parse(text: &str) -> Result<CorrespondenceFile> {
    let mut intrinsics = None;
    let mut imus: Vec<InertialMeasurement> = Vec::new();
    let mut pixels = Vec::new();
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        let (tag, rest) = (fields[0], &fields[1..]);
        let expected = match (intrinsics.is_some(), imus.len()) {
            (false, _) => "META",
            (true, 0) => "IMU1",
            (true, 1) => "IMU2",
            _ => "CORR",
        };
        if tag != expected {
            return Err(parse_err(line, format!("expected {expected} line, found '{tag}'")));
        }
        match tag {
            "META" => intrinsics = Some(parse_meta(line, rest)?),
            "IMU1" | "IMU2" => {
                let v = numbers(line, rest, 6, tag)?;
                imus.push(InertialMeasurement::new(
                    Vec3::new(v[0], v[1], v[2]),
                    Vec3::new(v[3], v[4], v[5]),
                ));
            }
            _ => {
                let v = numbers(line, rest, 4, "CORR")?;
                pixels.push([v[0], v[1], v[2], v[3]]);
            }
        }
    }

    let next = last_line + 1;
    let intrinsics = intrinsics.ok_or_else(|| parse_err(next, "missing META line"))?;
    if imus.len() < 2 {
        let which = if imus.is_empty() { "IMU1" } else { "IMU2" };
        return Err(parse_err(next, format!("missing {which} line")));
    }
    Ok(CorrespondenceFile {
        intrinsics,
        imu1: imus[0],
        imu2: imus[1],
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# two frames
META focal 640 cx 960 cy 540 readout 6e-5 height 1080
IMU1 0 9.81 0 0.1 0.2 0.3   # level
IMU2 0.1 9.8 0 -0.1 -0.2 -0.3

CORR 100 200 110.5 199.25
CORR 1000 20 990 30
";

    #[test]
    fn parses_sample() {
        let f = parse(SAMPLE).unwrap();
        assert_eq!(f.intrinsics.width, 1920.0);
        assert_eq!(f.intrinsics.readout_time, 6e-5);
        assert_eq!(f.imu1.gravity, Some(Vec3::new(0.0, 9.81, 0.0)));
        assert_eq!(f.imu2.angular_velocity, Some(Vec3::new(-0.1, -0.2, -0.3)));
        assert_eq!(f.pixels, vec![[100.0, 200.0, 110.5, 199.25], [1000.0, 20.0, 990.0, 30.0]]);
        let c = f.correspondences();
        assert_eq!(c[0].p1.row, 200.0);
        assert_eq!(c[0].p2.m.x, (110.5 - 960.0) / 640.0);
    }

    #[test]
    fn round_trip_is_exact() {
        let mut f = parse(SAMPLE).unwrap();
        f.pixels.push([0.1 + 0.2, 1.0 / 3.0, 1e-300, 1079.999_999_999_9]);
        f.imu1.gravity = Some(Vec3::new(0.123_456_789_012_345_67, 9.7, -0.3));
        let back = parse(&f.to_text()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn missing_imu2_names_the_line() {
        let text = "META focal 640 cx 960 cy 540 readout 6e-5 height 1080\nIMU1 0 9.81 0 0 0 0\nCORR 1 2 3 4\n";
        match parse(text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("IMU2"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let text = "META focal 640 cx 960 cy 540 readout 6e-5 height 1080\nIMU1 0 9.81 0 0 0 0\n";
        assert!(matches!(parse(text), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn malformed_lines() {
        let bad_number = SAMPLE.replace("CORR 1000 20", "CORR 1000 x");
        assert!(matches!(parse(&bad_number), Err(Error::Parse { line: 7, .. })));
        let short = SAMPLE.replace("IMU1 0 9.81 0 0.1 0.2 0.3", "IMU1 0 9.81 0");
        assert!(matches!(parse(&short), Err(Error::Parse { line: 3, .. })));
        let no_focal = SAMPLE.replace("focal 640 ", "");
        assert!(matches!(parse(&no_focal), Err(Error::Parse { line: 2, .. })));
        let bad_key = SAMPLE.replace("height", "rows");
        assert!(matches!(parse(&bad_key), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse(""), Err(Error::Parse { line: 1, .. })));
        let nan = SAMPLE.replace("110.5", "NaN");
        assert!(matches!(parse(&nan), Err(Error::Parse { line: 6, .. })));
    }
}
