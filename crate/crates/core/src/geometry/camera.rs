use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};

/// Pinhole intrinsics. Pixel `(u, v)` has its center at integer coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            fx: 600.0,
            fy: 600.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
        }
    }
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx.is_finite()
            && self.fy.is_finite()
            && self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cy >= 0.0
            && self.cx < self.width as f64
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidValue(format!("invalid intrinsics {self:?}")))
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// `u = cx + fx x / z`, `v = cy + fy y / z`.
    pub fn project(&self, p: &Vec3) -> Result<(f64, f64)> {
        if !(p.z > 0.0) {
            return Err(Error::BehindCamera(p.z));
        }
        Ok((self.cx + self.fx * p.x / p.z, self.cy + self.fy * p.y / p.z))
    }

    pub fn back_project(&self, u: f64, v: f64, z: f64) -> Result<Vec3> {
        if !(z > 0.0) {
            return Err(Error::BehindCamera(z));
        }
        Ok(Vec3::new(
            (u - self.cx) * z / self.fx,
            (v - self.cy) * z / self.fy,
            z,
        ))
    }

    /// Key-value text form, one `key value` pair per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("fx", self.fx),
            ("fy", self.fy),
            ("cx", self.cx),
            ("cy", self.cy),
        ] {
            let _ = writeln!(s, "{k} {v}");
        }
        let _ = writeln!(s, "width {}", self.width);
        let _ = writeln!(s, "height {}", self.height);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut vals: [Option<f64>; 4] = [None; 4];
        let mut dims: [Option<u32>; 2] = [None; 2];
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let key = it.next().unwrap_or_default();
            let val = it
                .next()
                .ok_or_else(|| Error::parse(i + 1, format!("missing value for {key}")))?;
            if it.next().is_some() {
                return Err(Error::parse(i + 1, "trailing tokens"));
            }
            let slot = match key {
                "fx" => 0,
                "fy" => 1,
                "cx" => 2,
                "cy" => 3,
                "width" | "height" => {
                    let d: u32 = val
                        .parse()
                        .map_err(|_| Error::parse(i + 1, format!("bad integer {val:?}")))?;
                    dims[usize::from(key == "height")] = Some(d);
                    continue;
                }
                other => return Err(Error::parse(i + 1, format!("unknown key {other:?}"))),
            };
            let f: f64 = val
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("bad number {val:?}")))?;
            vals[slot] = Some(f);
        }
        let get = |o: Option<f64>, name: &str| {
            o.ok_or_else(|| Error::Format(format!("camera file missing {name}")))
        };
        let width = dims[0].ok_or_else(|| Error::Format("camera file missing width".into()))?;
        let height = dims[1].ok_or_else(|| Error::Format("camera file missing height".into()))?;
        Self::new(
            get(vals[0], "fx")?,
            get(vals[1], "fy")?,
            get(vals[2], "cx")?,
            get(vals[3], "cy")?,
            width,
            height,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn project_examples() {
        let k = CameraIntrinsics::default();
        assert_eq!(k.project(&Vec3::new(0.0, 0.0, 300.0)).unwrap(), (320.0, 240.0));
        assert_eq!(k.project(&Vec3::new(30.0, 0.0, 300.0)).unwrap(), (380.0, 240.0));
        assert!(matches!(
            k.project(&Vec3::new(0.0, 0.0, -1.0)),
            Err(Error::BehindCamera(_))
        ));
    }

    #[test]
    fn back_project_examples() {
        let k = CameraIntrinsics::default();
        assert_eq!(k.back_project(320.0, 240.0, 300.0).unwrap(), Vec3::new(0.0, 0.0, 300.0));
        let p = k.back_project(380.0, 240.0, 300.0).unwrap();
        assert!((p - Vec3::new(30.0, 0.0, 300.0)).norm() < 1e-12);
        assert!(k.back_project(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn invalid_intrinsics() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 10.0, 1.0, 10, 10).is_err());
    }

    #[test]
    fn text_round_trip() {
        let k = CameraIntrinsics::new(612.5, 611.0, 319.5, 239.25, 640, 480).unwrap();
        assert_eq!(CameraIntrinsics::from_text(&k.to_text()).unwrap(), k);
        assert!(CameraIntrinsics::from_text("fx 1\n").is_err());
        assert!(CameraIntrinsics::from_text("bogus 1\n").is_err());
    }
}
