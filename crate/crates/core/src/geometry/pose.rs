use serde::{Deserialize, Serialize};

use super::{Mat3, Rotation, Vec3};
use crate::error::{Error, Result};

/// File representation of a pose: row-major rotation matrix plus translation (mm).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl From<&Pose> for PoseRecord {
    fn from(p: &Pose) -> Self {
        Self {
            rotation: p.rotation_rows(),
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl TryFrom<&PoseRecord> for Pose {
    type Error = Error;

    fn try_from(r: &PoseRecord) -> Result<Self> {
        Pose::from_parts(&r.rotation, r.translation)
    }
}

/// Rigid transform from the model frame into the camera frame (mm).
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vec3) -> Result<Self> {
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self {
            rotation: Rotation::identity(),
            translation: t,
        }
    }

    /// Builds a pose from a row-major 3x3 rotation and a translation.
    pub fn from_parts(rotation_rows: &[f64; 9], translation: [f64; 3]) -> Result<Self> {
        let m = Mat3::from_row_slice(rotation_rows);
        Self::new(Rotation::from_matrix(&m)?, Vec3::from(translation))
    }

    /// Nudges the rotation to a fixed point of the matrix round trip so that
    /// `Pose::try_from(&PoseRecord::from(&p)) == p` holds exactly.
    pub fn canonicalized(&self) -> Pose {
        let mut p = *self;
        for _ in 0..16 {
            let rows = p.rotation_rows();
            let m = Mat3::from_row_slice(&rows);
            let Ok(r) = Rotation::from_matrix(&m) else {
                return p;
            };
            if r == p.rotation {
                break;
            }
            p.rotation = r;
        }
        p
    }

    pub fn rotation_rows(&self) -> [f64; 9] {
        let m = self.rotation.matrix();
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 3 + c] = m[(r, c)];
            }
        }
        out
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            rotation: inv,
            translation: -inv.rotate(&self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }
}
