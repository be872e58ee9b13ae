use std::fmt;

use nalgebra::{Quaternion, Rotation3, Unit, UnitQuaternion};

use super::{Mat3, SymmetrySet, Vec3};
use crate::error::{Error, Result};

/// A 3D rotation stored as a canonical unit quaternion.
///
/// The sign ambiguity of quaternions is resolved by keeping `w >= 0`; when
/// `w == 0` the first nonzero vector component is made positive. Two
/// rotations compare equal iff their canonical quaternions are equal.
#[derive(Clone, Copy, PartialEq)]
pub struct Rotation {
    q: UnitQuaternion<f64>,
}

impl fmt::Debug for Rotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [w, x, y, z] = self.wxyz();
        write!(f, "Rotation(w={w}, x={x}, y={y}, z={z})")
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let c = q.quaternion();
    let flip = if c.w != 0.0 {
        c.w < 0.0
    } else {
        [c.i, c.j, c.k]
            .into_iter()
            .find(|v| *v != 0.0)
            .is_some_and(|v| v < 0.0)
    };
    if flip {
        Unit::new_unchecked(-c)
    } else {
        q
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self {
            q: UnitQuaternion::identity(),
        }
    }

    pub(crate) fn from_unit(q: UnitQuaternion<f64>) -> Self {
        // Renormalize to keep accumulated products on the sphere. Values already
        // within rounding of unit norm are kept bit-for-bit so that text round
        // trips are exact.
        let n = q.quaternion().norm();
        let q = if (n - 1.0).abs() > 1e-14 {
            UnitQuaternion::new_normalize(*q.quaternion())
        } else {
            q
        };
        Self { q: canonical(q) }
    }

    /// Builds a rotation from quaternion components, normalizing them.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(Error::InvalidValue(format!(
                "quaternion ({w}, {x}, {y}, {z}) cannot be normalized"
            )));
        }
        Ok(Self::from_unit(Unit::new_unchecked(q)))
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        match Unit::try_new(*axis, 1e-12) {
            Some(a) => Self::from_unit(UnitQuaternion::from_axis_angle(&a, angle)),
            None => Self::identity(),
        }
    }

    /// Rotation whose axis-angle vector is `v` (angle = |v|).
    pub fn from_scaled_axis(v: &Vec3) -> Self {
        Self::from_unit(UnitQuaternion::from_scaled_axis(*v))
    }

    /// Accepts a matrix that is orthonormal with determinant +1 within `1e-6`.
    pub fn from_matrix(m: &Mat3) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("non-finite rotation matrix".into()));
        }
        let err = (m.transpose() * m - Mat3::identity()).abs().max();
        if err > 1e-6 || (m.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidValue(
                "matrix is not a proper rotation".into(),
            ));
        }
        let r = Rotation3::from_matrix_unchecked(*m);
        Ok(Self::from_unit(UnitQuaternion::from_rotation_matrix(&r)))
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let c = self.q.quaternion();
        [c.w, c.i, c.j, c.k]
    }

    pub fn matrix(&self) -> Mat3 {
        *self.q.to_rotation_matrix().matrix()
    }

    pub fn unit_quaternion(&self) -> UnitQuaternion<f64> {
        self.q
    }

    pub fn inverse(&self) -> Self {
        Self::from_unit(self.q.inverse())
    }

    /// `self * other`: applies `other` first.
    pub fn compose(&self, other: &Rotation) -> Self {
        Self::from_unit(self.q * other.q)
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.q.transform_vector(v)
    }

    /// Uniformly distributed random rotation (Shoemake's subgroup algorithm).
    pub fn random<R: rand::Rng + ?Sized>(rng: &mut R) -> Self {
        let u: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        Self::from_unit_cube(u)
    }

    /// Measure-preserving map from the unit cube onto the rotation group.
    pub fn from_unit_cube(u: [f64; 3]) -> Self {
        use std::f64::consts::TAU;
        let a = (1.0 - u[0]).sqrt();
        let b = u[0].sqrt();
        let (s1, c1) = (TAU * u[1]).sin_cos();
        let (s2, c2) = (TAU * u[2]).sin_cos();
        let q = Quaternion::new(b * c2, a * s1, a * c1, b * s2);
        Self::from_unit(UnitQuaternion::new_normalize(q))
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let [w, x, y, z] = self.wxyz();
        2.0 * (x * x + y * y + z * z).sqrt().atan2(w.abs())
    }
}

/// Angle of `r1^T r2`, in `[0, pi]`.
pub fn geodesic_distance(r1: &Rotation, r2: &Rotation) -> f64 {
    if r1 == r2 {
        return 0.0;
    }
    r1.inverse().compose(r2).angle()
}

/// Minimum geodesic distance between `est` and `gt * s` over all symmetries `s`.
pub fn symmetric_geodesic_distance(est: &Rotation, gt: &Rotation, sym: &SymmetrySet) -> f64 {
    sym.rotations()
        .iter()
        .map(|s| geodesic_distance(est, &gt.compose(s)))
        .fold(f64::INFINITY, f64::min)
}
