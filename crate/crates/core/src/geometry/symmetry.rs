use std::path::Path;

use super::{Mat3, Rotation};
use crate::error::{Error, Result};

/// Discrete symmetry group of an object; always contains the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetrySet {
    rotations: Vec<Rotation>,
}

impl Default for SymmetrySet {
    fn default() -> Self {
        Self::trivial()
    }
}

impl SymmetrySet {
    pub fn trivial() -> Self {
        Self {
            rotations: vec![Rotation::identity()],
        }
    }

    /// The identity is inserted at the front when missing; duplicates are dropped.
    pub fn new(rotations: impl IntoIterator<Item = Rotation>) -> Self {
        let mut out = vec![Rotation::identity()];
        for r in rotations {
            if !out
                .iter()
                .any(|o| super::geodesic_distance(o, &r) < 1e-9)
            {
                out.push(r);
            }
        }
        Self { rotations: out }
    }

    pub fn rotations(&self) -> &[Rotation] {
        &self.rotations
    }

    /// One rotation per line: either `w x y z` or nine row-major matrix entries.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut rots = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let vals = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::parse(i + 1, format!("bad number {t:?}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            let r = match vals.len() {
                4 => {
                    let norm = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if (norm - 1.0).abs() > 1e-6 {
                        return Err(Error::parse(i + 1, "quaternion is not unit length"));
                    }
                    Rotation::from_wxyz(vals[0], vals[1], vals[2], vals[3])
                }
                9 => Rotation::from_matrix(&Mat3::from_row_slice(&vals)),
                n => return Err(Error::parse(i + 1, format!("expected 4 or 9 values, got {n}"))),
            }
            .map_err(|e| Error::parse(i + 1, e.to_string()))?;
            rots.push(r);
        }
        Ok(Self::new(rots))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        let s = SymmetrySet::from_text("# z flip\n0 0 0 1\n-1 0 0 0 -1 0 0 0 1\n").unwrap();
        // Both lines describe the same 180° turn about z.
        assert_eq!(s.rotations().len(), 2);
        assert_eq!(s.rotations()[0], Rotation::identity());
        assert!(SymmetrySet::from_text("1 2\n").is_err());
        assert!(SymmetrySet::from_text("0.5 0 0 0\n").is_err());
        assert_eq!(SymmetrySet::from_text("").unwrap(), SymmetrySet::trivial());
    }
}
