use std::fmt::Write as _;
use std::path::Path;

use super::Vec3;
use crate::error::{Error, Result};

/// Triangle mesh in the model frame (mm) with cached diameter, centroid and
/// axis-aligned extents.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    diameter: f64,
    centroid: Vec3,
    bbox_min: Vec3,
    bbox_max: Vec3,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        if vertices.is_empty() || triangles.is_empty() {
            return Err(Error::EmptyMesh);
        }
        if vertices.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidValue("non-finite vertex".into()));
        }
        for t in &triangles {
            for &i in t {
                if i as usize >= vertices.len() {
                    return Err(Error::IndexOutOfRange {
                        index: i as usize,
                        count: vertices.len(),
                    });
                }
            }
        }
        let diameter = brute_force_diameter(&vertices);
        if !(diameter > 0.0) {
            return Err(Error::DegenerateMesh("zero diameter".into()));
        }
        let mut bbox_min = vertices[0];
        let mut bbox_max = vertices[0];
        for v in &vertices {
            bbox_min = bbox_min.inf(v);
            bbox_max = bbox_max.sup(v);
        }
        let mut mesh = Self {
            vertices,
            triangles,
            diameter,
            centroid: Vec3::zeros(),
            bbox_min,
            bbox_max,
        };
        mesh.centroid = mesh.surface_centroid();
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Area-weighted surface centroid (vertex mean when all faces are degenerate).
    pub fn centroid(&self) -> Vec3 {
        self.centroid
    }

    pub fn extents(&self) -> Vec3 {
        self.bbox_max - self.bbox_min
    }

    /// Radius of the smallest origin-centered sphere containing every vertex.
    pub fn bounding_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[i];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(i);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    fn surface_centroid(&self) -> Vec3 {
        let mut total = 0.0;
        let mut acc = Vec3::zeros();
        for i in 0..self.triangles.len() {
            let area = self.triangle_area(i);
            let [a, b, c] = self.triangle(i);
            acc += (a + b + c) * (area / 3.0);
            total += area;
        }
        if total > 0.0 {
            acc / total
        } else {
            self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
        }
    }

    /// Parses the `v`/`f` text mesh subset: `v x y z` and `f a b c` with
    /// 1-based indices. Comments start with `#`.
    pub fn from_obj_str(text: &str) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let mut tokens = line.split_whitespace();
            match tokens.next() {
                Some("v") => {
                    let coords: Vec<&str> = tokens.collect();
                    if coords.len() != 3 {
                        return Err(Error::parse(line_no, "vertex needs 3 coordinates"));
                    }
                    let mut v = [0.0; 3];
                    for (slot, tok) in v.iter_mut().zip(&coords) {
                        *slot = tok
                            .parse::<f64>()
                            .ok()
                            .filter(|x| x.is_finite())
                            .ok_or_else(|| Error::parse(line_no, format!("bad coordinate {tok:?}")))?;
                    }
                    vertices.push(Vec3::from(v));
                }
                Some("f") => {
                    let idx: Vec<&str> = tokens.collect();
                    if idx.len() != 3 {
                        return Err(Error::NonTriangularFace { line: line_no });
                    }
                    let mut t = [0u32; 3];
                    for (slot, tok) in t.iter_mut().zip(&idx) {
                        let one_based: u64 = tok
                            .parse()
                            .map_err(|_| Error::parse(line_no, format!("bad index {tok:?}")))?;
                        if one_based == 0 || one_based > u32::MAX as u64 {
                            return Err(Error::IndexOutOfRange {
                                index: one_based as usize,
                                count: vertices.len(),
                            });
                        }
                        *slot = (one_based - 1) as u32;
                    }
                    triangles.push(t);
                }
                Some(other) => {
                    return Err(Error::parse(line_no, format!("unsupported keyword {other:?}")))
                }
                None => {}
            }
        }
        Self::new(vertices, triangles)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_obj_str(&text)
    }

    pub fn to_obj_string(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }
}

/// Maximum pairwise vertex distance by exhaustive search.
pub(crate) fn brute_force_diameter(vertices: &[Vec3]) -> f64 {
    let mut best_sq = 0.0f64;
    for (i, a) in vertices.iter().enumerate() {
        for b in &vertices[i + 1..] {
            best_sq = best_sq.max((a - b).norm_squared());
        }
    }
    best_sq.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn right_triangle_diameter() {
        let m = TriangleMesh::from_obj_str("v 0 0 0\nv 3 0 0\nv 0 4 0\nf 1 2 3\n").unwrap();
        assert_eq!(m.diameter(), 5.0);
    }

    #[test]
    fn cube_diameter() {
        let m = crate::geometry::shapes::cuboid(10.0, 10.0, 10.0);
        assert!((m.diameter() - 10.0 * 3f64.sqrt()).abs() < 1e-12);
        assert!((m.diameter() - 17.3205).abs() < 1e-4);
        assert!(m.centroid().norm() < 1e-12);
    }

    #[test]
    fn parse_errors() {
        let quad = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        assert!(matches!(
            TriangleMesh::from_obj_str(quad),
            Err(Error::NonTriangularFace { line: 5 })
        ));
        assert!(matches!(
            TriangleMesh::from_obj_str("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n"),
            Err(Error::IndexOutOfRange { index: 3, count: 3 })
        ));
        assert!(matches!(TriangleMesh::from_obj_str("# nothing\n"), Err(Error::EmptyMesh)));
        assert!(matches!(
            TriangleMesh::from_obj_str("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n"),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(TriangleMesh::from_obj_str("vt 0 0\n").is_err());
        assert!(TriangleMesh::from_obj_str("v 0 0 nan\nv 1 0 0\nv 0 1 0\nf 1 2 3").is_err());
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            TriangleMesh::load(Path::new("/nonexistent/mesh.obj")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn obj_round_trip() {
        let m = crate::geometry::shapes::bracket();
        let back = TriangleMesh::from_obj_str(&m.to_obj_string()).unwrap();
        assert_eq!(back, m);
    }
}
