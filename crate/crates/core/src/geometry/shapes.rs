//! Procedural meshes used by tests, fixtures and the built-in demo object.

use super::{TriangleMesh, Vec3};

fn push_box(vertices: &mut Vec<Vec3>, triangles: &mut Vec<[u32; 3]>, lo: Vec3, hi: Vec3) {
    let base = vertices.len() as u32;
    for i in 0..8u32 {
        vertices.push(Vec3::new(
            if i & 1 == 0 { lo.x } else { hi.x },
            if i & 2 == 0 { lo.y } else { hi.y },
            if i & 4 == 0 { lo.z } else { hi.z },
        ));
    }
    // Outward winding, two triangles per face.
    const FACES: [[u32; 4]; 6] = [
        [0, 2, 3, 1], // z-
        [4, 5, 7, 6], // z+
        [0, 1, 5, 4], // y-
        [2, 6, 7, 3], // y+
        [0, 4, 6, 2], // x-
        [1, 3, 7, 5], // x+
    ];
    for [a, b, c, d] in FACES {
        triangles.push([base + a, base + b, base + c]);
        triangles.push([base + a, base + c, base + d]);
    }
}

fn boxes(parts: &[(Vec3, Vec3)]) -> TriangleMesh {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for &(lo, hi) in parts {
        push_box(&mut vertices, &mut triangles, lo, hi);
    }
    // Origin at the bounding-box center.
    let mut lo = vertices[0];
    let mut hi = vertices[0];
    for v in &vertices {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    let center = (lo + hi) / 2.0;
    for v in &mut vertices {
        *v -= center;
    }
    TriangleMesh::new(vertices, triangles).expect("procedural mesh is valid")
}

/// Axis-aligned box centered at the origin.
pub fn cuboid(sx: f64, sy: f64, sz: f64) -> TriangleMesh {
    let h = Vec3::new(sx, sy, sz) / 2.0;
    boxes(&[(-h, h)])
}

/// Flat rectangle in the model xy-plane, centered at the origin.
pub fn quad(width: f64, height: f64) -> TriangleMesh {
    let (w, h) = (width / 2.0, height / 2.0);
    TriangleMesh::new(
        vec![
            Vec3::new(-w, -h, 0.0),
            Vec3::new(w, -h, 0.0),
            Vec3::new(w, h, 0.0),
            Vec3::new(-w, h, 0.0),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
    )
    .expect("quad is valid")
}

/// Small asymmetric bracket (30 x 26 x 18 mm): a base plate, an upright tab
/// at one end and a side nub. It has no nontrivial rotational symmetry.
pub fn bracket() -> TriangleMesh {
    boxes(&[
        (Vec3::new(-15.0, -10.0, 0.0), Vec3::new(15.0, 10.0, 6.0)),
        (Vec3::new(9.0, -10.0, 6.0), Vec3::new(15.0, 10.0, 18.0)),
        (Vec3::new(-15.0, 10.0, 0.0), Vec3::new(-5.0, 16.0, 6.0)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bracket_is_centered() {
        let m = bracket();
        assert_eq!(m.extents(), Vec3::new(30.0, 26.0, 18.0));
        assert_eq!(m.triangles().len(), 36);
    }
}
