use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Pose, TriangleMesh, Vec3};
use crate::error::{Error, Result};

/// A set of 3D points in millimeters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidValue("non-finite point".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, pose: &Pose) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| pose.transform_point(p)).collect(),
        }
    }

    pub fn from_vertices(mesh: &TriangleMesh) -> Self {
        Self {
            points: mesh.vertices().to_vec(),
        }
    }
}

/// Draws `n` points uniformly (area-weighted) from the mesh surface.
pub fn sample_surface_points(mesh: &TriangleMesh, n: usize, seed: u64) -> PointCloud {
    if n == 0 {
        return PointCloud::default();
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles().len());
    let mut total = 0.0;
    for i in 0..mesh.triangles().len() {
        total += mesh.triangle_area(i);
        cumulative.push(total);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let tri = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            cumulative
                .partition_point(|&c| c <= target)
                .min(cumulative.len() - 1)
        } else {
            rng.random_range(0..cumulative.len())
        };
        let [a, b, c] = mesh.triangle(tri);
        let r1 = rng.random::<f64>().sqrt();
        let r2 = rng.random::<f64>();
        points.push(a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2));
    }
    PointCloud { points }
}
