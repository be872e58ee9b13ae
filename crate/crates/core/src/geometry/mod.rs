//! Rigid-body math, meshes, pinhole projection and rotation distances.
//!
//! Conventions: millimeters everywhere; the camera frame has x right, y down
//! and z forward; pixel centers sit on integer coordinates.

mod camera;
mod cloud;
mod mesh;
mod pose;
mod rotation;
pub mod shapes;
mod symmetry;

pub use camera::CameraIntrinsics;
pub use cloud::{sample_surface_points, PointCloud};
pub use mesh::TriangleMesh;
pub use pose::{Pose, PoseRecord};
pub use rotation::{geodesic_distance, symmetric_geodesic_distance, Rotation};
pub use symmetry::SymmetrySet;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
