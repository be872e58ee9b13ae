//! Synthetic bin scenes with exact ground truth, and detections derived from
//! the rendered instance map.
//!
//! Placement is layered jitter rather than physics: each instance gets a
//! uniform footprint position and a uniform random rotation, and is dropped
//! onto the floor or onto earlier layers using bounding spheres scaled by an
//! overlap factor. A candidate that collides with an instance of its own
//! layer is rejected; after [`MAX_LAYER_RETRIES`] rejections a new layer is
//! started.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::rle::RleMask;
use crate::geometry::{CameraIntrinsics, Mat3, Pose, PoseRecord, Rotation, TriangleMesh, Vec3};
use crate::render::{
    render_scene, render_single_window, InstanceMap, Rect, RenderConfig, RenderInstance,
    SceneRender,
};
use crate::seed;

pub const MAX_LAYER_RETRIES: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub object_id: String,
    pub instance_count: usize,
    /// Bin interior (x, y, z) in mm; the floor is centered on the world origin.
    pub bin_extents: [f64; 3],
    /// Camera height above the bin floor, mm.
    pub camera_height: [f64; 2],
    /// Half-angle of the cone around the vertical the camera is placed in.
    pub cone_half_angle_deg: f64,
    /// Pairwise bounding-sphere distances are at least this fraction of the radii sum.
    pub overlap_factor: f64,
    /// Gap left between an instance and whatever supports it, mm.
    pub clearance: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            object_id: "bracket".into(),
            instance_count: 30,
            bin_extents: [280.0, 200.0, 150.0],
            camera_height: [270.0, 330.0],
            cone_half_angle_deg: 20.0,
            overlap_factor: 0.6,
            clearance: 0.5,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.camera_height;
        let ok = self.bin_extents.iter().all(|&e| e > 0.0 && e.is_finite())
            && lo > 0.0
            && lo <= hi
            && (0.0..90.0).contains(&self.cone_half_angle_deg)
            && self.overlap_factor > 0.0
            && self.overlap_factor <= 1.0
            && self.clearance >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidValue(format!("invalid scene config {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtInstance {
    pub instance_id: u16,
    pub object_id: String,
    /// Model-to-camera pose.
    pub pose: PoseRecord,
    pub visible_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneGt {
    pub image_id: u32,
    pub intrinsics: CameraIntrinsics,
    /// Camera-to-world pose (world z up, origin at the bin floor center).
    pub camera_to_world: PoseRecord,
    pub instances: Vec<GtInstance>,
}

impl SceneGt {
    pub fn instance(&self, id: u16) -> Option<&GtInstance> {
        self.instances.iter().find(|i| i.instance_id == id)
    }

    pub fn poses(&self) -> Result<Vec<Pose>> {
        self.instances.iter().map(|i| Pose::try_from(&i.pose)).collect()
    }
}

/// Generated scene: ground truth plus its renders.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub gt: SceneGt,
    pub render: SceneRender,
}

/// World-frame placement of one instance.
#[derive(Clone, Copy, Debug)]
struct Placed {
    center: Vec3,
    layer: usize,
}

fn place_instances<R: Rng>(cfg: &SceneConfig, mesh: &TriangleMesh, rng: &mut R) -> Result<Vec<Pose>> {
    let radius = mesh.bounding_radius();
    let [bx, by, bz] = cfg.bin_extents;
    let half_x = (bx / 2.0 - radius).max(0.0);
    let half_y = (by / 2.0 - radius).max(0.0);
    let min_dist = cfg.overlap_factor * 2.0 * radius;

    let mut placed: Vec<Placed> = Vec::with_capacity(cfg.instance_count);
    let mut poses = Vec::with_capacity(cfg.instance_count);
    let mut layer = 0usize;
    let mut failures = 0usize;
    let mut layer_placed = 0usize;
    while poses.len() < cfg.instance_count {
        let rotation = Rotation::random(rng);
        let x = rng.random_range(-half_x..=half_x);
        let y = rng.random_range(-half_y..=half_y);
        let lowest = mesh
            .vertices()
            .iter()
            .map(|v| rotation.rotate(v).z)
            .fold(f64::INFINITY, f64::min);
        let mut z = -lowest + cfg.clearance;
        let mut collides = false;
        for p in &placed {
            let dh = (p.center.x - x).hypot(p.center.y - y);
            if dh >= min_dist {
                continue;
            }
            if p.layer == layer {
                collides = true;
                break;
            }
            z = z.max(p.center.z + (min_dist * min_dist - dh * dh).sqrt());
        }
        if !collides && z <= bz {
            let center = Vec3::new(x, y, z);
            placed.push(Placed { center, layer });
            poses.push(Pose::new(rotation, center)?);
            layer_placed += 1;
            failures = 0;
            continue;
        }
        failures += 1;
        if failures >= MAX_LAYER_RETRIES {
            if layer_placed == 0 {
                return Err(Error::PlacementOverflow {
                    placed: poses.len(),
                    requested: cfg.instance_count,
                });
            }
            layer += 1;
            layer_placed = 0;
            failures = 0;
        }
    }
    Ok(poses)
}

/// Camera-to-world pose looking at the bin floor center from within the cone.
fn sample_camera<R: Rng>(cfg: &SceneConfig, rng: &mut R) -> Result<Pose> {
    let [lo, hi] = cfg.camera_height;
    let height = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let cos_max = cfg.cone_half_angle_deg.to_radians().cos();
    // Uniform over the spherical cap.
    let cos_t = 1.0 - rng.random::<f64>() * (1.0 - cos_max);
    let tan_t = (1.0 - cos_t * cos_t).max(0.0).sqrt() / cos_t;
    let phi = rng.random::<f64>() * std::f64::consts::TAU;
    let yaw = rng.random::<f64>() * std::f64::consts::TAU;
    let position = Vec3::new(height * tan_t * phi.cos(), height * tan_t * phi.sin(), height);
    let forward = (-position).normalize();
    let hint = Vec3::new(-yaw.sin(), -yaw.cos(), 0.0);
    let down = (hint - forward * hint.dot(&forward)).normalize();
    let right = down.cross(&forward);
    // Columns are the camera axes expressed in world coordinates.
    let r = Mat3::from_columns(&[right, down, forward]);
    Pose::new(Rotation::from_matrix(&r)?, position)
}

/// Generates scene `index` of a dataset. The per-scene random stream is
/// derived from `(cfg.seed, index)`.
pub fn generate_scene(
    cfg: &SceneConfig,
    mesh: &TriangleMesh,
    render_cfg: &RenderConfig,
    index: u32,
) -> Result<Scene> {
    cfg.validate()?;
    render_cfg.validate()?;
    if cfg.instance_count > u16::MAX as usize {
        return Err(Error::InvalidValue("too many instances".into()));
    }
    let mut rng = seed::rng(cfg.seed, "scene", index as u64);
    let camera_to_world = sample_camera(cfg, &mut rng)?.canonicalized();
    let world_poses = place_instances(cfg, mesh, &mut rng)?;
    let world_to_camera = camera_to_world.inverse();
    let poses: Vec<Pose> = world_poses
        .iter()
        .map(|p| world_to_camera.compose(p).canonicalized())
        .collect();
    let render = render_poses(mesh, &poses, render_cfg);
    let mut counts = vec![0usize; poses.len() + 1];
    for &id in render.instances.data() {
        counts[id as usize] += 1;
    }
    let instances = poses
        .iter()
        .enumerate()
        .map(|(i, pose)| {
            let solo = render_single_window(mesh, pose, render_cfg).pixel_count();
            let visible_fraction = if solo == 0 {
                0.0
            } else {
                (counts[i + 1] as f64 / solo as f64).min(1.0)
            };
            GtInstance {
                instance_id: (i + 1) as u16,
                object_id: cfg.object_id.clone(),
                pose: PoseRecord::from(pose),
                visible_fraction,
            }
        })
        .collect();
    Ok(Scene {
        gt: SceneGt {
            image_id: index,
            intrinsics: render_cfg.intrinsics,
            camera_to_world: PoseRecord::from(&camera_to_world),
            instances,
        },
        render,
    })
}

/// Renders instances with ids `1..=poses.len()`.
pub fn render_poses(mesh: &TriangleMesh, poses: &[Pose], render_cfg: &RenderConfig) -> SceneRender {
    let instances: Vec<RenderInstance<'_>> = poses
        .iter()
        .enumerate()
        .map(|(i, pose)| RenderInstance {
            mesh,
            pose: *pose,
            id: (i + 1) as u16,
        })
        .collect();
    render_scene(&instances, render_cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: u32,
    pub object_id: String,
    pub score: f64,
    pub bbox: Rect,
    pub mask: RleMask,
    /// Source instance for ground-truth-derived detections.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_id: Option<u16>,
}

impl Detection {
    pub fn validate(&self, width: u32, height: u32) -> Result<()> {
        if self.bbox.w == 0 || self.bbox.h == 0 {
            return Err(Error::ZeroAreaBox);
        }
        if !self.bbox.fits_in(width, height) {
            return Err(Error::InvalidValue(format!("bbox {:?} outside image", self.bbox)));
        }
        if self.mask.width != width || self.mask.height != height {
            return Err(Error::DimensionMismatch {
                expected: format!("{width}x{height}"),
                actual: format!("{}x{}", self.mask.width, self.mask.height),
            });
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::InvalidValue(format!("score {} outside [0, 1]", self.score)));
        }
        self.mask.validate()
    }
}

/// Detections of one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageDetections {
    pub image_id: u32,
    pub width: u32,
    pub height: u32,
    pub detections: Vec<Detection>,
}

impl ImageDetections {
    pub fn validate(&self) -> Result<()> {
        for d in &self.detections {
            if d.image_id != self.image_id {
                return Err(Error::InvalidValue(format!(
                    "detection references image {} inside image {}",
                    d.image_id, self.image_id
                )));
            }
            d.validate(self.width, self.height)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: Self = crate::formats::parse_json(text)?;
        d.validate()?;
        Ok(d)
    }
}

/// Detections over a dataset, one entry per image.
pub type DetectionSet = Vec<ImageDetections>;

/// Optional noise applied to ground-truth detections.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionPerturbation {
    pub seed: u64,
    /// Each box side moves by a uniform integer offset in `[-jitter, jitter]`.
    pub bbox_jitter_px: u32,
    pub dropout_prob: f64,
}

/// One detection per instance whose visible fraction reaches `min_visible`:
/// the box is the tight bound of its pixels in `instance_map`, the mask is
/// exactly those pixels and the score is the visible fraction.
pub fn gt_detections(
    instance_map: &InstanceMap,
    scene: &SceneGt,
    min_visible: f64,
    perturb: Option<&DetectionPerturbation>,
) -> ImageDetections {
    let (width, height) = instance_map.dims();
    let mut rng = perturb.map(|p| seed::rng(p.seed, "detect", scene.image_id as u64));
    let mut detections = Vec::new();
    for inst in &scene.instances {
        let mask = instance_map.mask_of(inst.instance_id);
        let Some(mut bbox) = mask.bounds() else {
            continue;
        };
        if inst.visible_fraction < min_visible {
            continue;
        }
        if let (Some(p), Some(rng)) = (perturb, rng.as_mut()) {
            // Draw both values for every instance so dropout does not shift later jitter.
            let drop = rng.random::<f64>() < p.dropout_prob;
            let j = p.bbox_jitter_px as i64;
            let mut offs = [0i64; 4];
            for o in &mut offs {
                *o = if j > 0 { rng.random_range(-j..=j) } else { 0 };
            }
            if drop {
                continue;
            }
            bbox = jitter_box(bbox, offs, width, height);
        }
        detections.push(Detection {
            image_id: scene.image_id,
            object_id: inst.object_id.clone(),
            score: inst.visible_fraction,
            bbox,
            mask: RleMask::encode(&mask),
            instance_id: Some(inst.instance_id),
        });
    }
    ImageDetections {
        image_id: scene.image_id,
        width,
        height,
        detections,
    }
}

fn jitter_box(b: Rect, offs: [i64; 4], width: u32, height: u32) -> Rect {
    let x0 = (b.x as i64 + offs[0]).clamp(0, width as i64 - 1);
    let y0 = (b.y as i64 + offs[1]).clamp(0, height as i64 - 1);
    let x1 = (b.x as i64 + b.w as i64 - 1 + offs[2]).clamp(x0, width as i64 - 1);
    let y1 = (b.y as i64 + b.h as i64 - 1 + offs[3]).clamp(y0, height as i64 - 1);
    Rect {
        x: x0 as u32,
        y: y0 as u32,
        w: (x1 - x0 + 1) as u32,
        h: (y1 - y0 + 1) as u32,
    }
}
