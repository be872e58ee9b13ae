use serde::{Deserialize, Serialize};

use super::image::{DepthImage, GrayImage, Image, InstanceMap, Mask, Rect};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, TriangleMesh, Vec3};

/// Sub-pixel precision of the fixed-point rasterizer (bits).
const SUBPIXEL_BITS: u32 = 8;
const SUBPIXEL: i64 = 1 << SUBPIXEL_BITS;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub intrinsics: CameraIntrinsics,
    /// Unit vector pointing toward the light, camera frame.
    pub light_dir: [f64; 3],
    pub near: f64,
    pub far: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        let l = Vec3::new(0.3, -0.4, -1.0).normalize();
        Self {
            intrinsics: CameraIntrinsics::default(),
            light_dir: [l.x, l.y, l.z],
            near: 10.0,
            far: 5000.0,
        }
    }
}

impl RenderConfig {
    pub fn with_intrinsics(intrinsics: CameraIntrinsics) -> Self {
        Self {
            intrinsics,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        let l = Vec3::from(self.light_dir);
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::InvalidValue(format!(
                "clip range must satisfy 0 < near < far (near={}, far={})",
                self.near, self.far
            )));
        }
        if !((l.norm() - 1.0).abs() < 1e-6) {
            return Err(Error::InvalidValue("light direction must be a unit vector".into()));
        }
        Ok(())
    }

    /// Stable textual fingerprint used to tie codebooks to their render setup.
    pub fn fingerprint(&self) -> String {
        let k = &self.intrinsics;
        format!(
            "k={},{},{},{},{}x{};light={},{},{};clip={},{}",
            k.fx,
            k.fy,
            k.cx,
            k.cy,
            k.width,
            k.height,
            self.light_dir[0],
            self.light_dir[1],
            self.light_dir[2],
            self.near,
            self.far
        )
    }
}

/// One object to draw.
#[derive(Clone, Copy, Debug)]
pub struct RenderInstance<'a> {
    pub mesh: &'a TriangleMesh,
    pub pose: Pose,
    /// Must be unique within a scene and > 0.
    pub id: u16,
}

/// Depth, instance ids and Lambertian shading of a scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneRender {
    pub depth: DepthImage,
    pub instances: InstanceMap,
    pub gray: GrayImage,
}

/// Render of a single object restricted to a window of the full frame.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowRender {
    pub width: u32,
    pub height: u32,
    pub rect: Rect,
    /// Row-major over `rect`.
    pub depth: Vec<u16>,
    pub gray: Vec<f32>,
}

impl WindowRender {
    #[inline]
    pub fn depth_at(&self, x: u32, y: u32) -> u16 {
        if self.rect.contains(x, y) {
            self.depth[((y - self.rect.y) * self.rect.w + (x - self.rect.x)) as usize]
        } else {
            0
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.depth.iter().filter(|&&d| d > 0).count()
    }

    /// Tight bounds of the covered pixels, full-frame coordinates.
    pub fn bounds(&self) -> Option<Rect> {
        let mut lo = (u32::MAX, u32::MAX);
        let mut hi = (0, 0);
        let mut any = false;
        for yy in 0..self.rect.h {
            for xx in 0..self.rect.w {
                if self.depth[(yy * self.rect.w + xx) as usize] > 0 {
                    any = true;
                    lo = (lo.0.min(xx), lo.1.min(yy));
                    hi = (hi.0.max(xx), hi.1.max(yy));
                }
            }
        }
        any.then(|| Rect {
            x: self.rect.x + lo.0,
            y: self.rect.y + lo.1,
            w: hi.0 - lo.0 + 1,
            h: hi.1 - lo.1 + 1,
        })
    }

    pub fn to_depth_image(&self) -> DepthImage {
        let mut img = DepthImage::new(self.width, self.height);
        for yy in 0..self.rect.h {
            for xx in 0..self.rect.w {
                let d = self.depth[(yy * self.rect.w + xx) as usize];
                img.set(self.rect.x + xx, self.rect.y + yy, d);
            }
        }
        img
    }

    pub fn to_gray_image(&self) -> GrayImage {
        let mut img = GrayImage::new(self.width, self.height);
        for yy in 0..self.rect.h {
            for xx in 0..self.rect.w {
                let g = self.gray[(yy * self.rect.w + xx) as usize];
                img.set(self.rect.x + xx, self.rect.y + yy, g);
            }
        }
        img
    }
}

/// Z-buffer over a window. The winning candidate at a pixel is the
/// lexicographic minimum of (quantized depth, instance id, depth, triangle),
/// which makes the result independent of drawing order.
struct ZBuffer {
    rect: Rect,
    q: Vec<u16>,
    id: Vec<u16>,
    z: Vec<f64>,
    tri: Vec<u32>,
    shade: Vec<f32>,
}

impl ZBuffer {
    fn new(rect: Rect) -> Self {
        let n = rect.w as usize * rect.h as usize;
        Self {
            rect,
            q: vec![0; n],
            id: vec![0; n],
            z: vec![0.0; n],
            tri: vec![0; n],
            shade: vec![0.0; n],
        }
    }

    #[inline]
    fn offer(&mut self, idx: usize, q: u16, id: u16, z: f64, tri: u32, shade: f32) {
        let cur_q = self.q[idx];
        let better = cur_q == 0
            || (q, id) < (cur_q, self.id[idx])
            || ((q, id) == (cur_q, self.id[idx])
                && (z < self.z[idx] || (z == self.z[idx] && tri < self.tri[idx])));
        if better {
            self.q[idx] = q;
            self.id[idx] = id;
            self.z[idx] = z;
            self.tri[idx] = tri;
            self.shade[idx] = shade;
        }
    }

    fn draw(&mut self, inst: &RenderInstance<'_>, cfg: &RenderConfig) {
        let light = Vec3::from(cfg.light_dir);
        let mesh = inst.mesh;
        for (ti, _) in mesh.triangles().iter().enumerate() {
            let [a, b, c] = mesh.triangle(ti).map(|v| inst.pose.transform_point(&v));
            let mut normal = (b - a).cross(&(c - a));
            let norm = normal.norm();
            let shade = if norm > 0.0 {
                normal /= norm;
                // Face the camera (at the origin).
                if normal.dot(&(a + b + c)) > 0.0 {
                    normal = -normal;
                }
                normal.dot(&light).clamp(0.0, 1.0) as f32
            } else {
                0.0
            };
            let clipped = clip_near([a, b, c], cfg.near);
            for k in 1..clipped.len().saturating_sub(1) {
                self.raster_triangle(
                    [clipped[0], clipped[k], clipped[k + 1]],
                    cfg,
                    inst.id,
                    ti as u32,
                    shade,
                );
            }
        }
    }

    fn raster_triangle(&mut self, tri: [Vec3; 3], cfg: &RenderConfig, id: u16, ti: u32, shade: f32) {
        let k = &cfg.intrinsics;
        let to_fixed = |p: &Vec3| -> (i64, i64) {
            let u = k.cx + k.fx * p.x / p.z;
            let v = k.cy + k.fy * p.y / p.z;
            let lim = (1i64 << 40) as f64;
            (
                (u * SUBPIXEL as f64).round().clamp(-lim, lim) as i64,
                (v * SUBPIXEL as f64).round().clamp(-lim, lim) as i64,
            )
        };
        let mut s = [to_fixed(&tri[0]), to_fixed(&tri[1]), to_fixed(&tri[2])];
        let mut zs = [tri[0].z, tri[1].z, tri[2].z];
        let mut area = edge(s[0], s[1], s[2]);
        if area == 0 {
            return;
        }
        if area < 0 {
            s.swap(1, 2);
            zs.swap(1, 2);
            area = -area;
        }

        let min_x = s.iter().map(|p| p.0).min().unwrap_or(0);
        let max_x = s.iter().map(|p| p.0).max().unwrap_or(0);
        let min_y = s.iter().map(|p| p.1).min().unwrap_or(0);
        let max_y = s.iter().map(|p| p.1).max().unwrap_or(0);
        let r = self.rect;
        let px0 = ceil_div(min_x, SUBPIXEL).max(r.x as i64);
        let px1 = max_x.div_euclid(SUBPIXEL).min(r.x as i64 + r.w as i64 - 1);
        let py0 = ceil_div(min_y, SUBPIXEL).max(r.y as i64);
        let py1 = max_y.div_euclid(SUBPIXEL).min(r.y as i64 + r.h as i64 - 1);
        if px0 > px1 || py0 > py1 {
            return;
        }

        // Edge i is opposite vertex i.
        let edges = [(s[1], s[2]), (s[2], s[0]), (s[0], s[1])];
        let bias: [i128; 3] = edges.map(|(a, b)| if is_top_left(a, b) { 0 } else { -1 });
        let step_x: [i128; 3] = edges.map(|(a, b)| -((b.1 - a.1) as i128) * SUBPIXEL as i128);
        let step_y: [i128; 3] = edges.map(|(a, b)| ((b.0 - a.0) as i128) * SUBPIXEL as i128);
        let p0 = (px0 * SUBPIXEL, py0 * SUBPIXEL);
        let mut row: [i128; 3] = [
            edge(edges[0].0, edges[0].1, p0),
            edge(edges[1].0, edges[1].1, p0),
            edge(edges[2].0, edges[2].1, p0),
        ];
        let inv_area = 1.0 / area as f64;
        let inv_z = [1.0 / zs[0], 1.0 / zs[1], 1.0 / zs[2]];

        for py in py0..=py1 {
            let mut e = row;
            let base = (py - r.y as i64) as usize * r.w as usize;
            for px in px0..=px1 {
                if e[0] + bias[0] >= 0 && e[1] + bias[1] >= 0 && e[2] + bias[2] >= 0 {
                    let b0 = e[0] as f64 * inv_area;
                    let b1 = e[1] as f64 * inv_area;
                    let b2 = e[2] as f64 * inv_area;
                    let z = 1.0 / (b0 * inv_z[0] + b1 * inv_z[1] + b2 * inv_z[2]);
                    if z >= cfg.near && z <= cfg.far {
                        let q = z.round().clamp(1.0, u16::MAX as f64) as u16;
                        let idx = base + (px - r.x as i64) as usize;
                        self.offer(idx, q, id, z, ti, shade);
                    }
                }
                for i in 0..3 {
                    e[i] += step_x[i];
                }
            }
            for i in 0..3 {
                row[i] += step_y[i];
            }
        }
    }
}

#[inline]
fn edge(a: (i64, i64), b: (i64, i64), p: (i64, i64)) -> i128 {
    (b.0 - a.0) as i128 * (p.1 - a.1) as i128 - (b.1 - a.1) as i128 * (p.0 - a.0) as i128
}

/// Top-left rule for positive-area triangles in y-down image coordinates.
#[inline]
fn is_top_left(a: (i64, i64), b: (i64, i64)) -> bool {
    let dx = b.0 - a.0;
    let dy = b.1 - a.1;
    (dy == 0 && dx > 0) || dy < 0
}

#[inline]
fn ceil_div(a: i64, b: i64) -> i64 {
    -((-a).div_euclid(b))
}

/// Clips a triangle against the plane `z = near`, returning a convex polygon.
fn clip_near(tri: [Vec3; 3], near: f64) -> Vec<Vec3> {
    if tri.iter().all(|p| p.z >= near) {
        return tri.to_vec();
    }
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let cur = tri[i];
        let next = tri[(i + 1) % 3];
        let cur_in = cur.z >= near;
        let next_in = next.z >= near;
        if cur_in {
            out.push(cur);
        }
        if cur_in != next_in {
            let t = (near - cur.z) / (next.z - cur.z);
            let mut p = cur + (next - cur) * t;
            p.z = near;
            out.push(p);
        }
    }
    out
}

fn full_rect(k: &CameraIntrinsics) -> Rect {
    Rect {
        x: 0,
        y: 0,
        w: k.width,
        h: k.height,
    }
}

/// Renders all instances with a shared z-buffer.
pub fn render_scene(instances: &[RenderInstance<'_>], cfg: &RenderConfig) -> SceneRender {
    let k = &cfg.intrinsics;
    let mut zb = ZBuffer::new(full_rect(k));
    for inst in instances {
        zb.draw(inst, cfg);
    }
    SceneRender {
        depth: Image::from_vec(k.width, k.height, zb.q).expect("sized buffer"),
        instances: Image::from_vec(k.width, k.height, zb.id).expect("sized buffer"),
        gray: Image::from_vec(k.width, k.height, zb.shade).expect("sized buffer"),
    }
}

/// Pixel window that can contain the projection of `mesh` at `pose`.
fn projected_window(mesh: &TriangleMesh, pose: &Pose, cfg: &RenderConfig) -> Option<Rect> {
    let k = &cfg.intrinsics;
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut min_z = f64::INFINITY;
    for v in mesh.vertices() {
        let p = pose.transform_point(v);
        min_z = min_z.min(p.z);
        if p.z < cfg.near {
            continue;
        }
        let (u, v) = (k.cx + k.fx * p.x / p.z, k.cy + k.fy * p.y / p.z);
        lo = (lo.0.min(u), lo.1.min(v));
        hi = (hi.0.max(u), hi.1.max(v));
    }
    if min_z < cfg.near {
        // Clipped geometry can reach anywhere in the frame.
        return Some(full_rect(k));
    }
    let x0 = (lo.0.floor() - 1.0).max(0.0);
    let y0 = (lo.1.floor() - 1.0).max(0.0);
    let x1 = (hi.0.ceil() + 1.0).min(k.width as f64 - 1.0);
    let y1 = (hi.1.ceil() + 1.0).min(k.height as f64 - 1.0);
    if x0 > x1 || y0 > y1 {
        return None;
    }
    Some(Rect {
        x: x0 as u32,
        y: y0 as u32,
        w: (x1 - x0) as u32 + 1,
        h: (y1 - y0) as u32 + 1,
    })
}

/// Renders one object into the smallest window that holds it.
pub fn render_single_window(mesh: &TriangleMesh, pose: &Pose, cfg: &RenderConfig) -> WindowRender {
    let k = &cfg.intrinsics;
    let Some(rect) = projected_window(mesh, pose, cfg) else {
        return WindowRender {
            width: k.width,
            height: k.height,
            rect: Rect { x: 0, y: 0, w: 0, h: 0 },
            depth: Vec::new(),
            gray: Vec::new(),
        };
    };
    let mut zb = ZBuffer::new(rect);
    zb.draw(
        &RenderInstance {
            mesh,
            pose: *pose,
            id: 1,
        },
        cfg,
    );
    WindowRender {
        width: k.width,
        height: k.height,
        rect,
        depth: zb.q,
        gray: zb.shade,
    }
}

/// Depth of one object alone and its mask (exactly the pixels with depth > 0).
pub fn render_single(mesh: &TriangleMesh, pose: &Pose, cfg: &RenderConfig) -> (DepthImage, Mask) {
    let depth = render_single_window(mesh, pose, cfg).to_depth_image();
    let mask = depth.valid_mask();
    (depth, mask)
}

/// Pixels where the object is rendered (`solo > 0`) and not hidden behind
/// the scene surface by more than `tol` millimeters.
pub fn visibility_mask(solo: &DepthImage, scene: &DepthImage, tol: f64) -> Result<Mask> {
    solo.check_same_dims(scene)?;
    let data = solo
        .data()
        .iter()
        .zip(scene.data())
        .map(|(&s, &d)| s > 0 && (s as f64) <= d as f64 + tol)
        .collect();
    Image::from_vec(solo.width(), solo.height(), data)
}
