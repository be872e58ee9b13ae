//! Depth-based ranking of pose hypotheses and point-to-point ICP.
//!
//! The depth error of an estimate compares the observed depth `Ω` with the
//! depth `Ω̄` rendered at the estimated pose. Only pixels inside the detection
//! mask (A¹), where both depths are valid and closer than the margin (A²), and
//! where the object is rendered (A³) contribute.

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sample_surface_points, CameraIntrinsics, PointCloud, Pose, Rotation, TriangleMesh, Vec3};
use crate::pipeline::PoseEstimate;
use crate::render::{render_single_window, DepthImage, Mask, RenderConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorVariant {
    Mean,
    Sum,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Margin `m`, mm.
    pub margin: f64,
    /// Minimum coverage `|𝒜| / |A³|` to stay qualified.
    pub min_coverage: f64,
    pub variant: ErrorVariant,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            margin: 5.0,
            min_coverage: 0.3,
            variant: ErrorVariant::Mean,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::InvalidValue(format!("margin must be > 0, got {}", self.margin)));
        }
        if !(0.0..=1.0).contains(&self.min_coverage) {
            return Err(Error::InvalidValue(format!(
                "minimum coverage must be in [0, 1], got {}",
                self.min_coverage
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionScore {
    pub e_sum: f64,
    pub n_intersection: u64,
    pub n_rendered: u64,
    pub mean_error: f64,
    pub coverage: f64,
    pub disqualified: bool,
}

impl SelectionScore {
    fn from_counts(e_sum: f64, n_intersection: u64, n_rendered: u64, cfg: &SelectionConfig) -> Self {
        let mean_error = if n_intersection == 0 { 0.0 } else { e_sum / n_intersection as f64 };
        let coverage = if n_rendered == 0 { 0.0 } else { n_intersection as f64 / n_rendered as f64 };
        Self {
            e_sum,
            n_intersection,
            n_rendered,
            mean_error,
            coverage,
            disqualified: n_rendered == 0 || coverage < cfg.min_coverage,
        }
    }

    pub fn key(&self, variant: ErrorVariant) -> f64 {
        match variant {
            ErrorVariant::Mean => self.mean_error,
            ErrorVariant::Sum => self.e_sum,
        }
    }
}

#[derive(Default)]
struct Accum {
    e_sum: f64,
    n_intersection: u64,
    n_rendered: u64,
}

impl Accum {
    #[inline]
    fn add(&mut self, obs: u16, rendered: u16, in_det: bool, margin: f64) {
        if rendered == 0 {
            return;
        }
        self.n_rendered += 1;
        if !in_det || obs == 0 {
            return;
        }
        let diff = (obs as f64 - rendered as f64).abs();
        if diff < margin {
            self.e_sum += diff;
            self.n_intersection += 1;
        }
    }
}

/// Depth error of a rendered depth map `rendered` (Ω̄, zero where the object
/// is absent) against the observation `obs` (Ω) inside the detection mask.
pub fn score_depth_maps(obs: &DepthImage, rendered: &DepthImage, det_mask: &Mask, cfg: &SelectionConfig) -> Result<SelectionScore> {
    cfg.validate()?;
    obs.check_same_dims(rendered)?;
    obs.check_same_dims(det_mask)?;
    let mut acc = Accum::default();
    for ((&o, &r), &m) in obs.data().iter().zip(rendered.data()).zip(det_mask.data()) {
        acc.add(o, r, m, cfg.margin);
    }
    Ok(SelectionScore::from_counts(acc.e_sum, acc.n_intersection, acc.n_rendered, cfg))
}

/// Renders the object alone at `pose` and scores it with [`score_depth_maps`].
pub fn depth_error(
    obs: &DepthImage,
    pose: &Pose,
    mesh: &TriangleMesh,
    det_mask: &Mask,
    render_cfg: &RenderConfig,
    cfg: &SelectionConfig,
) -> Result<SelectionScore> {
    cfg.validate()?;
    obs.check_same_dims(det_mask)?;
    let k = &render_cfg.intrinsics;
    if obs.dims() != (k.width, k.height) {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", k.width, k.height),
            actual: format!("{}x{}", obs.width(), obs.height()),
        });
    }
    let win = render_single_window(mesh, pose, render_cfg);
    let mut acc = Accum::default();
    for yy in 0..win.rect.h {
        for xx in 0..win.rect.w {
            let (x, y) = (win.rect.x + xx, win.rect.y + yy);
            let r = win.depth[(yy * win.rect.w + xx) as usize];
            acc.add(obs.get(x, y), r, det_mask.get(x, y), cfg.margin);
        }
    }
    Ok(SelectionScore::from_counts(acc.e_sum, acc.n_intersection, acc.n_rendered, cfg))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortMethod {
    DetectorScore,
    Cosine,
    DepthError,
}

impl SortMethod {
    pub const ALL: [SortMethod; 3] = [SortMethod::DetectorScore, SortMethod::Cosine, SortMethod::DepthError];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::DetectorScore => "detector_score",
            Self::Cosine => "cosine",
            Self::DepthError => "depth_error",
        }
    }
}

/// An estimate with its depth score, if computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredEstimate {
    pub estimate: PoseEstimate,
    pub selection: Option<SelectionScore>,
}

/// Indices into `items` of the top `k` estimates under `method`.
pub fn select_top_k(items: &[ScoredEstimate], method: SortMethod, variant: ErrorVariant, k: usize) -> Result<Vec<usize>> {
    if k < 1 {
        return Err(Error::InvalidValue("k must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    match method {
        SortMethod::DetectorScore => order.sort_by(|&a, &b| {
            let (ea, eb) = (&items[a].estimate, &items[b].estimate);
            eb.score.total_cmp(&ea.score).then(ea.detection_index.cmp(&eb.detection_index))
        }),
        SortMethod::Cosine => order.sort_by(|&a, &b| {
            let (ea, eb) = (&items[a].estimate, &items[b].estimate);
            eb.similarity
                .total_cmp(&ea.similarity)
                .then(ea.detection_index.cmp(&eb.detection_index))
        }),
        SortMethod::DepthError => {
            if let Some(i) = items.iter().position(|s| s.selection.is_none()) {
                return Err(Error::InvalidValue(format!(
                    "estimate {} has no depth score",
                    items[i].estimate.detection_index
                )));
            }
            order.sort_by(|&a, &b| {
                let (sa, sb) = (items[a].selection.unwrap(), items[b].selection.unwrap());
                let by_score = match (sa.disqualified, sb.disqualified) {
                    (false, false) => sa.key(variant).total_cmp(&sb.key(variant)),
                    (true, true) => sb.coverage.total_cmp(&sa.coverage),
                    (da, db) => da.cmp(&db),
                };
                by_score.then(items[a].estimate.detection_index.cmp(&items[b].estimate.detection_index))
            });
        }
    }
    order.truncate(k);
    Ok(order)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpConfig {
    pub max_iterations: u32,
    /// Stop once no model sample point moves farther than this, mm.
    pub tolerance: f64,
    pub max_correspondence: f64,
    pub model_points: usize,
    /// Observation points kept, by uniform stride; 0 keeps all.
    pub observation_points: usize,
    pub seed: u64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 30,
            tolerance: 1e-4,
            max_correspondence: 10.0,
            model_points: 1000,
            observation_points: 2000,
            seed: 0,
        }
    }
}

impl IcpConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iterations > 0
            && self.tolerance > 0.0
            && self.max_correspondence > 0.0
            && self.max_correspondence.is_finite()
            && self.model_points > 0;
        if !ok {
            return Err(Error::InvalidValue(format!("invalid ICP config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcpStatus {
    Converged,
    MaxIterations,
    NoCorrespondences,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    #[serde(skip)]
    pub pose: Pose,
    /// Truncated RMS residual `sqrt(mean(min(d², dmax²)))` over the
    /// observation, mm.
    pub rms: f64,
    pub iterations: u32,
    /// Residual at the initial pose followed by the residual after each
    /// accepted update.
    pub history: Vec<f64>,
    pub status: IcpStatus,
}

/// Camera-frame points of the valid depth pixels inside `mask`.
pub fn observation_cloud(depth: &DepthImage, mask: &Mask, k: &CameraIntrinsics) -> Result<PointCloud> {
    depth.check_same_dims(mask)?;
    let mut pts = Vec::new();
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            let d = depth.get(x, y);
            if d > 0 && mask.get(x, y) {
                pts.push(k.back_project(x as f64, y as f64, d as f64)?);
            }
        }
    }
    PointCloud::new(pts)
}

/// Model-side state shared by ICP runs on the same mesh.
pub struct IcpModel {
    points: Vec<Vec3>,
    tree: ImmutableKdTree<f64, 3>,
}

impl IcpModel {
    pub fn new(mesh: &TriangleMesh, cfg: &IcpConfig) -> Result<Self> {
        cfg.validate()?;
        Self::from_cloud(&sample_surface_points(mesh, cfg.model_points, cfg.seed))
    }

    pub fn from_cloud(cloud: &PointCloud) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let points = cloud.points().to_vec();
        let coords: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let tree = ImmutableKdTree::new_from_slice(&coords).map_err(|e| Error::InvalidValue(format!("kd-tree: {e:?}")))?;
        Ok(Self { points, tree })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    fn nearest(&self, p: &Vec3) -> (usize, f64) {
        let r = self.tree.query(&[p.x, p.y, p.z]).nearest_one::<SquaredEuclidean<f64>>().execute();
        (r.item as usize, r.distance)
    }

    /// Nearest-neighbour pairs `(obs index, model index)` within `dmax` and
    /// the truncated residual at `pose`.
    fn correspond(&self, obs: &[Vec3], pose: &Pose, dmax: f64) -> (Vec<(usize, usize)>, f64) {
        let inv = pose.inverse();
        let d2max = dmax * dmax;
        let found: Vec<(usize, f64)> = obs.iter().map(|o| self.nearest(&inv.transform_point(o))).collect();
        let mut pairs = Vec::new();
        let mut cost = 0.0;
        for (i, &(m, d2)) in found.iter().enumerate() {
            if d2 < d2max {
                pairs.push((i, m));
                cost += d2;
            } else {
                cost += d2max;
            }
        }
        (pairs, (cost / obs.len() as f64).sqrt())
    }
}

/// Rigid transform `(R, t)` minimizing `Σ |R a_i + t - b_i|²`.
pub fn rigid_align(a: &[Vec3], b: &[Vec3]) -> Result<Pose> {
    if a.len() != b.len() || a.len() < 3 {
        return Err(Error::InvalidValue("alignment needs at least 3 paired points".into()));
    }
    let n = a.len() as f64;
    let ca = a.iter().sum::<Vec3>() / n;
    let cb = b.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for (p, q) in a.iter().zip(b) {
        h += (p - ca) * (q - cb).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose();
    let rot = Rotation::from_matrix(&r)?;
    Pose::new(rot, cb - rot.rotate(&ca))
}

/// At most `max` points (all when `max` is 0) taken at a uniform stride.
fn strided(pts: &[Vec3], max: usize) -> Vec<Vec3> {
    if max == 0 || pts.len() <= max {
        return pts.to_vec();
    }
    (0..max).map(|i| pts[i * pts.len() / max]).collect()
}

/// Point-to-point ICP of the model onto `obs` (camera frame) from `init`.
///
/// An update that moves no model point by `tolerance` or more, or that does
/// not lower the truncated residual, is discarded and ends the run, so
/// `history` is strictly decreasing.
pub fn icp_refine_with(model: &IcpModel, obs: &PointCloud, init: &Pose, cfg: &IcpConfig) -> Result<IcpResult> {
    cfg.validate()?;
    if obs.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let pts = &strided(obs.points(), cfg.observation_points);
    let dmax = cfg.max_correspondence;
    let mut pose = *init;
    let (mut pairs, mut rms) = model.correspond(pts, &pose, dmax);
    let mut history = vec![rms];
    if pairs.len() < 3 {
        return Ok(IcpResult {
            pose,
            rms,
            iterations: 0,
            history,
            status: IcpStatus::NoCorrespondences,
        });
    }
    let mut status = IcpStatus::MaxIterations;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let a: Vec<Vec3> = pairs.iter().map(|&(_, m)| model.points[m]).collect();
        let b: Vec<Vec3> = pairs.iter().map(|&(o, _)| pts[o]).collect();
        let next = rigid_align(&a, &b)?;
        let moved = model
            .points
            .iter()
            .map(|p| (next.transform_point(p) - pose.transform_point(p)).norm())
            .fold(0.0, f64::max);
        if moved < cfg.tolerance {
            status = IcpStatus::Converged;
            break;
        }
        let (next_pairs, next_rms) = model.correspond(pts, &next, dmax);
        if next_rms >= rms {
            status = IcpStatus::Converged;
            break;
        }
        pose = next;
        rms = next_rms;
        history.push(rms);
        pairs = next_pairs;
        if pairs.len() < 3 {
            status = IcpStatus::NoCorrespondences;
            break;
        }
    }
    Ok(IcpResult {
        pose: pose.canonicalized(),
        rms,
        iterations,
        history,
        status,
    })
}

pub fn icp_refine(obs: &PointCloud, mesh: &TriangleMesh, init: &Pose, cfg: &IcpConfig) -> Result<IcpResult> {
    icp_refine_with(&IcpModel::new(mesh, cfg)?, obs, init, cfg)
}

/// Depth scores for every estimate, in input order.
pub fn score_estimates(
    estimates: &[PoseEstimate],
    masks: &[Mask],
    obs: &DepthImage,
    mesh: &TriangleMesh,
    render_cfg: &RenderConfig,
    cfg: &SelectionConfig,
) -> Result<Vec<SelectionScore>> {
    if estimates.len() != masks.len() {
        return Err(Error::InvalidValue("one mask per estimate required".into()));
    }
    estimates
        .par_iter()
        .zip(masks)
        .map(|(e, m)| depth_error(obs, &e.pose()?, mesh, m, render_cfg, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{shapes, PoseRecord};
    use crate::pipeline::TranslationKind;
    use crate::render::Image;

    #[test]
    fn two_by_two_fixture() {
        let obs = DepthImage::filled(2, 2, 10);
        let rendered = Image::from_vec(2, 2, vec![10, 11, 13, 10]).unwrap();
        let mask = Mask::filled(2, 2, true);
        let cfg = SelectionConfig { margin: 2.0, ..Default::default() };
        let s = score_depth_maps(&obs, &rendered, &mask, &cfg).unwrap();
        assert_eq!(s.e_sum, 1.0);
        assert_eq!(s.n_intersection, 3);
        assert_eq!(s.n_rendered, 4);
        assert_eq!(s.mean_error, 1.0 / 3.0);
        assert_eq!(s.coverage, 0.75);
        assert!(!s.disqualified);
    }

    #[test]
    fn perfect_agreement_and_disjoint() {
        let obs = DepthImage::filled(3, 3, 200);
        let mask = Mask::filled(3, 3, true);
        let cfg = SelectionConfig::default();
        let s = score_depth_maps(&obs, &obs, &mask, &cfg).unwrap();
        assert_eq!((s.e_sum, s.coverage, s.disqualified), (0.0, 1.0, false));
        let s = score_depth_maps(&obs, &obs, &Mask::new(3, 3), &cfg).unwrap();
        assert!(s.disqualified);
        assert_eq!(s.mean_error, 0.0);
        let s = score_depth_maps(&obs, &DepthImage::new(3, 3), &mask, &cfg).unwrap();
        assert!(s.disqualified && s.n_rendered == 0);
    }

    #[test]
    fn rendered_depth_error_at_truth() {
        let cfg = RenderConfig::default();
        let mesh = shapes::bracket();
        let pose = Pose::new(Rotation::from_axis_angle(&Vec3::new(1.0, 0.5, 0.0), 0.7), Vec3::new(5.0, -3.0, 300.0)).unwrap();
        let (obs, mask) = crate::render::render_single(&mesh, &pose, &cfg);
        let s = depth_error(&obs, &pose, &mesh, &mask, &cfg, &SelectionConfig::default()).unwrap();
        assert_eq!(s.e_sum, 0.0);
        assert_eq!(s.coverage, 1.0);
    }

    fn scored(idx: usize, score: f64, sim: f64, sel: Option<SelectionScore>) -> ScoredEstimate {
        ScoredEstimate {
            estimate: PoseEstimate {
                image_id: 0,
                detection_index: idx,
                object_id: "o".into(),
                pose: PoseRecord::from(&Pose::identity()),
                similarity: sim,
                score,
                mode: TranslationKind::DepthCenter,
                refined: false,
                codebook_index: 0,
            },
            selection: sel,
        }
    }

    fn sel(mean: f64, coverage: f64, disq: bool) -> Option<SelectionScore> {
        Some(SelectionScore {
            e_sum: mean * 10.0,
            n_intersection: 10,
            n_rendered: 10,
            mean_error: mean,
            coverage,
            disqualified: disq,
        })
    }

    #[test]
    fn top_k_orders() {
        let items = vec![
            scored(0, 0.1, 0.2, sel(0.5, 1.0, false)),
            scored(1, 0.9, 0.9, sel(0.1, 1.0, false)),
            scored(2, 0.5, 0.5, sel(0.3, 1.0, false)),
        ];
        assert_eq!(select_top_k(&items, SortMethod::DepthError, ErrorVariant::Mean, 2).unwrap(), vec![1, 2]);
        assert_eq!(select_top_k(&items[..2], SortMethod::Cosine, ErrorVariant::Mean, 1).unwrap(), vec![1]);
        assert_eq!(select_top_k(&items, SortMethod::DetectorScore, ErrorVariant::Mean, 10).unwrap(), vec![1, 2, 0]);
        assert!(select_top_k(&items, SortMethod::Cosine, ErrorVariant::Mean, 0).is_err());
    }

    #[test]
    fn disqualified_last_by_coverage() {
        let items = vec![
            scored(0, 0.0, 0.0, sel(0.0, 0.1, true)),
            scored(1, 0.0, 0.0, sel(4.0, 0.9, false)),
            scored(2, 0.0, 0.0, sel(0.0, 0.2, true)),
            scored(3, 0.0, 0.0, sel(4.0, 0.9, false)),
        ];
        assert_eq!(select_top_k(&items, SortMethod::DepthError, ErrorVariant::Mean, 4).unwrap(), vec![1, 3, 2, 0]);
        let missing = vec![scored(0, 0.0, 0.0, None)];
        assert!(select_top_k(&missing, SortMethod::DepthError, ErrorVariant::Mean, 1).is_err());
    }

    #[test]
    fn icp_fixed_point() {
        let mesh = shapes::bracket();
        let cfg = IcpConfig::default();
        let init = Pose::new(Rotation::from_axis_angle(&Vec3::y(), 0.4), Vec3::new(0.0, 0.0, 300.0)).unwrap().canonicalized();
        let obs = sample_surface_points(&mesh, cfg.model_points, cfg.seed).transformed(&init);
        let r = icp_refine(&obs, &mesh, &init, &cfg).unwrap();
        assert_eq!(r.pose, init);
        assert!(r.rms < 1e-9);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.status, IcpStatus::Converged);
    }

    #[test]
    fn icp_far_observation() {
        let mesh = shapes::bracket();
        let obs = PointCloud::new(vec![Vec3::new(0.0, 0.0, 1000.0); 5]).unwrap();
        let init = Pose::from_translation(Vec3::new(0.0, 0.0, 300.0));
        let r = icp_refine(&obs, &mesh, &init, &IcpConfig::default()).unwrap();
        assert_eq!(r.status, IcpStatus::NoCorrespondences);
        assert_eq!(r.pose, init);
        assert!(icp_refine(&PointCloud::new(vec![]).unwrap(), &mesh, &init, &IcpConfig::default()).is_err());
    }

    #[test]
    fn rigid_align_recovers_transform() {
        let a: Vec<Vec3> = (0..20).map(|i| Vec3::new(i as f64, (i * i % 7) as f64, (i % 3) as f64 * 2.0)).collect();
        let p = Pose::new(Rotation::from_axis_angle(&Vec3::new(0.3, 1.0, 0.2), 2.0), Vec3::new(3.0, -1.0, 7.0)).unwrap();
        let b: Vec<Vec3> = a.iter().map(|x| p.transform_point(x)).collect();
        let q = rigid_align(&a, &b).unwrap();
        assert!(crate::geometry::geodesic_distance(&q.rotation, &p.rotation) < 1e-9);
        assert!((q.translation - p.translation).norm() < 1e-9);
    }

    #[test]
    fn icp_recovers_unit_shift() {
        let mesh = shapes::bracket();
        let cfg = IcpConfig { model_points: 5000, ..Default::default() };
        let shift = Pose::from_translation(Vec3::new(1.0, 0.0, 0.0));
        let obs = sample_surface_points(&mesh, cfg.model_points, cfg.seed).transformed(&shift);
        let r = icp_refine(&obs, &mesh, &Pose::identity(), &cfg).unwrap();
        assert!((r.pose.translation - shift.translation).norm() < 1e-3, "{:?}", r);
        assert!(r.history.windows(2).all(|w| w[1] < w[0]));
    }
}
