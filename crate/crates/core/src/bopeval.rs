//! Pose-error functions (VSD, MSSD, MSPD), Average Recall, greedy matching of
//! estimates to ground truth, and box AP/AR for detections.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, PointCloud, Pose, SymmetrySet, TriangleMesh};
use crate::render::{render_single, DepthImage, Rect, RenderConfig};
use crate::scenegen::{DetectionSet, SceneGt};

/// `[0.05, 0.10, ..., 0.50]`, each value computed as `i / 20`.
fn twentieths() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 20.0).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApInterpolation {
    /// Area under the precision envelope at every recall step.
    AllPoint,
    /// Envelope sampled at recall 0, 0.01, ..., 1.
    Coco101,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// VSD misalignment tolerances as fractions of the object diameter.
    pub vsd_taus: Vec<f64>,
    pub vsd_thresholds: Vec<f64>,
    /// MSSD thresholds as fractions of the object diameter.
    pub mssd_thresholds: Vec<f64>,
    /// MSPD thresholds in pixels at 640 px image width; scaled by `width / 640`.
    pub mspd_thresholds: Vec<f64>,
    pub visibility_threshold: f64,
    /// mm.
    pub visibility_tolerance: f64,
    pub ap_interpolation: ApInterpolation,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            vsd_taus: twentieths(),
            vsd_thresholds: twentieths(),
            mssd_thresholds: twentieths(),
            mspd_thresholds: (1..=10).map(|i| 5.0 * i as f64).collect(),
            visibility_threshold: 0.1,
            visibility_tolerance: 5.0,
            ap_interpolation: ApInterpolation::AllPoint,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, list) in [
            ("vsd_taus", &self.vsd_taus),
            ("vsd_thresholds", &self.vsd_thresholds),
            ("mssd_thresholds", &self.mssd_thresholds),
            ("mspd_thresholds", &self.mspd_thresholds),
        ] {
            if list.is_empty() || list.windows(2).any(|w| !(w[0] < w[1])) || list.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidValue(format!("{name} must be nonempty and strictly increasing")));
            }
        }
        if !(0.0..=1.0).contains(&self.visibility_threshold) || !(self.visibility_tolerance >= 0.0) {
            return Err(Error::InvalidValue("invalid visibility settings".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    /// One value per VSD tolerance.
    pub vsd: Vec<f64>,
    pub mssd: f64,
    pub mspd: f64,
}

pub fn mssd(est: &Pose, gt: &Pose, sym: &SymmetrySet, vertices: &PointCloud) -> Result<f64> {
    if vertices.is_empty() {
        return Err(Error::EmptyVertices);
    }
    let pts = vertices.points();
    let est_pts: Vec<_> = pts.iter().map(|x| est.transform_point(x)).collect();
    Ok(sym
        .rotations()
        .iter()
        .map(|s| {
            let g = gt.rotation.compose(s);
            pts.iter()
                .zip(&est_pts)
                .map(|(x, e)| (e - (g.rotate(x) + gt.translation)).norm())
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min))
}

pub fn mspd(est: &Pose, gt: &Pose, sym: &SymmetrySet, vertices: &PointCloud, k: &CameraIntrinsics) -> Result<f64> {
    if vertices.is_empty() {
        return Err(Error::EmptyVertices);
    }
    let pts = vertices.points();
    let est_px = pts
        .iter()
        .map(|x| k.project(&est.transform_point(x)))
        .collect::<Result<Vec<_>>>()?;
    let mut best = f64::INFINITY;
    for s in sym.rotations() {
        let g = gt.rotation.compose(s);
        let mut worst: f64 = 0.0;
        for (x, e) in pts.iter().zip(&est_px) {
            let p = k.project(&(g.rotate(x) + gt.translation))?;
            worst = worst.max((e.0 - p.0).hypot(e.1 - p.1));
        }
        best = best.min(worst);
    }
    Ok(best)
}

/// Distance from the camera center for a depth value at pixel `(x, y)`.
fn distance(k: &CameraIntrinsics, x: u32, y: u32, z: u16) -> f64 {
    let u = (x as f64 - k.cx) / k.fx;
    let v = (y as f64 - k.cy) / k.fy;
    z as f64 * (1.0 + u * u + v * v).sqrt()
}

/// VSD for each tolerance in `taus` (mm), from the rendered depth of the
/// estimate and ground truth and the scene depth.
///
/// Depths become camera distances first. A rendered pixel is visible when it
/// lies no more than `vis_tol` behind the scene surface or the scene has no
/// surface there; estimate pixels over visible ground-truth pixels also count
/// as visible.
pub fn vsd_from_depth(
    est: &DepthImage,
    gt: &DepthImage,
    scene: &DepthImage,
    k: &CameraIntrinsics,
    taus: &[f64],
    vis_tol: f64,
) -> Result<Vec<f64>> {
    est.check_same_dims(gt)?;
    est.check_same_dims(scene)?;
    let mut union = 0u64;
    let mut cost = vec![0u64; taus.len()];
    let w = est.width();
    for (i, ((&e, &g), &s)) in est.data().iter().zip(gt.data()).zip(scene.data()).enumerate() {
        if e == 0 && g == 0 {
            continue;
        }
        let (x, y) = (i as u32 % w, i as u32 / w);
        let ds = distance(k, x, y, s);
        let de = distance(k, x, y, e);
        let dg = distance(k, x, y, g);
        let vis_g = g > 0 && (s == 0 || dg <= ds + vis_tol);
        let vis_e = e > 0 && (s == 0 || de <= ds + vis_tol || vis_g);
        if !(vis_e || vis_g) {
            continue;
        }
        union += 1;
        let both = vis_e && vis_g;
        for (c, &tau) in cost.iter_mut().zip(taus) {
            if !both || (de - dg).abs() > tau {
                *c += 1;
            }
        }
    }
    Ok(cost
        .iter()
        .map(|&c| if union == 0 { 1.0 } else { c as f64 / union as f64 })
        .collect())
}

/// Renders the estimate and ground truth alone and evaluates VSD.
pub fn vsd(
    est: &Pose,
    gt: &Pose,
    mesh: &TriangleMesh,
    scene: &DepthImage,
    render_cfg: &RenderConfig,
    taus: &[f64],
    vis_tol: f64,
) -> Result<Vec<f64>> {
    let (de, _) = render_single(mesh, est, render_cfg);
    let (dg, _) = render_single(mesh, gt, render_cfg);
    vsd_from_depth(&de, &dg, scene, &render_cfg.intrinsics, taus, vis_tol)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArValues {
    pub ar_vsd: f64,
    pub ar_mssd: f64,
    pub ar_mspd: f64,
    pub ar: f64,
}

impl ArValues {
    pub fn new(ar_vsd: f64, ar_mssd: f64, ar_mspd: f64) -> Self {
        Self {
            ar_vsd,
            ar_mssd,
            ar_mspd,
            ar: (ar_vsd + ar_mssd + ar_mspd) / 3.0,
        }
    }
}

/// Average Recall over a list of errors; `None` for an empty list.
/// `None` entries are unmatched estimates and count as failures.
pub fn average_recall(errors: &[Option<PoseError>], cfg: &EvalConfig, diameter: f64, image_width: u32) -> Result<Option<ArValues>> {
    cfg.validate()?;
    if errors.is_empty() {
        return Ok(None);
    }
    let r = image_width as f64 / 640.0;
    let (mut vsd_hits, mut mssd_hits, mut mspd_hits) = (0u64, 0u64, 0u64);
    for e in errors.iter().flatten() {
        if e.vsd.len() != cfg.vsd_taus.len() {
            return Err(Error::InvalidValue(format!(
                "error has {} VSD values, config has {} tolerances",
                e.vsd.len(),
                cfg.vsd_taus.len()
            )));
        }
        for v in &e.vsd {
            vsd_hits += cfg.vsd_thresholds.iter().filter(|&&t| *v < t).count() as u64;
        }
        mssd_hits += cfg.mssd_thresholds.iter().filter(|&&t| e.mssd < t * diameter).count() as u64;
        mspd_hits += cfg.mspd_thresholds.iter().filter(|&&t| e.mspd < t * r).count() as u64;
    }
    let n = errors.len() as f64;
    Ok(Some(ArValues::new(
        vsd_hits as f64 / (n * (cfg.vsd_taus.len() * cfg.vsd_thresholds.len()) as f64),
        mssd_hits as f64 / (n * cfg.mssd_thresholds.len() as f64),
        mspd_hits as f64 / (n * cfg.mspd_thresholds.len() as f64),
    )))
}

/// Greedy one-to-one matching in selection order: each estimate takes the
/// unmatched ground-truth instance with visible fraction at least
/// `vis_threshold` that minimizes MSSD (ties to the lower instance id).
/// Returns the matched instance id per estimate.
pub fn match_estimates(
    selected: &[Pose],
    gt: &SceneGt,
    sym: &SymmetrySet,
    vertices: &PointCloud,
    vis_threshold: f64,
) -> Result<Vec<Option<u16>>> {
    let candidates: Vec<(u16, Pose)> = gt
        .instances
        .iter()
        .filter(|i| i.visible_fraction >= vis_threshold)
        .map(|i| Ok((i.instance_id, Pose::try_from(&i.pose)?)))
        .collect::<Result<_>>()?;
    let mut taken = vec![false; candidates.len()];
    let mut out = Vec::with_capacity(selected.len());
    for est in selected {
        let dists: Vec<Option<f64>> = candidates
            .par_iter()
            .zip(&taken)
            .map(|((_, p), &t)| if t { Ok(None) } else { mssd(est, p, sym, vertices).map(Some) })
            .collect::<Result<_>>()?;
        let best = dists
            .iter()
            .enumerate()
            .filter_map(|(i, d)| d.map(|d| (i, d)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(candidates[a.0].0.cmp(&candidates[b.0].0)));
        out.push(best.map(|(i, _)| {
            taken[i] = true;
            candidates[i].0
        }));
    }
    Ok(out)
}

/// Object data shared by every error computation.
pub struct EvalObject<'a> {
    pub mesh: &'a TriangleMesh,
    pub sym: &'a SymmetrySet,
    pub vertices: PointCloud,
}

impl<'a> EvalObject<'a> {
    pub fn new(mesh: &'a TriangleMesh, sym: &'a SymmetrySet) -> Self {
        Self {
            mesh,
            sym,
            vertices: PointCloud::from_vertices(mesh),
        }
    }
}

/// Errors of one pose pair. MSPD is infinite when a vertex projects from
/// behind the camera.
pub fn pose_error(
    est: &Pose,
    gt: &Pose,
    obj: &EvalObject<'_>,
    scene_depth: &DepthImage,
    render_cfg: &RenderConfig,
    cfg: &EvalConfig,
) -> Result<PoseError> {
    let d = obj.mesh.diameter();
    let taus: Vec<f64> = cfg.vsd_taus.iter().map(|t| t * d).collect();
    Ok(PoseError {
        vsd: vsd(est, gt, obj.mesh, scene_depth, render_cfg, &taus, cfg.visibility_tolerance)?,
        mssd: mssd(est, gt, obj.sym, &obj.vertices)?,
        mspd: match mspd(est, gt, obj.sym, &obj.vertices, &render_cfg.intrinsics) {
            Err(Error::BehindCamera(_)) => f64::INFINITY,
            r => r?,
        },
    })
}

/// Matches the selected poses of one image to its ground truth and computes
/// their errors; unmatched estimates yield `None`.
pub fn image_errors(
    selected: &[Pose],
    gt: &SceneGt,
    obj: &EvalObject<'_>,
    scene_depth: &DepthImage,
    render_cfg: &RenderConfig,
    cfg: &EvalConfig,
) -> Result<Vec<Option<PoseError>>> {
    cfg.validate()?;
    let matches = match_estimates(selected, gt, obj.sym, &obj.vertices, cfg.visibility_threshold)?;
    selected
        .par_iter()
        .zip(&matches)
        .map(|(est, m)| match m {
            None => Ok(None),
            Some(id) => {
                let inst = gt.instance(*id).expect("matched instance exists");
                pose_error(est, &Pose::try_from(&inst.pose)?, obj, scene_depth, render_cfg, cfg).map(Some)
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub ap50: f64,
    pub ap50_95: f64,
    pub ar100: f64,
}

fn iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

fn interpolated_ap(tp: &[bool], n_gt: usize, interp: ApInterpolation) -> f64 {
    let mut precision = Vec::with_capacity(tp.len());
    let mut recall = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (i, &t) in tp.iter().enumerate() {
        hits += t as usize;
        precision.push(hits as f64 / (i + 1) as f64);
        recall.push(hits as f64 / n_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    match interp {
        ApInterpolation::AllPoint => {
            let mut ap = 0.0;
            let mut prev = 0.0;
            for (p, r) in precision.iter().zip(&recall) {
                ap += (r - prev) * p;
                prev = *r;
            }
            ap
        }
        ApInterpolation::Coco101 => {
            let mut sum = 0.0;
            for i in 0..=100 {
                let r = i as f64 / 100.0;
                let j = recall.partition_point(|&x| x < r);
                if j < precision.len() {
                    sum += precision[j];
                }
            }
            sum / 101.0
        }
    }
}

/// Box AP at IoU 0.5, AP averaged over IoU 0.5..0.95 and recall at
/// `max_per_image` detections averaged over the same IoU thresholds.
/// Every metric is 0 when there are no ground-truth boxes.
pub fn detection_metrics(
    dets: &DetectionSet,
    gt: &DetectionSet,
    max_per_image: usize,
    interp: ApInterpolation,
) -> Result<DetectionMetrics> {
    let mut images = Vec::with_capacity(gt.len());
    for g in gt {
        let d = dets.iter().find(|d| d.image_id == g.image_id);
        let mut boxes: Vec<(f64, usize, Rect)> = d
            .map(|d| d.detections.iter().enumerate().map(|(i, x)| (x.score, i, x.bbox)).collect())
            .unwrap_or_default();
        boxes.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        boxes.truncate(max_per_image);
        let gt_boxes: Vec<Rect> = g.detections.iter().map(|x| x.bbox).collect();
        images.push((g.image_id, boxes, gt_boxes));
    }
    if let Some(d) = dets.iter().find(|d| !gt.iter().any(|g| g.image_id == d.image_id)) {
        return Err(Error::InvalidValue(format!("detections for image {} without ground truth", d.image_id)));
    }
    let n_gt: usize = images.iter().map(|i| i.2.len()).sum();
    if n_gt == 0 {
        return Ok(DetectionMetrics { ap50: 0.0, ap50_95: 0.0, ar100: 0.0 });
    }
    let thresholds = iou_thresholds();
    let mut aps = Vec::new();
    let mut recalls = Vec::new();
    for &t in &thresholds {
        // (score, image order, rank in image, true positive)
        let mut all: Vec<(f64, usize, usize, bool)> = Vec::new();
        for (ii, (_, boxes, gts)) in images.iter().enumerate() {
            let mut used = vec![false; gts.len()];
            for (rank, (score, _, b)) in boxes.iter().enumerate() {
                let mut best: Option<(usize, f64)> = None;
                for (gi, g) in gts.iter().enumerate() {
                    if used[gi] {
                        continue;
                    }
                    let iou = b.iou(g);
                    if iou >= t && best.is_none_or(|(_, v)| iou > v) {
                        best = Some((gi, iou));
                    }
                }
                if let Some((gi, _)) = best {
                    used[gi] = true;
                }
                all.push((*score, ii, rank, best.is_some()));
            }
        }
        all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let tp: Vec<bool> = all.iter().map(|x| x.3).collect();
        aps.push(interpolated_ap(&tp, n_gt, interp));
        recalls.push(tp.iter().filter(|&&x| x).count() as f64 / n_gt as f64);
    }
    Ok(DetectionMetrics {
        ap50: aps[0],
        ap50_95: aps.iter().sum::<f64>() / aps.len() as f64,
        ar100: recalls.iter().sum::<f64>() / recalls.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::rle::RleMask;
    use crate::geometry::{Rotation, Vec3};
    use crate::render::{Image, Mask};
    use crate::scenegen::{Detection, ImageDetections};

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(pts.iter().map(|p| Vec3::from(*p)).collect()).unwrap()
    }

    #[test]
    fn mssd_examples() {
        let v = cloud(&[[10.0, 0.0, 0.0], [0.0, 5.0, 0.0], [-3.0, -3.0, 2.0]]);
        let gt = Pose::new(Rotation::from_axis_angle(&Vec3::x(), 0.3), Vec3::new(0.0, 0.0, 300.0)).unwrap();
        let sym = SymmetrySet::trivial();
        assert_eq!(mssd(&gt, &gt, &sym, &v).unwrap(), 0.0);
        let shifted = Pose::new(gt.rotation, gt.translation + Vec3::new(5.0, 0.0, 0.0)).unwrap();
        assert_eq!(mssd(&shifted, &gt, &sym, &v).unwrap(), 5.0);

        let flip = Rotation::from_axis_angle(&Vec3::z(), std::f64::consts::PI);
        let sym = SymmetrySet::new([flip]);
        let est = gt.compose(&Pose::new(flip, Vec3::zeros()).unwrap());
        assert!(mssd(&est, &gt, &sym, &v).unwrap() < 1e-12);
        assert!(mspd(&est, &gt, &sym, &v, &CameraIntrinsics::default()).unwrap() < 1e-9);
        assert!(mssd(&gt, &gt, &sym, &cloud(&[])).is_err());
    }

    #[test]
    fn mspd_pinhole_shift() {
        let v = cloud(&[[0.0, 0.0, 0.0]]);
        let gt = Pose::from_translation(Vec3::new(0.0, 0.0, 300.0));
        let est = Pose::from_translation(Vec3::new(30.0, 0.0, 300.0));
        let k = CameraIntrinsics::default();
        assert_eq!(mspd(&est, &gt, &SymmetrySet::trivial(), &v, &k).unwrap(), 60.0);
        let behind = Pose::from_translation(Vec3::new(0.0, 0.0, -5.0));
        assert!(mspd(&behind, &gt, &SymmetrySet::trivial(), &v, &k).is_err());

        let mesh = crate::geometry::shapes::bracket();
        let sym = SymmetrySet::trivial();
        let obj = EvalObject::new(&mesh, &sym);
        let rcfg = RenderConfig::default();
        let scene = DepthImage::new(k.width, k.height);
        let e = pose_error(&behind, &gt, &obj, &scene, &rcfg, &EvalConfig::default()).unwrap();
        assert_eq!(e.mspd, f64::INFINITY);
    }

    #[test]
    fn vsd_fixtures() {
        let k = CameraIntrinsics::new(100.0, 100.0, 1.5, 0.5, 4, 2).unwrap();
        let gt = Image::from_vec(4, 2, vec![300u16; 8]).unwrap();
        let scene = gt.clone();
        let taus = [10.0];
        assert_eq!(vsd_from_depth(&gt, &gt, &scene, &k, &taus, 5.0).unwrap(), vec![0.0]);

        // Left half agrees, right half 20 mm nearer.
        let est = Image::from_vec(4, 2, vec![300, 300, 280, 280, 300, 300, 280, 280]).unwrap();
        assert_eq!(vsd_from_depth(&est, &gt, &scene, &k, &taus, 5.0).unwrap(), vec![0.5]);

        let left = Image::from_vec(4, 2, vec![300, 300, 0, 0, 300, 300, 0, 0]).unwrap();
        let right = Image::from_vec(4, 2, vec![0, 0, 300, 300, 0, 0, 300, 300]).unwrap();
        let empty = DepthImage::new(4, 2);
        assert_eq!(vsd_from_depth(&left, &right, &empty, &k, &taus, 5.0).unwrap(), vec![1.0]);
        assert_eq!(vsd_from_depth(&empty, &empty, &empty, &k, &taus, 5.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn ar_threshold_counting() {
        let cfg = EvalConfig::default();
        let d = 37.0;
        let exact = PoseError { vsd: vec![0.0; 10], mssd: 0.0, mspd: 0.0 };
        assert_eq!(average_recall(&[Some(exact)], &cfg, d, 640).unwrap().unwrap(), ArValues::new(1.0, 1.0, 1.0));
        let bad = PoseError { vsd: vec![1.0; 10], mssd: f64::INFINITY, mspd: f64::INFINITY };
        assert_eq!(average_recall(&[Some(bad), None], &cfg, d, 640).unwrap().unwrap().ar, 0.0);
        let e = PoseError { vsd: vec![1.0; 10], mssd: 0.2 * d, mspd: 1e9 };
        assert_eq!(average_recall(&[Some(e)], &cfg, d, 640).unwrap().unwrap().ar_mssd, 0.6);
        assert_eq!(average_recall(&[], &cfg, d, 640).unwrap(), None);
    }

    fn gt_scene(poses: &[Pose]) -> SceneGt {
        SceneGt {
            image_id: 0,
            intrinsics: CameraIntrinsics::default(),
            camera_to_world: (&Pose::identity()).into(),
            instances: poses
                .iter()
                .enumerate()
                .map(|(i, p)| crate::scenegen::GtInstance {
                    instance_id: i as u16 + 1,
                    object_id: "o".into(),
                    pose: p.into(),
                    visible_fraction: 1.0,
                })
                .collect(),
        }
    }

    #[test]
    fn greedy_matching() {
        let v = cloud(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let sym = SymmetrySet::trivial();
        let at = |x: f64| Pose::from_translation(Vec3::new(x, 0.0, 300.0));
        let one = gt_scene(&[at(0.0)]);
        assert_eq!(match_estimates(&[at(0.0)], &one, &sym, &v, 0.1).unwrap(), vec![Some(1)]);
        assert_eq!(match_estimates(&[at(0.0), at(1.0)], &one, &sym, &v, 0.1).unwrap(), vec![Some(1), None]);
        // Estimate 1 is nearest A; estimate 2 is nearer A than B but A is taken.
        let two = gt_scene(&[at(0.0), at(10.0)]);
        assert_eq!(match_estimates(&[at(1.0), at(2.0)], &two, &sym, &v, 0.1).unwrap(), vec![Some(1), Some(2)]);
    }

    fn dets(boxes: &[(Rect, f64)]) -> ImageDetections {
        let mask = RleMask::encode(&Mask::new(100, 100));
        ImageDetections {
            image_id: 0,
            width: 100,
            height: 100,
            detections: boxes
                .iter()
                .map(|(b, s)| Detection {
                    image_id: 0,
                    object_id: "o".into(),
                    score: *s,
                    bbox: *b,
                    mask: mask.clone(),
                    instance_id: None,
                })
                .collect(),
        }
    }

    #[test]
    fn detection_examples() {
        let a = Rect { x: 0, y: 0, w: 10, h: 10 };
        let b = Rect { x: 50, y: 50, w: 20, h: 10 };
        let gt = vec![dets(&[(a, 1.0), (b, 1.0)])];
        let m = detection_metrics(&gt, &gt, 100, ApInterpolation::AllPoint).unwrap();
        assert_eq!(m, DetectionMetrics { ap50: 1.0, ap50_95: 1.0, ar100: 1.0 });
        let none = vec![dets(&[])];
        let m = detection_metrics(&none, &gt, 100, ApInterpolation::AllPoint).unwrap();
        assert_eq!(m, DetectionMetrics { ap50: 0.0, ap50_95: 0.0, ar100: 0.0 });
        let half = vec![dets(&[(a, 1.0)])];
        let m = detection_metrics(&half, &gt, 100, ApInterpolation::AllPoint).unwrap();
        assert_eq!(m.ap50, 0.5);
        let m = detection_metrics(&half, &gt, 100, ApInterpolation::Coco101).unwrap();
        assert_eq!(m.ap50, 51.0 / 101.0);
    }
}
