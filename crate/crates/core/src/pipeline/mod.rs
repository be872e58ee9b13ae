//! Per-scene pose estimation: crop each detection, look its rotation up in
//! the codebook, and recover the translation either from the depth image at
//! the box center or from the box scale relative to the codebook view.
//!
//! The rotation is taken from the codebook as-is; it is not re-estimated
//! once the translation is known.

pub(crate) mod crop;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crop::{extract_crop, CropSpec};

use crate::codebook::{Codebook, Embedder};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, PoseRecord, TriangleMesh, Vec3};
use crate::render::{DepthImage, GrayImage, Mask};
use crate::scenegen::{Detection, ImageDetections};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranslationKind {
    /// `z = z_ref * view_diagonal / detected_diagonal`, a scale-ratio heuristic.
    RgbScale,
    /// Median depth in a window at the box center plus a surface offset.
    DepthCenter,
}

impl TranslationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::RgbScale => "rgb_scale",
            Self::DepthCenter => "depth_center",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslationMode {
    pub kind: TranslationKind,
    /// Side of the square center window, px (odd).
    pub window: u32,
    /// Distance added to the measured surface depth to reach the object center, mm.
    pub surface_offset: f64,
}

impl TranslationMode {
    /// Depth-center mode with the offset set to half the smallest mesh extent.
    pub fn depth_center(mesh: &TriangleMesh) -> Self {
        Self {
            kind: TranslationKind::DepthCenter,
            window: 5,
            surface_offset: default_surface_offset(mesh),
        }
    }

    pub fn rgb_scale() -> Self {
        Self {
            kind: TranslationKind::RgbScale,
            window: 5,
            surface_offset: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::InvalidValue(format!(
                "center window must be odd and >= 1, got {}",
                self.window
            )));
        }
        if !self.surface_offset.is_finite() {
            return Err(Error::InvalidValue("surface offset must be finite".into()));
        }
        Ok(())
    }
}

pub fn default_surface_offset(mesh: &TriangleMesh) -> f64 {
    mesh.extents().min() / 2.0
}

/// One pose hypothesis for one detection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub image_id: u32,
    pub detection_index: usize,
    pub object_id: String,
    pub pose: PoseRecord,
    pub similarity: f64,
    pub score: f64,
    pub mode: TranslationKind,
    pub refined: bool,
    pub codebook_index: usize,
}

impl PoseEstimate {
    pub fn pose(&self) -> Result<Pose> {
        Pose::try_from(&self.pose)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedDetection {
    pub detection_index: usize,
    pub reason: String,
}

/// Estimates of one image plus the detections that could not be processed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageEstimates {
    pub image_id: u32,
    pub estimates: Vec<PoseEstimate>,
    pub skipped: Vec<SkippedDetection>,
}

fn median(values: &mut [u16]) -> f64 {
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] as f64 + values[n / 2] as f64) / 2.0
    }
}

/// Camera-frame translation for a detection.
///
/// `entry` is the codebook index of the chosen rotation; only the rgb-scale
/// mode reads it.
pub fn estimate_translation(
    det: &Detection,
    mask: &Mask,
    depth: Option<&DepthImage>,
    k: &CameraIntrinsics,
    mode: &TranslationMode,
    cb: &Codebook,
    entry: usize,
) -> Result<Vec3> {
    mode.validate()?;
    if det.bbox.w == 0 || det.bbox.h == 0 {
        return Err(Error::ZeroAreaBox);
    }
    let (cx, cy) = det.bbox.center();
    let z = match mode.kind {
        TranslationKind::DepthCenter => {
            let depth = depth.ok_or_else(|| Error::InvalidValue("depth image required".into()))?;
            depth.check_same_dims(mask)?;
            let half = (mode.window / 2) as i64;
            let (px, py) = ((cx + 0.5).floor() as i64, (cy + 0.5).floor() as i64);
            let mut vals = Vec::with_capacity((mode.window * mode.window) as usize);
            for y in py - half..=py + half {
                for x in px - half..=px + half {
                    if let (Some(d), Some(true)) = (depth.get_checked(x, y), mask.get_checked(x, y)) {
                        if d > 0 {
                            vals.push(d);
                        }
                    }
                }
            }
            if vals.is_empty() {
                return Err(Error::NoValidDepth);
            }
            median(&mut vals) + mode.surface_offset
        }
        TranslationKind::RgbScale => {
            let diag = det.bbox.diagonal();
            if !(diag > 0.0) {
                return Err(Error::ZeroAreaBox);
            }
            let view = cb
                .entries
                .get(entry)
                .ok_or_else(|| Error::InvalidValue(format!("codebook entry {entry} out of range")))?;
            cb.z_ref * view.view_diagonal / diag
        }
    };
    k.back_project(cx, cy, z)
}

/// Inputs shared by every detection of an image.
pub struct EstimationContext<'a> {
    pub codebook: &'a Codebook,
    pub embedder: &'a dyn Embedder,
    pub crop: &'a CropSpec,
    pub mode: &'a TranslationMode,
    pub intrinsics: &'a CameraIntrinsics,
}

fn estimate_one(
    ctx: &EstimationContext<'_>,
    gray: &GrayImage,
    depth: Option<&DepthImage>,
    index: usize,
    det: &Detection,
) -> Result<PoseEstimate> {
    let mask = det.mask.decode()?;
    let crop = extract_crop(gray, &det.bbox, Some(&mask), ctx.crop)?;
    let z_test = ctx.embedder.embed(&crop)?;
    let top = ctx.codebook.knn_lookup(&z_test, 1)?[0];
    let t = estimate_translation(det, &mask, depth, ctx.intrinsics, ctx.mode, ctx.codebook, top.index)?;
    let pose = Pose::new(top.rotation, t)?.canonicalized();
    Ok(PoseEstimate {
        image_id: det.image_id,
        detection_index: index,
        object_id: det.object_id.clone(),
        pose: PoseRecord::from(&pose),
        similarity: top.similarity,
        score: det.score,
        mode: ctx.mode.kind,
        refined: false,
        codebook_index: top.index,
    })
}

/// Crop, embed, look up and translate every detection. Detections that fail
/// are skipped and reported; output order follows detection order.
pub fn estimate_poses(
    gray: &GrayImage,
    depth: Option<&DepthImage>,
    dets: &ImageDetections,
    ctx: &EstimationContext<'_>,
) -> Result<ImageEstimates> {
    ctx.mode.validate()?;
    if ctx.crop.output_size != ctx.embedder.crop_size() {
        return Err(Error::InvalidValue(format!(
            "crop size {} does not match embedder input {}",
            ctx.crop.output_size,
            ctx.embedder.crop_size()
        )));
    }
    if let Some(d) = dets.detections.iter().find(|d| d.object_id != ctx.codebook.object_id) {
        return Err(Error::ObjectMismatch {
            codebook: ctx.codebook.object_id.clone(),
            requested: d.object_id.clone(),
        });
    }
    let results: Vec<Result<PoseEstimate>> = dets
        .detections
        .par_iter()
        .enumerate()
        .map(|(i, d)| estimate_one(ctx, gray, depth, i, d))
        .collect();
    let mut estimates = Vec::new();
    let mut skipped = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(e) => estimates.push(e),
            Err(e) => skipped.push(SkippedDetection {
                detection_index: i,
                reason: e.to_string(),
            }),
        }
    }
    Ok(ImageEstimates {
        image_id: dets.image_id,
        estimates,
        skipped,
    })
}
