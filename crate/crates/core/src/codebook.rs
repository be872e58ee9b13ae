//! Rotation codebooks: a quasi-uniform discretization of the rotation group
//! with one embedding per rotation, searched by cosine similarity.
//!
//! Embedders are pluggable. The built-in [`PixelTemplate`] embedder
//! downsamples a crop, removes its mean and normalizes it; external encoders
//! participate by writing codebook and embedding files in the text format
//! implemented by [`Codebook::to_text`] / [`Codebook::from_text`].

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Rotation, TriangleMesh, Vec3};
use crate::pipeline::crop::{crop_window, downsample, resample_window};
use crate::pipeline::CropSpec;
use crate::render::{render_single_window, GrayImage, RenderConfig};
use crate::seed;

/// Reciprocal powers of the plastic-number generalization for three
/// dimensions (the real root of `x^4 = x + 1`).
const KRONECKER_ALPHA: [f64; 3] = {
    const G: f64 = 1.220_744_084_605_759_5;
    [1.0 / G, 1.0 / (G * G), 1.0 / (G * G * G)]
};

/// Identity followed by `n - 1` rotations from an additive recurrence in the
/// unit cube, mapped through the measure-preserving cube-to-quaternion map.
/// The seed selects the recurrence offset; quaternion signs are canonical.
pub fn sample_rotations(n: usize, seed_value: u64) -> Result<Vec<Rotation>> {
    if n < 1 {
        return Err(Error::InvalidValue("rotation count must be >= 1".into()));
    }
    let mut rng = seed::rng(seed_value, "rotations", 0);
    let offset: [f64; 3] = if seed_value == 0 {
        [0.5; 3]
    } else {
        [rng.random(), rng.random(), rng.random()]
    };
    let mut out = Vec::with_capacity(n);
    out.push(Rotation::identity());
    for k in 1..n {
        let u = std::array::from_fn(|d| (offset[d] + k as f64 * KRONECKER_ALPHA[d]).fract());
        out.push(Rotation::from_unit_cube(u));
    }
    Ok(out)
}

/// Mean geodesic distance from each rotation to its nearest neighbor in the set.
pub fn mean_nearest_spacing(rotations: &[Rotation]) -> f64 {
    if rotations.len() < 2 {
        return std::f64::consts::PI;
    }
    let quats: Vec<[f64; 4]> = rotations.iter().map(Rotation::wxyz).collect();
    let total: f64 = quats
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let best = quats
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| quat_abs_dot(a, b))
                .fold(0.0f64, f64::max);
            2.0 * best.min(1.0).acos()
        })
        .sum();
    total / rotations.len() as f64
}

fn quat_abs_dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    (a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]).abs()
}

/// A fixed-length embedding vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding(pub Vec<f32>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt()
    }

    /// Whitespace-separated decimals, as used by embedding exchange files.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.0.len() * 12);
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{v}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let values = text
            .split_whitespace()
            .map(|t| {
                t.parse::<f32>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Format(format!("bad embedding value {t:?}")))
            })
            .collect::<Result<Vec<f32>>>()?;
        if values.is_empty() {
            return Err(Error::Format("empty embedding".into()));
        }
        Ok(Self(values))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderSpec {
    pub kind: String,
    pub crop_size: u32,
    pub grid: u32,
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        Self {
            kind: PixelTemplate::ID.into(),
            crop_size: 128,
            grid: 32,
        }
    }
}

impl EmbedderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.crop_size == 0 || self.grid == 0 {
            return Err(Error::InvalidValue("embedder sizes must be positive".into()));
        }
        if self.kind != PixelTemplate::ID {
            return Err(Error::InvalidValue(format!("unknown embedder kind {:?}", self.kind)));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<PixelTemplate> {
        self.validate()?;
        Ok(PixelTemplate { spec: self.clone() })
    }
}

/// Maps square image crops to embeddings.
pub trait Embedder: Sync {
    fn id(&self) -> &str;
    /// Parameter string stored in codebook headers.
    fn fingerprint(&self) -> String;
    fn crop_size(&self) -> u32;
    fn dimension(&self) -> usize;
    fn embed(&self, crop: &GrayImage) -> Result<Embedding>;
}

/// Downsample by area averaging, subtract the mean, divide by the norm.
#[derive(Clone, Debug)]
pub struct PixelTemplate {
    spec: EmbedderSpec,
}

impl PixelTemplate {
    pub const ID: &'static str = "pixel-template";

    pub fn new(spec: EmbedderSpec) -> Result<Self> {
        spec.build()
    }
}

impl Embedder for PixelTemplate {
    fn id(&self) -> &str {
        Self::ID
    }

    fn fingerprint(&self) -> String {
        format!("crop={};grid={}", self.spec.crop_size, self.spec.grid)
    }

    fn crop_size(&self) -> u32 {
        self.spec.crop_size
    }

    fn dimension(&self) -> usize {
        (self.spec.grid * self.spec.grid) as usize
    }

    fn embed(&self, crop: &GrayImage) -> Result<Embedding> {
        embed(crop, &self.spec)
    }
}

pub fn embed(crop: &GrayImage, spec: &EmbedderSpec) -> Result<Embedding> {
    if crop.width() != spec.crop_size || crop.height() != spec.crop_size {
        return Err(Error::DimensionMismatch {
            expected: format!("{0}x{0} crop", spec.crop_size),
            actual: format!("{}x{}", crop.width(), crop.height()),
        });
    }
    let small = downsample(crop, spec.grid, spec.grid);
    let n = small.data().len() as f64;
    let mean = small.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    let centered: Vec<f64> = small.data().iter().map(|&v| v as f64 - mean).collect();
    let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm >= 1e-12) {
        return Err(Error::DegenerateCrop);
    }
    Ok(Embedding(centered.iter().map(|v| (v / norm) as f32).collect()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CodebookEntry {
    pub rotation: Rotation,
    pub embedding: Embedding,
    /// Box diagonal (px) of the entry's view rendered at the reference distance.
    pub view_diagonal: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    pub object_id: String,
    pub embedder_id: String,
    pub embedder_params: String,
    pub render_fingerprint: String,
    /// Reference render distance, mm.
    pub z_ref: f64,
    pub dimension: usize,
    pub entries: Vec<CodebookEntry>,
    norms: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredRotation {
    pub rotation: Rotation,
    pub similarity: f64,
    pub index: usize,
}

/// Result of [`build_codebook`]; `skipped` lists rotation indices whose
/// render produced a degenerate crop.
#[derive(Clone, Debug)]
pub struct CodebookBuild {
    pub codebook: Codebook,
    pub skipped: Vec<usize>,
}

const MAGIC: &str = "binpose-codebook 1";

impl Codebook {
    pub fn new(
        object_id: impl Into<String>,
        embedder_id: impl Into<String>,
        embedder_params: impl Into<String>,
        render_fingerprint: impl Into<String>,
        z_ref: f64,
        entries: Vec<CodebookEntry>,
    ) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::InvalidValue("codebook needs at least one entry".into()))?;
        let dimension = first.embedding.dim();
        if dimension == 0 {
            return Err(Error::InvalidValue("zero embedding dimension".into()));
        }
        if !(z_ref > 0.0 && z_ref.is_finite()) {
            return Err(Error::InvalidValue("reference distance must be positive".into()));
        }
        let mut norms = Vec::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.embedding.dim() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension.to_string(),
                    actual: format!("{} (entry {i})", e.embedding.dim()),
                });
            }
            let n = e.embedding.norm();
            if !(n > 0.0 && n.is_finite()) || !(e.view_diagonal >= 0.0 && e.view_diagonal.is_finite()) {
                return Err(Error::InvalidValue(format!("invalid codebook entry {i}")));
            }
            norms.push(n);
        }
        Ok(Self {
            object_id: object_id.into(),
            embedder_id: embedder_id.into(),
            embedder_params: embedder_params.into(),
            render_fingerprint: render_fingerprint.into(),
            z_ref,
            dimension,
            entries,
            norms,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rotations(&self) -> Vec<Rotation> {
        self.entries.iter().map(|e| e.rotation).collect()
    }

    /// Cosine similarity between entry `i` and `query` (query norm given).
    #[inline]
    fn similarity(&self, i: usize, query: &[f32], query_norm: f64) -> f64 {
        let dot: f64 = self.entries[i]
            .embedding
            .0
            .iter()
            .zip(query)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum();
        (dot / (self.norms[i] * query_norm)).clamp(-1.0, 1.0)
    }

    /// Similarities of every entry to `query`, in entry order.
    pub fn similarities(&self, query: &Embedding) -> Result<Vec<f64>> {
        self.check_query(query)?;
        let qn = query.norm();
        Ok((0..self.len()).map(|i| self.similarity(i, &query.0, qn)).collect())
    }

    fn check_query(&self, query: &Embedding) -> Result<()> {
        if query.dim() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension.to_string(),
                actual: query.dim().to_string(),
            });
        }
        let n = query.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidValue("query embedding has zero norm".into()));
        }
        Ok(())
    }

    /// Exact top-`k` by cosine similarity; ties go to the lower index.
    pub fn knn_lookup(&self, query: &Embedding, k: usize) -> Result<Vec<ScoredRotation>> {
        if k < 1 || k > self.len() {
            return Err(Error::KOutOfRange { k, max: self.len() });
        }
        let sims = self.similarities(query)?;
        let mut order: Vec<usize> = (0..sims.len()).collect();
        let cmp = |a: &usize, b: &usize| sims[*b].total_cmp(&sims[*a]).then(a.cmp(b));
        if k < order.len() {
            order.select_nth_unstable_by(k - 1, cmp);
            order.truncate(k);
        }
        order.sort_by(cmp);
        Ok(order
            .into_iter()
            .map(|i| ScoredRotation {
                rotation: self.entries[i].rotation,
                similarity: sims[i],
                index: i,
            })
            .collect())
    }

    /// Structured-text form:
    ///
    /// ```text
    /// binpose-codebook 1
    /// object <id>
    /// embedder <id>
    /// embedder_params <string>
    /// render <fingerprint>
    /// z_ref <mm>
    /// dimension <d>
    /// entries <n>
    /// e <w> <x> <y> <z> <view_diagonal> <v_1> ... <v_d>     (n lines)
    /// ```
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.len() * (self.dimension * 11 + 64));
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "object {}", self.object_id);
        let _ = writeln!(s, "embedder {}", self.embedder_id);
        let _ = writeln!(s, "embedder_params {}", self.embedder_params);
        let _ = writeln!(s, "render {}", self.render_fingerprint);
        let _ = writeln!(s, "z_ref {}", self.z_ref);
        let _ = writeln!(s, "dimension {}", self.dimension);
        let _ = writeln!(s, "entries {}", self.len());
        for e in &self.entries {
            let [w, x, y, z] = e.rotation.wxyz();
            let _ = write!(s, "e {w} {x} {y} {z} {}", e.view_diagonal);
            for v in &e.embedding.0 {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut next_line = || {
            lines
                .next()
                .ok_or_else(|| Error::Format("truncated codebook header".into()))
        };
        let (_, magic) = next_line()?;
        if magic.trim_end() != MAGIC {
            return Err(Error::parse(1, "missing codebook magic line"));
        }
        let mut header = |key: &str| -> Result<String> {
            let (i, line) = next_line()?;
            let rest = line
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix(' ').or(r.is_empty().then_some("")))
                .ok_or_else(|| Error::parse(i + 1, format!("expected `{key}`")))?;
            Ok(rest.to_string())
        };
        let object_id = header("object")?;
        let embedder_id = header("embedder")?;
        let embedder_params = header("embedder_params")?;
        let render_fingerprint = header("render")?;
        let z_ref: f64 = header("z_ref")?
            .trim()
            .parse()
            .map_err(|_| Error::Format("bad z_ref".into()))?;
        let dimension: usize = header("dimension")?
            .trim()
            .parse()
            .map_err(|_| Error::Format("bad dimension".into()))?;
        let count: usize = header("entries")?
            .trim()
            .parse()
            .map_err(|_| Error::Format("bad entry count".into()))?;
        if dimension == 0 || dimension > 1 << 20 {
            return Err(Error::Format(format!("unsupported dimension {dimension}")));
        }
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut tok = line.split_whitespace();
            if tok.next() != Some("e") {
                return Err(Error::parse(i + 1, "expected entry line"));
            }
            let mut num = |what: &str| -> Result<f64> {
                tok.next()
                    .and_then(|t| t.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(i + 1, format!("bad {what}")))
            };
            let q = [num("w")?, num("x")?, num("y")?, num("z")?];
            let view_diagonal = num("view diagonal")?;
            let rotation = Rotation::from_wxyz(q[0], q[1], q[2], q[3])
                .map_err(|e| Error::parse(i + 1, e.to_string()))?;
            let mut values = Vec::with_capacity(dimension);
            for t in tok {
                let v = t
                    .parse::<f32>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(i + 1, format!("bad embedding value {t:?}")))?;
                values.push(v);
            }
            if values.len() != dimension {
                return Err(Error::parse(
                    i + 1,
                    format!("expected {dimension} values, got {}", values.len()),
                ));
            }
            entries.push(CodebookEntry {
                rotation,
                embedding: Embedding(values),
                view_diagonal,
            });
        }
        if entries.len() != count {
            return Err(Error::Format(format!(
                "header declares {count} entries, found {}",
                entries.len()
            )));
        }
        Self::new(object_id, embedder_id, embedder_params, render_fingerprint, z_ref, entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&crate::formats::read_text(path)?)
    }
}

/// Crop and view diagonal of the object rendered at `(0, 0, z_ref)` with `rotation`.
pub fn render_view(
    mesh: &TriangleMesh,
    rotation: &Rotation,
    crop: &CropSpec,
    crop_size: u32,
    cfg: &RenderConfig,
    z_ref: f64,
) -> Option<(GrayImage, f64)> {
    let pose = Pose {
        rotation: *rotation,
        translation: Vec3::new(0.0, 0.0, z_ref),
    };
    let view = render_single_window(mesh, &pose, cfg);
    let bbox = view.bounds()?;
    let (x0, y0, side) = crop_window(&bbox, crop.padding).ok()?;
    let r = view.rect;
    let img = resample_window(
        |x, y| {
            if x < r.x as i64 || y < r.y as i64 || x >= (r.x + r.w) as i64 || y >= (r.y + r.h) as i64 {
                0.0
            } else {
                view.gray[((y as u32 - r.y) * r.w + (x as u32 - r.x)) as usize]
            }
        },
        x0,
        y0,
        side,
        crop_size,
    );
    Some((img, bbox.diagonal()))
}

/// Renders and embeds one view per rotation (in parallel, output in input
/// order). Rotations whose view is empty or embeds degenerately are skipped.
pub fn build_codebook(
    object_id: &str,
    mesh: &TriangleMesh,
    rotations: &[Rotation],
    embedder: &dyn Embedder,
    crop: &CropSpec,
    cfg: &RenderConfig,
    z_ref: f64,
) -> Result<CodebookBuild> {
    if rotations.is_empty() {
        return Err(Error::InvalidValue("no rotations".into()));
    }
    if !(z_ref > 0.0) {
        return Err(Error::InvalidValue("reference distance must be positive".into()));
    }
    cfg.validate()?;
    crop.validate()?;
    let results: Vec<Option<CodebookEntry>> = rotations
        .par_iter()
        .map(|r| {
            let (img, view_diagonal) = render_view(mesh, r, crop, embedder.crop_size(), cfg, z_ref)?;
            let embedding = embedder.embed(&img).ok()?;
            Some(CodebookEntry {
                rotation: *r,
                embedding,
                view_diagonal,
            })
        })
        .collect();
    let mut entries = Vec::with_capacity(results.len());
    let mut skipped = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Some(e) => entries.push(e),
            None => skipped.push(i),
        }
    }
    if !skipped.is_empty() {
        log::warn!("codebook: skipped {} degenerate views", skipped.len());
    }
    let params = format!(
        "{};padding={};mask_only={}",
        embedder.fingerprint(),
        crop.padding,
        crop.mask_only
    );
    let codebook = Codebook::new(object_id, embedder.id(), params, cfg.fingerprint(), z_ref, entries)?;
    Ok(CodebookBuild { codebook, skipped })
}
