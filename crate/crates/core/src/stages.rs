//! On-disk pipeline stages driven by a [`RunConfig`].
//!
//! Layout of an output directory:
//!
//! ```text
//! manifest.json           inputs/outputs with sha256 per stage, config echo
//! timings.json            wall-clock seconds per stage (not reproducible)
//! dataset/scene_NNNNNN/   gt.json depth.pgm instances.pgm gray.pgm
//! codebook.txt
//! detections.json
//! estimates.json          refined.json (ICP)
//! selection.json
//! eval.json
//! report/                 report.txt ar.csv ar_by_method.svg ar_vs_noise.svg
//! ```
//!
//! Every stage buffers its outputs and writes them only after it succeeded,
//! so a failed stage leaves no partial files behind.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bopeval::{self, ArValues, DetectionMetrics, EvalConfig, EvalObject, PoseError};
use crate::codebook::{build_codebook, sample_rotations, Codebook, Embedder, EmbedderSpec};
use crate::error::{Error, Result};
use crate::formats::{self, json_bytes, pnm, sha256_hex};
use crate::geometry::{shapes, Pose, PoseRecord, Rotation, SymmetrySet, TriangleMesh, Vec3};
use crate::pipeline::{
    default_surface_offset, estimate_poses, CropSpec, EstimationContext, ImageEstimates, TranslationKind,
    TranslationMode,
};
use crate::render::{DepthImage, RenderConfig};
use crate::report;
use crate::scenegen::{
    generate_scene, gt_detections, DetectionPerturbation, DetectionSet, ImageDetections, SceneConfig, SceneGt,
};
use crate::select_refine::{
    icp_refine_with, observation_cloud, score_estimates, select_top_k, IcpConfig, IcpModel, IcpStatus,
    ScoredEstimate, SelectionConfig, SortMethod,
};
use crate::seed;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "BINPOSE_OUT";
pub const DEFAULT_OUT: &str = "binpose-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Genscenes,
    Codebook,
    DetectGt,
    Estimate,
    Refine,
    Select,
    Eval,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Genscenes,
        Stage::Codebook,
        Stage::DetectGt,
        Stage::Estimate,
        Stage::Refine,
        Stage::Select,
        Stage::Eval,
        Stage::Report,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Genscenes => "genscenes",
            Stage::Codebook => "codebook",
            Stage::DetectGt => "detect-gt",
            Stage::Estimate => "estimate",
            Stage::Refine => "refine",
            Stage::Select => "select",
            Stage::Eval => "eval",
            Stage::Report => "report",
        }
    }

    pub fn from_name(name: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.name() == name)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Wavefront OBJ; the built-in bracket is used when absent.
    pub mesh: Option<PathBuf>,
    pub symmetry: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub codebook: Option<PathBuf>,
    pub detections: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodebookConfig {
    pub size: usize,
    /// Distance of the reference views, mm.
    pub z_ref: f64,
    pub embedder: EmbedderSpec,
}

impl Default for CodebookConfig {
    fn default() -> Self {
        Self {
            size: 4096,
            z_ref: 300.0,
            embedder: EmbedderSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslationConfig {
    pub kind: TranslationKind,
    pub window: u32,
    /// Half the smallest mesh extent when absent.
    pub surface_offset: Option<f64>,
}

impl Default for TranslationConfig {
    fn default() -> Self {
        Self {
            kind: TranslationKind::DepthCenter,
            window: 5,
            surface_offset: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    pub min_visible: f64,
    pub bbox_jitter_px: u32,
    pub dropout_prob: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            min_visible: 0.1,
            bbox_jitter_px: 0,
            dropout_prob: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub object_id: String,
    /// Master seed; every stage derives its own streams from it.
    pub seed: u64,
    pub scenes: u32,
    /// Estimates kept per image and method.
    pub k: usize,
    /// Sort methods compared by `select` and `eval`.
    pub methods: Vec<SortMethod>,
    /// Run ICP and use the refined estimates downstream.
    pub use_icp: bool,
    /// `[translation mm, rotation deg]` magnitudes for the AR-vs-noise curve.
    pub noise_levels: Vec<[f64; 2]>,
    pub paths: PathsConfig,
    /// `object_id` and `seed` are replaced by the run-level values.
    pub scene: SceneConfig,
    pub render: RenderConfig,
    pub codebook: CodebookConfig,
    pub crop: CropSpec,
    pub translation: TranslationConfig,
    pub detect: DetectConfig,
    pub selection: SelectionConfig,
    pub icp: IcpConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            object_id: "bracket".into(),
            seed: 0,
            scenes: 20,
            k: 5,
            methods: SortMethod::ALL.to_vec(),
            use_icp: false,
            noise_levels: vec![[0.0, 0.0], [2.0, 2.0], [5.0, 5.0], [10.0, 10.0], [20.0, 20.0]],
            paths: PathsConfig::default(),
            scene: SceneConfig::default(),
            render: RenderConfig::default(),
            codebook: CodebookConfig::default(),
            crop: CropSpec::default(),
            translation: TranslationConfig::default(),
            detect: DetectConfig::default(),
            selection: SelectionConfig::default(),
            icp: IcpConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&formats::read_text(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidValue("k must be at least 1".into()));
        }
        if self.object_id.is_empty() || self.object_id.chars().any(char::is_whitespace) {
            return Err(Error::InvalidValue(format!("invalid object id {:?}", self.object_id)));
        }
        if self.codebook.size == 0 {
            return Err(Error::InvalidValue("codebook size must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidValue("at least one sort method required".into()));
        }
        if self.noise_levels.iter().flatten().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidValue("noise levels must be finite and nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.detect.dropout_prob) || !(0.0..=1.0).contains(&self.detect.min_visible) {
            return Err(Error::InvalidValue("detection probabilities must be in [0, 1]".into()));
        }
        self.scene_config().validate()?;
        self.render.validate()?;
        self.codebook.embedder.validate()?;
        self.crop.validate()?;
        self.selection.validate()?;
        self.icp.validate()?;
        self.eval.validate()?;
        if self.crop.output_size != self.codebook.embedder.crop_size {
            return Err(Error::InvalidValue(format!(
                "crop output size {} differs from embedder input {}",
                self.crop.output_size, self.codebook.embedder.crop_size
            )));
        }
        Ok(())
    }

    /// Scene parameters with the run-level object id and a seed derived from
    /// the master seed.
    pub fn scene_config(&self) -> SceneConfig {
        SceneConfig {
            object_id: self.object_id.clone(),
            seed: seed::derive(self.seed, "genscenes", 0),
            ..self.scene.clone()
        }
    }

    /// Output root: `paths.out`, then the environment, then the default.
    pub fn resolve_out(&self) -> PathBuf {
        self.paths
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: serde_json::Value,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    /// Hash recorded for `key`: as an output of the stage that produced it,
    /// otherwise as an input of any stage other than `reader`.
    pub fn recorded_hash(&self, key: &str, reader: Stage) -> Option<&str> {
        self.stages
            .values()
            .find_map(|r| r.outputs.get(key))
            .or_else(|| {
                self.stages
                    .iter()
                    .filter(|(name, _)| name.as_str() != reader.name())
                    .find_map(|(_, r)| r.inputs.get(key))
            })
            .map(String::as_str)
    }
}

/// Selected estimates of one image for one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSelection {
    pub method: SortMethod,
    /// Positions in `estimates`.
    pub chosen: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageSelection {
    pub image_id: u32,
    pub estimates: Vec<ScoredEstimate>,
    pub top_k: Vec<MethodSelection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub k: usize,
    pub variant: crate::select_refine::ErrorVariant,
    pub images: Vec<ImageSelection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcpRecord {
    pub image_id: u32,
    pub detection_index: usize,
    pub rms: f64,
    pub iterations: u32,
    pub status: IcpStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineOutput {
    pub images: Vec<ImageEstimates>,
    pub icp: Vec<IcpRecord>,
}

/// Runs stages for one configuration inside one output directory.
pub struct Runner {
    cfg: RunConfig,
    out: PathBuf,
    mesh: TriangleMesh,
    sym: SymmetrySet,
}

struct StageIo<'a> {
    runner: &'a Runner,
    inputs: BTreeMap<String, String>,
    outputs: Vec<(String, PathBuf, Vec<u8>)>,
}

impl StageIo<'_> {
    fn read(&mut self, what: &str, path: &Path) -> Result<Vec<u8>> {
        if !path.exists() {
            return Err(Error::Missing {
                what: what.into(),
                path: path.to_path_buf(),
            });
        }
        let bytes = formats::read_bytes(path)?;
        self.inputs.insert(self.runner.key(path), sha256_hex(&bytes));
        Ok(bytes)
    }

    fn read_text(&mut self, what: &str, path: &Path) -> Result<String> {
        String::from_utf8(self.read(what, path)?).map_err(|_| Error::Format(format!("{} is not UTF-8", path.display())))
    }

    fn read_json<T: serde::de::DeserializeOwned>(&mut self, what: &str, path: &Path) -> Result<T> {
        let text = self.read_text(what, path)?;
        formats::parse_json(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    fn write(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.outputs.push((self.runner.key(&path), path, bytes));
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneData {
    pub gt: SceneGt,
    pub depth: DepthImage,
    pub instances: crate::render::InstanceMap,
    pub gray: crate::render::GrayImage,
}

impl Runner {
    pub fn new(cfg: RunConfig, out: impl Into<PathBuf>) -> Result<Self> {
        cfg.validate()?;
        let mesh = match &cfg.paths.mesh {
            Some(p) => {
                if !p.exists() {
                    return Err(Error::Missing {
                        what: "mesh".into(),
                        path: p.clone(),
                    });
                }
                TriangleMesh::load(p)?
            }
            None => shapes::bracket(),
        };
        let sym = match &cfg.paths.symmetry {
            Some(p) => SymmetrySet::load(p)?,
            None => SymmetrySet::trivial(),
        };
        Ok(Self {
            cfg,
            out: out.into(),
            mesh,
            sym,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    fn key(&self, path: &Path) -> String {
        let rel = path.strip_prefix(&self.out).unwrap_or(path);
        rel.components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/")
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.cfg.paths.dataset.clone().unwrap_or_else(|| self.out.join("dataset"))
    }

    pub fn codebook_path(&self) -> PathBuf {
        self.cfg.paths.codebook.clone().unwrap_or_else(|| self.out.join("codebook.txt"))
    }

    pub fn detections_path(&self) -> PathBuf {
        self.cfg.paths.detections.clone().unwrap_or_else(|| self.out.join("detections.json"))
    }

    pub fn estimates_path(&self) -> PathBuf {
        self.out.join("estimates.json")
    }

    pub fn refined_path(&self) -> PathBuf {
        self.out.join("refined.json")
    }

    pub fn selection_path(&self) -> PathBuf {
        self.out.join("selection.json")
    }

    pub fn eval_path(&self) -> PathBuf {
        self.out.join("eval.json")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.out.join("report")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out.join("manifest.json")
    }

    fn scene_dir(&self, i: u32) -> PathBuf {
        self.dataset_dir().join(format!("scene_{i:06}"))
    }

    pub fn translation_mode(&self) -> TranslationMode {
        let t = &self.cfg.translation;
        TranslationMode {
            kind: t.kind,
            window: t.window,
            surface_offset: match t.kind {
                TranslationKind::DepthCenter => t.surface_offset.unwrap_or_else(|| default_surface_offset(&self.mesh)),
                TranslationKind::RgbScale => 0.0,
            },
        }
    }

    pub fn load_manifest(&self) -> Result<Manifest> {
        let p = self.manifest_path();
        if p.exists() {
            formats::read_json(&p)
        } else {
            Ok(Manifest::default())
        }
    }

    /// Stages of a full run in order; `refine` only when ICP is enabled.
    pub fn chain(&self) -> Vec<Stage> {
        Stage::ALL
            .into_iter()
            .filter(|s| *s != Stage::Refine || self.cfg.use_icp)
            .collect()
    }

    pub fn run_all(&self) -> Result<()> {
        for s in self.chain() {
            self.run(s)?;
        }
        Ok(())
    }

    pub fn run(&self, stage: Stage) -> Result<()> {
        let start = Instant::now();
        let mut io = StageIo {
            runner: self,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        };
        match stage {
            Stage::Genscenes => self.genscenes(&mut io)?,
            Stage::Codebook => self.codebook(&mut io)?,
            Stage::DetectGt => self.detect_gt(&mut io)?,
            Stage::Estimate => self.estimate(&mut io)?,
            Stage::Refine => self.refine(&mut io)?,
            Stage::Select => self.select(&mut io)?,
            Stage::Eval => self.eval(&mut io)?,
            Stage::Report => self.report(&mut io)?,
        }
        self.commit(stage, io)?;
        self.record_timing(stage, start.elapsed().as_secs_f64())?;
        log::info!("{} done in {:.2}s", stage.name(), start.elapsed().as_secs_f64());
        Ok(())
    }

    fn commit(&self, stage: Stage, io: StageIo<'_>) -> Result<()> {
        if stage == Stage::Genscenes {
            let dir = self.dataset_dir();
            if dir.exists() {
                std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            }
        }
        let mut record = StageRecord {
            inputs: io.inputs,
            outputs: BTreeMap::new(),
        };
        let mut written: Vec<PathBuf> = Vec::new();
        for (key, path, bytes) in &io.outputs {
            if let Err(e) = formats::write_bytes(path, bytes) {
                for p in &written {
                    let _ = std::fs::remove_file(p);
                }
                return Err(e);
            }
            written.push(path.clone());
            record.outputs.insert(key.clone(), sha256_hex(bytes));
        }
        let mut manifest = self.load_manifest()?;
        manifest.config = serde_json::to_value(&self.cfg).map_err(|e| Error::Format(e.to_string()))?;
        manifest.stages.insert(stage.name().into(), record);
        formats::write_bytes(&self.manifest_path(), &json_bytes(&manifest)?)
    }

    fn record_timing(&self, stage: Stage, secs: f64) -> Result<()> {
        let path = self.out.join("timings.json");
        let mut t: BTreeMap<String, f64> = if path.exists() {
            formats::read_json(&path).unwrap_or_default()
        } else {
            BTreeMap::new()
        };
        t.insert(stage.name().into(), secs);
        formats::write_json(&path, &t)
    }

    fn genscenes(&self, io: &mut StageIo<'_>) -> Result<()> {
        let scfg = self.cfg.scene_config();
        let scenes: Vec<Result<_>> = (0..self.cfg.scenes)
            .into_par_iter()
            .map(|i| generate_scene(&scfg, &self.mesh, &self.cfg.render, i))
            .collect();
        for (i, s) in scenes.into_iter().enumerate() {
            let s = s?;
            let dir = self.scene_dir(i as u32);
            io.write(dir.join("gt.json"), json_bytes(&s.gt)?);
            io.write(dir.join("depth.pgm"), pnm::encode_u16(&s.render.depth));
            io.write(dir.join("instances.pgm"), pnm::encode_u16(&s.render.instances));
            io.write(dir.join("gray.pgm"), pnm::encode_gray8(&s.render.gray));
        }
        Ok(())
    }

    fn codebook(&self, io: &mut StageIo<'_>) -> Result<()> {
        let c = &self.cfg.codebook;
        let rotations = sample_rotations(c.size, seed::derive(self.cfg.seed, "codebook", 0))?;
        let embedder = c.embedder.build()?;
        let built = build_codebook(&self.cfg.object_id, &self.mesh, &rotations, &embedder, &self.cfg.crop, &self.cfg.render, c.z_ref)?;
        io.write(self.codebook_path(), built.codebook.to_text().into_bytes());
        Ok(())
    }

    fn read_gt(&self, io: &mut StageIo<'_>, i: u32) -> Result<SceneGt> {
        let gt: SceneGt = io.read_json("scene ground truth", &self.scene_dir(i).join("gt.json"))?;
        if gt.image_id != i {
            return Err(Error::InvalidValue(format!("scene {i} has image id {}", gt.image_id)));
        }
        Ok(gt)
    }

    fn read_depth(&self, io: &mut StageIo<'_>, i: u32) -> Result<DepthImage> {
        pnm::decode_u16(&io.read("depth image", &self.scene_dir(i).join("depth.pgm"))?)
    }

    pub fn load_scene(&self, i: u32) -> Result<SceneData> {
        let dir = self.scene_dir(i);
        Ok(SceneData {
            gt: formats::read_json(&dir.join("gt.json"))?,
            depth: pnm::read_depth(&dir.join("depth.pgm"))?,
            instances: pnm::read_instances(&dir.join("instances.pgm"))?,
            gray: pnm::read_gray(&dir.join("gray.pgm"))?,
        })
    }

    fn gt_detection_set(&self, io: &mut StageIo<'_>, perturb: Option<&DetectionPerturbation>, min_visible: f64) -> Result<DetectionSet> {
        let mut set = Vec::new();
        for i in 0..self.cfg.scenes {
            let gt = self.read_gt(io, i)?;
            let inst = pnm::decode_u16(&io.read("instance map", &self.scene_dir(i).join("instances.pgm"))?)?;
            set.push(gt_detections(&inst, &gt, min_visible, perturb));
        }
        Ok(set)
    }

    fn detect_gt(&self, io: &mut StageIo<'_>) -> Result<()> {
        let d = &self.cfg.detect;
        let perturb = (d.bbox_jitter_px > 0 || d.dropout_prob > 0.0).then(|| DetectionPerturbation {
            seed: seed::derive(self.cfg.seed, "detect-gt", 0),
            bbox_jitter_px: d.bbox_jitter_px,
            dropout_prob: d.dropout_prob,
        });
        let set = self.gt_detection_set(io, perturb.as_ref(), d.min_visible)?;
        io.write(self.detections_path(), json_bytes(&set)?);
        Ok(())
    }

    fn read_detections(&self, io: &mut StageIo<'_>) -> Result<DetectionSet> {
        let set: DetectionSet = io.read_json("detections", &self.detections_path())?;
        for d in &set {
            d.validate()?;
        }
        Ok(set)
    }

    fn detections_for(set: &DetectionSet, image_id: u32) -> Result<&ImageDetections> {
        set.iter()
            .find(|d| d.image_id == image_id)
            .ok_or_else(|| Error::InvalidValue(format!("no detections entry for image {image_id}")))
    }

    fn estimate(&self, io: &mut StageIo<'_>) -> Result<()> {
        let cb_path = self.codebook_path();
        let cb = Codebook::from_text(&io.read_text("codebook", &cb_path)?)?;
        let embedder = self.cfg.codebook.embedder.build()?;
        if cb.embedder_id != embedder.id() || !cb.embedder_params.starts_with(&embedder.fingerprint()) {
            return Err(Error::InvalidValue(format!(
                "codebook embedder {} ({}) does not match the configured embedder",
                cb.embedder_id, cb.embedder_params
            )));
        }
        if cb.object_id != self.cfg.object_id {
            return Err(Error::ObjectMismatch {
                codebook: cb.object_id.clone(),
                requested: self.cfg.object_id.clone(),
            });
        }
        if cb.render_fingerprint != self.cfg.render.fingerprint() {
            log::warn!("codebook was rendered with different settings");
        }
        let dets = self.read_detections(io)?;
        let mode = self.translation_mode();
        let ctx = EstimationContext {
            codebook: &cb,
            embedder: &embedder,
            crop: &self.cfg.crop,
            mode: &mode,
            intrinsics: &self.cfg.render.intrinsics,
        };
        let mut out = Vec::new();
        for i in 0..self.cfg.scenes {
            let gray = pnm::decode_gray(&io.read("gray image", &self.scene_dir(i).join("gray.pgm"))?)?;
            let depth = match mode.kind {
                TranslationKind::DepthCenter => Some(self.read_depth(io, i)?),
                TranslationKind::RgbScale => None,
            };
            let est = estimate_poses(&gray, depth.as_ref(), Self::detections_for(&dets, i)?, &ctx)?;
            if !est.skipped.is_empty() {
                log::info!("image {i}: skipped {} detections", est.skipped.len());
            }
            out.push(est);
        }
        io.write(self.estimates_path(), json_bytes(&out)?);
        Ok(())
    }

    fn refine(&self, io: &mut StageIo<'_>) -> Result<()> {
        let mut images: Vec<ImageEstimates> = io.read_json("estimates", &self.estimates_path())?;
        let dets = self.read_detections(io)?;
        let model = IcpModel::new(&self.mesh, &self.cfg.icp)?;
        let k = &self.cfg.render.intrinsics;
        let mut records = Vec::new();
        for img in &mut images {
            let depth = self.read_depth(io, img.image_id)?;
            let det_set = Self::detections_for(&dets, img.image_id)?;
            let results: Vec<Result<Option<(Pose, IcpRecord)>>> = img
                .estimates
                .par_iter()
                .map(|e| {
                    let det = det_set
                        .detections
                        .get(e.detection_index)
                        .ok_or_else(|| Error::InvalidValue(format!("detection {} missing", e.detection_index)))?;
                    let obs = observation_cloud(&depth, &det.mask.decode()?, k)?;
                    if obs.is_empty() {
                        return Ok(None);
                    }
                    let r = icp_refine_with(&model, &obs, &e.pose()?, &self.cfg.icp)?;
                    Ok(Some((
                        r.pose,
                        IcpRecord {
                            image_id: e.image_id,
                            detection_index: e.detection_index,
                            rms: r.rms,
                            iterations: r.iterations,
                            status: r.status,
                        },
                    )))
                })
                .collect();
            for (e, r) in img.estimates.iter_mut().zip(results) {
                if let Some((pose, rec)) = r? {
                    e.pose = PoseRecord::from(&pose);
                    e.refined = true;
                    records.push(rec);
                }
            }
        }
        io.write(
            self.refined_path(),
            json_bytes(&RefineOutput {
                images,
                icp: records,
            })?,
        );
        Ok(())
    }

    fn read_estimates(&self, io: &mut StageIo<'_>) -> Result<Vec<ImageEstimates>> {
        if self.cfg.use_icp {
            let r: RefineOutput = io.read_json("refined estimates", &self.refined_path())?;
            Ok(r.images)
        } else {
            io.read_json("estimates", &self.estimates_path())
        }
    }

    fn select(&self, io: &mut StageIo<'_>) -> Result<()> {
        let images = self.read_estimates(io)?;
        let dets = self.read_detections(io)?;
        let mut out = Vec::new();
        for img in images {
            let depth = self.read_depth(io, img.image_id)?;
            let det_set = Self::detections_for(&dets, img.image_id)?;
            let masks = img
                .estimates
                .iter()
                .map(|e| {
                    det_set
                        .detections
                        .get(e.detection_index)
                        .ok_or_else(|| Error::InvalidValue(format!("detection {} missing", e.detection_index)))?
                        .mask
                        .decode()
                })
                .collect::<Result<Vec<_>>>()?;
            let scores = score_estimates(&img.estimates, &masks, &depth, &self.mesh, &self.cfg.render, &self.cfg.selection)?;
            let estimates: Vec<ScoredEstimate> = img
                .estimates
                .into_iter()
                .zip(scores)
                .map(|(estimate, s)| ScoredEstimate {
                    estimate,
                    selection: Some(s),
                })
                .collect();
            let top_k = self
                .cfg
                .methods
                .iter()
                .map(|&method| {
                    Ok(MethodSelection {
                        method,
                        chosen: select_top_k(&estimates, method, self.cfg.selection.variant, self.cfg.k)?,
                    })
                })
                .collect::<Result<_>>()?;
            out.push(ImageSelection {
                image_id: img.image_id,
                estimates,
                top_k,
            });
        }
        let report = SelectionReport {
            k: self.cfg.k,
            variant: self.cfg.selection.variant,
            images: out,
        };
        io.write(self.selection_path(), json_bytes(&report)?);
        Ok(())
    }

    /// Refuses inputs whose content differs from what the manifest recorded.
    fn verify_inputs(&self, io: &StageIo<'_>) -> Result<()> {
        let manifest = self.load_manifest()?;
        for (key, hash) in &io.inputs {
            if manifest.recorded_hash(key, Stage::Eval) != Some(hash.as_str()) {
                return Err(Error::HashMismatch { path: PathBuf::from(key) });
            }
        }
        Ok(())
    }

    fn eval(&self, io: &mut StageIo<'_>) -> Result<()> {
        let sel: SelectionReport = io.read_json("selection", &self.selection_path())?;
        let dets = self.read_detections(io)?;
        let obj = EvalObject::new(&self.mesh, &self.sym);
        let ecfg = &self.cfg.eval;
        let rcfg = &self.cfg.render;
        let mut per_method: BTreeMap<SortMethod, Vec<Option<PoseError>>> = BTreeMap::new();
        let mut noise: Vec<Vec<Option<PoseError>>> = vec![Vec::new(); self.cfg.noise_levels.len()];
        let mut gt_boxes = Vec::new();
        let mut n_images = 0;
        for i in 0..self.cfg.scenes {
            let gt = self.read_gt(io, i)?;
            let depth = self.read_depth(io, i)?;
            let inst = pnm::decode_u16(&io.read("instance map", &self.scene_dir(i).join("instances.pgm"))?)?;
            gt_boxes.push(gt_detections(&inst, &gt, ecfg.visibility_threshold, None));
            n_images += 1;
            if let Some(img) = sel.images.iter().find(|s| s.image_id == i) {
                for m in &img.top_k {
                    let poses = m
                        .chosen
                        .iter()
                        .map(|&j| {
                            img.estimates
                                .get(j)
                                .ok_or_else(|| Error::InvalidValue(format!("selection index {j} out of range")))?
                                .estimate
                                .pose()
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let errs = bopeval::image_errors(&poses, &gt, &obj, &depth, rcfg, ecfg)?;
                    per_method.entry(m.method).or_default().extend(errs);
                }
            }
            for (li, level) in self.cfg.noise_levels.iter().enumerate() {
                noise[li].extend(self.noisy_errors(&gt, &depth, &obj, *level, li)?);
            }
        }
        self.verify_inputs(io)?;
        let d = self.mesh.diameter();
        let w = rcfg.intrinsics.width;
        let methods = self
            .cfg
            .methods
            .iter()
            .map(|m| {
                let errs = per_method.remove(m).unwrap_or_default();
                Ok(MethodRecall {
                    method: *m,
                    n_estimates: errs.len(),
                    n_unmatched: errs.iter().filter(|e| e.is_none()).count(),
                    ar: bopeval::average_recall(&errs, ecfg, d, w)?,
                })
            })
            .collect::<Result<_>>()?;
        let noise = self
            .cfg
            .noise_levels
            .iter()
            .zip(&noise)
            .map(|(l, errs)| {
                Ok(NoiseRecall {
                    translation_mm: l[0],
                    rotation_deg: l[1],
                    n_estimates: errs.len(),
                    ar: bopeval::average_recall(errs, ecfg, d, w)?,
                })
            })
            .collect::<Result<_>>()?;
        let report = EvalReport {
            protocol: MATCHING_PROTOCOL.into(),
            object_id: self.cfg.object_id.clone(),
            translation_mode: self.cfg.translation.kind,
            mask_only: self.cfg.crop.mask_only,
            refined: self.cfg.use_icp,
            k: sel.k,
            n_images,
            methods,
            detection: Some(bopeval::detection_metrics(&dets, &gt_boxes, 100, ecfg.ap_interpolation)?),
            noise,
        };
        io.write(self.eval_path(), json_bytes(&report)?);
        Ok(())
    }

    /// Errors of every sufficiently visible ground-truth pose perturbed by a
    /// fixed translation and rotation magnitude in random directions.
    fn noisy_errors(
        &self,
        gt: &SceneGt,
        depth: &DepthImage,
        obj: &EvalObject<'_>,
        level: [f64; 2],
        level_index: usize,
    ) -> Result<Vec<Option<PoseError>>> {
        let mut rng = seed::rng(self.cfg.seed, &format!("noise-{level_index}"), gt.image_id as u64);
        let mut poses = Vec::new();
        for inst in gt.instances.iter().filter(|i| i.visible_fraction >= self.cfg.eval.visibility_threshold) {
            let p = Pose::try_from(&inst.pose)?;
            let dir = Rotation::random(&mut rng).rotate(&Vec3::x());
            let axis = Rotation::random(&mut rng).rotate(&Vec3::x());
            let r = Rotation::from_axis_angle(&axis, level[1].to_radians());
            poses.push(Pose::new(r.compose(&p.rotation), p.translation + dir * level[0])?.canonicalized());
        }
        bopeval::image_errors(&poses, gt, obj, depth, &self.cfg.render, &self.cfg.eval)
    }

    fn report(&self, io: &mut StageIo<'_>) -> Result<()> {
        let eval: EvalReport = io.read_json("evaluation", &self.eval_path())?;
        let dir = self.report_dir();
        io.write(dir.join("report.txt"), report::text_report(&eval).into_bytes());
        io.write(dir.join("ar.csv"), report::csv(&eval).into_bytes());
        io.write(dir.join("ar_by_method.svg"), report::method_plot(&eval).into_bytes());
        io.write(dir.join("ar_vs_noise.svg"), report::noise_plot(&eval).into_bytes());
        Ok(())
    }
}

pub const MATCHING_PROTOCOL: &str = "greedy in selection order; each estimate takes the unmatched \
ground-truth instance (visible fraction >= threshold) with the smallest MSSD; unmatched estimates count as failures";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRecall {
    pub method: SortMethod,
    pub n_estimates: usize,
    pub n_unmatched: usize,
    /// Absent when there are no estimates.
    pub ar: Option<ArValues>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecall {
    pub translation_mm: f64,
    pub rotation_deg: f64,
    pub n_estimates: usize,
    pub ar: Option<ArValues>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: String,
    pub object_id: String,
    pub translation_mode: TranslationKind,
    pub mask_only: bool,
    pub refined: bool,
    pub k: usize,
    pub n_images: usize,
    pub methods: Vec<MethodRecall>,
    pub detection: Option<DetectionMetrics>,
    pub noise: Vec<NoiseRecall>,
}

impl EvalReport {
    /// Report without any data.
    pub fn empty() -> Self {
        Self {
            protocol: MATCHING_PROTOCOL.into(),
            object_id: String::new(),
            translation_mode: TranslationKind::DepthCenter,
            mask_only: false,
            refined: false,
            k: 0,
            n_images: 0,
            methods: Vec::new(),
            detection: None,
            noise: Vec::new(),
        }
    }
}
