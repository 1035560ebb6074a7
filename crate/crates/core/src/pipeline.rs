//! File-level orchestration behind the command-line driver.

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::candidates::{
    denoise, emit_crop_specs, enumerate_pairs, BackgroundMode, CropSpecDocument, DetectionsFile,
    PairingOptions, DEFAULT_NMS_IOU, DEFAULT_SCORE_THRESHOLD,
};
use crate::embedding::{EmbeddingKind, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::eval::{evaluate_files, EvalReport};
use crate::inference::{infer_labels, InferenceConfig, LabelsFile};
use crate::io_util;
use crate::kb::KnowledgeBase;
use crate::overlay::{extent_of, items_by_image, render_overlay};
use crate::similarity::{cosine_similarity, fuse};
use crate::Real;

pub const MANIFEST_VERSION: u32 = 1;

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageInputs {
    pub crop_specs: PathBuf,
    pub candidate_embeddings: PathBuf,
}

/// Everything one `generate` run needs. Relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_version: Option<String>,
    pub kb: PathBuf,
    pub text_t1: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_t2: Option<PathBuf>,
    /// Fuse the verb-only template family; off = T1-only ablation.
    #[serde(default = "default_true")]
    pub use_t2: bool,
    /// When set, every crop spec must have been produced in this mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_mode: Option<BackgroundMode>,
    pub images: Vec<ImageInputs>,
    pub labels_out: PathBuf,
    #[serde(default)]
    pub inference: InferenceConfig,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: Self = io_util::read_json(path.as_ref())?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "manifest version {} (expected {MANIFEST_VERSION})",
                m.version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io_util::write_json(path.as_ref(), self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSummary {
    pub images: usize,
    pub pairs_in: usize,
    pub labels_out: usize,
    /// Share of candidate pairs judged interacting.
    pub interacting_fraction: f64,
}

fn load_kind(path: &Path, kind: EmbeddingKind) -> Result<EmbeddingMatrix<Real>> {
    let m = EmbeddingMatrix::load(path)?;
    if m.kind() != kind {
        return Err(Error::Format(format!(
            "{} holds {} embeddings, expected {kind}",
            path.display(),
            m.kind()
        )));
    }
    Ok(m)
}

/// Runs similarity fusion and inference for every image of a manifest.
pub fn generate(
    manifest: &RunManifest,
    base: &Path,
) -> Result<(LabelsFile<Real>, GenerateSummary)> {
    let cfg = manifest.inference;
    cfg.validate()?;
    let kb = KnowledgeBase::load(base.join(&manifest.kb))?;
    let n_t = kb.num_hoi();

    let t1 = load_kind(&base.join(&manifest.text_t1), EmbeddingKind::TextT1)?;
    t1.expect_rows(n_t, "text_t1 rows vs HOI categories")?;
    let t2 = if manifest.use_t2 {
        let path = manifest.text_t2.as_ref().ok_or_else(|| {
            Error::validation("use_t2 is set but the manifest names no text_t2 file")
        })?;
        let t2 = load_kind(&base.join(path), EmbeddingKind::TextT2)?;
        t2.expect_rows(n_t, "text_t2 rows vs HOI categories")?;
        if t2.cols() != t1.cols() {
            return Err(Error::alignment(
                "text_t2 feature dimension",
                t1.cols(),
                t2.cols(),
            ));
        }
        Some(t2)
    } else {
        None
    };

    let mut images = Vec::with_capacity(manifest.images.len());
    for inputs in &manifest.images {
        let doc: CropSpecDocument<Real> = CropSpecDocument::load(base.join(&inputs.crop_specs))?;
        if let Some(mode) = manifest.background_mode {
            if let Some(p) = doc.pairs.iter().find(|p| p.background_mode != mode) {
                return Err(Error::validation(format!(
                    "image {:?} pair {} was cropped with background mode {:?}, manifest expects {mode:?}",
                    doc.image_id, p.pair_id, p.background_mode
                )));
            }
        }
        let candidates = load_kind(
            &base.join(&inputs.candidate_embeddings),
            EmbeddingKind::CandidateImage,
        )?;
        images.push((doc, candidates));
    }
    label_images(&kb, &t1, t2.as_ref(), &images, &cfg)
}

/// The in-memory core of [`generate`]: one crop-spec document and its
/// candidate embeddings per image, in output order.
pub fn label_images(
    kb: &KnowledgeBase,
    t1: &EmbeddingMatrix<Real>,
    t2: Option<&EmbeddingMatrix<Real>>,
    images: &[(CropSpecDocument<Real>, EmbeddingMatrix<Real>)],
    cfg: &InferenceConfig,
) -> Result<(LabelsFile<Real>, GenerateSummary)> {
    let mut labels = Vec::new();
    let mut image_ids = Vec::new();
    let mut pairs_in = 0;
    for (doc, candidates) in images {
        let pairs = doc.to_pairs(kb)?;
        candidates.expect_rows(
            pairs.len(),
            &format!("candidate rows vs crop-spec pairs of {:?}", doc.image_id),
        )?;
        pairs_in += pairs.len();
        image_ids.push(doc.image_id.clone());
        if pairs.is_empty() {
            continue;
        }
        let mut sim = cosine_similarity(candidates, t1)?;
        if let Some(t2) = t2 {
            sim = fuse(&sim, &cosine_similarity(candidates, t2)?)?;
        }
        labels.extend(infer_labels(&sim, &pairs, &doc.image_id, kb, cfg)?);
    }

    let summary = GenerateSummary {
        images: image_ids.len(),
        pairs_in,
        labels_out: labels.len(),
        interacting_fraction: if pairs_in == 0 {
            0.0
        } else {
            labels.len() as f64 / pairs_in as f64
        },
    };
    info!(
        "{} pairs in, {} labels out ({:.1}% interacting)",
        summary.pairs_in,
        summary.labels_out,
        summary.interacting_fraction * 100.0
    );
    Ok((LabelsFile::from_labels(&labels, image_ids, cfg), summary))
}

/// Loads a manifest, runs [`generate`] and writes the labels file.
pub fn generate_from_manifest(path: impl AsRef<Path>) -> Result<(PathBuf, GenerateSummary)> {
    let path = path.as_ref();
    let manifest = RunManifest::load(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let (labels, summary) = generate(&manifest, base)?;
    let out = base.join(&manifest.labels_out);
    labels.save(&out)?;
    Ok((out, summary))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairingParams {
    pub score_threshold: f64,
    pub nms_iou: f64,
    pub allow_person_objects: bool,
    pub background_mode: BackgroundMode,
    /// Defaults to the vocabulary entry named "person".
    pub person_category: Option<usize>,
}

impl Default for PairingParams {
    fn default() -> Self {
        PairingParams {
            score_threshold: DEFAULT_SCORE_THRESHOLD,
            nms_iou: DEFAULT_NMS_IOU,
            allow_person_objects: false,
            background_mode: BackgroundMode::Delete,
            person_category: None,
        }
    }
}

fn check_image_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
        return Err(Error::validation(format!(
            "image_id {id:?} cannot be used as a file name"
        )));
    }
    Ok(())
}

/// Denoises, pairs and emits one crop-spec document per image.
pub fn pair_detections(
    detections: &DetectionsFile<Real>,
    kb: &KnowledgeBase,
    params: &PairingParams,
) -> Result<Vec<CropSpecDocument<Real>>> {
    for (name, v) in [
        ("score threshold", params.score_threshold),
        ("NMS IoU", params.nms_iou),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::validation(format!(
                "{name} must lie in [0, 1], got {v}"
            )));
        }
    }
    let person = match params.person_category {
        Some(p) => {
            kb.check_object(p)?;
            p
        }
        None => kb.object_id_by_name("person").ok_or_else(|| {
            Error::validation("no object named \"person\"; pass the person category explicitly")
        })?,
    };
    let opts = PairingOptions {
        person_category: person,
        allow_person_objects: params.allow_person_objects,
        background_mode: params.background_mode,
    };
    detections
        .images
        .iter()
        .map(|img| {
            check_image_id(&img.image_id)?;
            let dets = img.detections(kb.num_objects())?;
            let kept = denoise(
                &dets,
                params.score_threshold as Real,
                params.nms_iou as Real,
            );
            let pairs = enumerate_pairs(&kept, &opts);
            Ok(emit_crop_specs(&pairs, &img.image_id))
        })
        .collect()
}

pub fn crop_spec_path(dir: &Path, image_id: &str) -> PathBuf {
    dir.join(format!("{image_id}.json"))
}

pub fn evaluate_paths(
    labels: impl AsRef<Path>,
    ground_truth: impl AsRef<Path>,
    kb: Option<&KnowledgeBase>,
    iou_threshold: f64,
) -> Result<EvalReport> {
    let labels: LabelsFile<Real> = LabelsFile::load(labels)?;
    let gt: LabelsFile<Real> = LabelsFile::load(ground_truth)?;
    evaluate_files(&labels, &gt, kb, iou_threshold)
}

/// Writes `{image_id}.svg` for every image of a labels or ground-truth file.
/// Frame sizes come from `detections` when given, else from the box extent.
pub fn render_overlays(
    file: &LabelsFile<Real>,
    kb: &KnowledgeBase,
    detections: Option<&DetectionsFile<Real>>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (image_id, items) in items_by_image(file, kb)? {
        check_image_id(&image_id)?;
        let dims = detections
            .and_then(|d| d.images.iter().find(|i| i.image_id == image_id))
            .map(|i| (i.width, i.height))
            .unwrap_or_else(|| extent_of(&items));
        let svg = render_overlay(dims.0, dims.1, &items);
        let path = out_dir.join(format!("{image_id}.svg"));
        io_util::write_atomic(&path, svg.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

/// Templates as JSON lines ordered by hoi_id.
pub fn templates_jsonl(kb: &KnowledgeBase) -> String {
    let mut out = String::new();
    for t in kb.render_templates() {
        out.push_str(&serde_json::to_string(&t).expect("template serialization"));
        out.push('\n');
    }
    out
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    io_util::write_atomic(path.as_ref(), text.as_bytes())
}
