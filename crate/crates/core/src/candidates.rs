//! Detection ingestion, spatial denoising, human-object pairing and crop
//! specifications for the embedding extractor.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::io_util;
use crate::kb::KnowledgeBase;
use crate::scalar::Scalar;

pub const DETECTIONS_VERSION: u32 = 1;
pub const CROP_SPEC_VERSION: u32 = 1;

pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.5;
pub const DEFAULT_NMS_IOU: f64 = 0.7;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection<T> {
    pub det_id: u64,
    pub bbox: BBox<T>,
    pub category: usize,
    pub score: T,
    pub mask_ref: Option<String>,
}

/// What the extractor does with pixels outside the two instance masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundMode {
    Retain,
    #[default]
    Delete,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePair<T> {
    /// Row index into the candidate embedding matrix.
    pub pair_id: usize,
    pub human_det: u64,
    pub object_det: u64,
    pub object_category: usize,
    pub human_box: BBox<T>,
    pub object_box: BBox<T>,
    pub crop: BBox<T>,
    pub human_mask_ref: Option<String>,
    pub object_mask_ref: Option<String>,
    pub background_mode: BackgroundMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairingOptions {
    pub person_category: usize,
    /// Also pair humans with other persons (never with themselves).
    pub allow_person_objects: bool,
    pub background_mode: BackgroundMode,
}

impl PairingOptions {
    pub fn new(person_category: usize) -> Self {
        PairingOptions {
            person_category,
            allow_person_objects: false,
            background_mode: BackgroundMode::Delete,
        }
    }
}

fn rank<T: Scalar>(a: &Detection<T>, b: &Detection<T>) -> Ordering {
    b.score
        .as_f64()
        .total_cmp(&a.score.as_f64())
        .then(a.det_id.cmp(&b.det_id))
}

/// Drops detections scoring below `score_threshold`, then runs greedy
/// per-category NMS: a detection is suppressed by a higher-ranked survivor of
/// its category when they overlap with IoU >= `nms_iou`. Ranking is by score,
/// lower det_id first on ties. Survivors keep their input order.
pub fn denoise<T: Scalar>(
    detections: &[Detection<T>],
    score_threshold: T,
    nms_iou: T,
) -> Vec<Detection<T>> {
    let mut order: Vec<usize> = (0..detections.len())
        .filter(|&i| detections[i].score >= score_threshold)
        .collect();
    order.sort_by(|&a, &b| {
        detections[a]
            .category
            .cmp(&detections[b].category)
            .then_with(|| rank(&detections[a], &detections[b]))
    });

    let mut keep = vec![false; detections.len()];
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        let d = &detections[i];
        let suppressed = kept.iter().any(|&k| {
            let s = &detections[k];
            if s.category != d.category {
                return false;
            }
            let iou = s.bbox.iou(&d.bbox);
            iou > T::zero() && iou >= nms_iou
        });
        if !suppressed {
            keep[i] = true;
            kept.push(i);
        }
    }

    detections
        .iter()
        .zip(keep)
        .filter(|&(_, k)| k)
        .map(|(d, _)| d.clone())
        .collect()
}

/// Pairs every human with every eligible object, ordered by
/// (human det_id, object det_id); pair_ids follow that order from 0.
pub fn enumerate_pairs<T: Scalar>(
    detections: &[Detection<T>],
    opts: &PairingOptions,
) -> Vec<CandidatePair<T>> {
    let mut humans: Vec<&Detection<T>> = detections
        .iter()
        .filter(|d| d.category == opts.person_category)
        .collect();
    let mut objects: Vec<&Detection<T>> = detections
        .iter()
        .filter(|d| d.category != opts.person_category || opts.allow_person_objects)
        .collect();
    humans.sort_by_key(|d| d.det_id);
    objects.sort_by_key(|d| d.det_id);

    let mut pairs = Vec::with_capacity(humans.len() * objects.len());
    for h in &humans {
        for o in objects.iter().filter(|o| o.det_id != h.det_id) {
            pairs.push(CandidatePair {
                pair_id: pairs.len(),
                human_det: h.det_id,
                object_det: o.det_id,
                object_category: o.category,
                human_box: h.bbox,
                object_box: o.bbox,
                crop: h.bbox.union(&o.bbox),
                human_mask_ref: h.mask_ref.clone(),
                object_mask_ref: o.mask_ref.clone(),
                background_mode: opts.background_mode,
            });
        }
    }
    pairs
}

// ---------------------------------------------------------------------------
// Detections file

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DetectionRecord<T> {
    pub det_id: u64,
    pub cx: T,
    pub cy: T,
    pub w: T,
    pub h: T,
    pub category: usize,
    pub score: T,
    #[serde(default)]
    pub mask_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ImageDetections<T> {
    pub image_id: String,
    pub width: T,
    pub height: T,
    pub detections: Vec<DetectionRecord<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DetectionsFile<T> {
    pub version: u32,
    pub images: Vec<ImageDetections<T>>,
}

impl<T: Scalar> DetectionRecord<T> {
    pub fn from_detection(d: &Detection<T>) -> Self {
        DetectionRecord {
            det_id: d.det_id,
            cx: d.bbox.cx,
            cy: d.bbox.cy,
            w: d.bbox.w,
            h: d.bbox.h,
            category: d.category,
            score: d.score,
            mask_ref: d.mask_ref.clone(),
        }
    }
}

impl<T: Scalar> ImageDetections<T> {
    /// Validated detections; `num_objects` bounds the category ids.
    pub fn detections(&self, num_objects: usize) -> Result<Vec<Detection<T>>> {
        let mut ids = HashSet::new();
        self.detections
            .iter()
            .map(|r| {
                let at = || format!("image {:?} det_id {}", self.image_id, r.det_id);
                if !ids.insert(r.det_id) {
                    return Err(Error::validation(format!("{}: duplicate det_id", at())));
                }
                let bbox = BBox::new(r.cx, r.cy, r.w, r.h)
                    .map_err(|e| Error::validation(format!("{}: {e}", at())))?;
                if !(r.score >= T::zero() && r.score <= T::one()) {
                    return Err(Error::validation(format!(
                        "{}: score {} outside [0, 1]",
                        at(),
                        r.score
                    )));
                }
                if r.category >= num_objects {
                    return Err(Error::validation(format!(
                        "{}: unknown category {} (vocabulary has {num_objects} objects)",
                        at(),
                        r.category
                    )));
                }
                Ok(Detection {
                    det_id: r.det_id,
                    bbox,
                    category: r.category,
                    score: r.score,
                    mask_ref: r.mask_ref.clone(),
                })
            })
            .collect()
    }
}

impl<T: Scalar> DetectionsFile<T> {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: Self = io_util::read_json(path.as_ref())?;
        if file.version != DETECTIONS_VERSION {
            return Err(Error::Format(format!(
                "detections file version {} (expected {DETECTIONS_VERSION})",
                file.version
            )));
        }
        let mut ids = HashSet::new();
        for img in &file.images {
            if !ids.insert(img.image_id.as_str()) {
                return Err(Error::validation(format!(
                    "duplicate image_id {:?}",
                    img.image_id
                )));
            }
        }
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io_util::write_json(path.as_ref(), self)
    }
}

// ---------------------------------------------------------------------------
// Crop-spec file

/// One crop instruction. Beyond the crop itself it carries the member boxes
/// and object category so labels can be assembled from crop specs alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CropRecord<T> {
    pub pair_id: usize,
    pub image_id: String,
    pub human_det: u64,
    pub object_det: u64,
    pub object_category: usize,
    pub human_box: BBox<T>,
    pub object_box: BBox<T>,
    pub crop: BBox<T>,
    pub human_mask_ref: Option<String>,
    pub object_mask_ref: Option<String>,
    pub background_mode: BackgroundMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CropSpecDocument<T> {
    pub version: u32,
    pub image_id: String,
    pub pairs: Vec<CropRecord<T>>,
}

pub fn emit_crop_specs<T: Scalar>(
    pairs: &[CandidatePair<T>],
    image_id: &str,
) -> CropSpecDocument<T> {
    let mut records: Vec<CropRecord<T>> = pairs
        .iter()
        .map(|p| CropRecord {
            pair_id: p.pair_id,
            image_id: image_id.to_string(),
            human_det: p.human_det,
            object_det: p.object_det,
            object_category: p.object_category,
            human_box: p.human_box,
            object_box: p.object_box,
            crop: p.crop,
            human_mask_ref: p.human_mask_ref.clone(),
            object_mask_ref: p.object_mask_ref.clone(),
            background_mode: p.background_mode,
        })
        .collect();
    records.sort_by_key(|r| r.pair_id);
    CropSpecDocument {
        version: CROP_SPEC_VERSION,
        image_id: image_id.to_string(),
        pairs: records,
    }
}

impl<T: Scalar> CropSpecDocument<T> {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let doc: Self = io_util::read_json(path.as_ref())?;
        if doc.version != CROP_SPEC_VERSION {
            return Err(Error::Format(format!(
                "crop-spec version {} (expected {CROP_SPEC_VERSION})",
                doc.version
            )));
        }
        Ok(doc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io_util::write_json(path.as_ref(), self)
    }

    /// Rebuilds candidate pairs, checking pair_ids run 0..N and that every
    /// box and category is valid.
    pub fn to_pairs(&self, kb: &KnowledgeBase) -> Result<Vec<CandidatePair<T>>> {
        self.pairs
            .iter()
            .enumerate()
            .map(|(i, r)| {
                if r.pair_id != i {
                    return Err(Error::validation(format!(
                        "crop spec {:?}: pair_id {} at position {i} breaks contiguous numbering",
                        self.image_id, r.pair_id
                    )));
                }
                if r.human_det == r.object_det {
                    return Err(Error::validation(format!(
                        "crop spec {:?}: pair {i} pairs det_id {} with itself",
                        self.image_id, r.human_det
                    )));
                }
                kb.check_object(r.object_category)?;
                for b in [&r.human_box, &r.object_box, &r.crop] {
                    b.validate()?;
                }
                Ok(CandidatePair {
                    pair_id: r.pair_id,
                    human_det: r.human_det,
                    object_det: r.object_det,
                    object_category: r.object_category,
                    human_box: r.human_box,
                    object_box: r.object_box,
                    crop: r.crop,
                    human_mask_ref: r.human_mask_ref.clone(),
                    object_mask_ref: r.object_mask_ref.clone(),
                    background_mode: r.background_mode,
                })
            })
            .collect()
    }
}
