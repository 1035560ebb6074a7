//! Triplet matching against ground truth and all-points interpolated AP.
//!
//! A prediction is a true positive when an unmatched ground-truth triplet in
//! the same image has the same hoi_id and both the human and the object box
//! overlap it with IoU >= the threshold. Predictions are matched greedily in
//! descending score; ties fall back to (image_id, pair_id, hoi_id).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::inference::LabelsFile;
use crate::io_util;
use crate::kb::KnowledgeBase;
use crate::scalar::Scalar;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub image_id: String,
    pub pair_id: usize,
    pub hoi_id: usize,
    pub score: T,
    pub human_box: BBox<T>,
    pub object_box: BBox<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth<T> {
    pub image_id: String,
    pub hoi_id: usize,
    pub human_box: BBox<T>,
    pub object_box: BBox<T>,
}

/// Outcome of greedy matching, predictions in ranked order.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchAssignment {
    /// (prediction index, hoi_id, matched ground-truth index)
    pub ranked: Vec<(usize, usize, Option<usize>)>,
    /// ground-truth count per hoi_id
    pub gt_per_category: BTreeMap<usize, usize>,
}

impl MatchAssignment {
    pub fn num_gt(&self) -> usize {
        self.gt_per_category.values().sum()
    }
}

fn cmp_rank<T: Scalar>(a: &Prediction<T>, b: &Prediction<T>) -> std::cmp::Ordering {
    b.score
        .as_f64()
        .total_cmp(&a.score.as_f64())
        .then_with(|| a.image_id.cmp(&b.image_id))
        .then(a.pair_id.cmp(&b.pair_id))
        .then(a.hoi_id.cmp(&b.hoi_id))
}

pub fn match_predictions<T: Scalar>(
    predictions: &[Prediction<T>],
    ground_truth: &[GroundTruth<T>],
    iou_threshold: T,
) -> MatchAssignment {
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| cmp_rank(&predictions[a], &predictions[b]));

    let mut gt_per_category = BTreeMap::new();
    for g in ground_truth {
        *gt_per_category.entry(g.hoi_id).or_insert(0) += 1;
    }

    let mut taken = vec![false; ground_truth.len()];
    let ranked = order
        .into_iter()
        .map(|pi| {
            let p = &predictions[pi];
            let mut best: Option<(usize, T)> = None;
            for (gi, g) in ground_truth.iter().enumerate() {
                if taken[gi] || g.hoi_id != p.hoi_id || g.image_id != p.image_id {
                    continue;
                }
                let ih = p.human_box.iou(&g.human_box);
                let io = p.object_box.iou(&g.object_box);
                if ih < iou_threshold || io < iou_threshold {
                    continue;
                }
                let overlap = ih.min(io);
                if best.is_none_or(|(_, b)| overlap > b) {
                    best = Some((gi, overlap));
                }
            }
            let matched = best.map(|(gi, _)| gi);
            if let Some(gi) = matched {
                taken[gi] = true;
            }
            (pi, p.hoi_id, matched)
        })
        .collect();

    MatchAssignment {
        ranked,
        gt_per_category,
    }
}

/// All-points interpolated AP of a ranked TP/FP sequence.
pub fn all_points_ap(ranked_tp: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(ranked_tp.len());
    for (k, &is_tp) in ranked_tp.iter().enumerate() {
        if is_tp {
            tp += 1;
        }
        points.push((tp as f64 / num_gt as f64, tp as f64 / (k + 1) as f64));
    }
    // precision envelope, right to left
    for k in (0..points.len().saturating_sub(1)).rev() {
        points[k].1 = points[k].1.max(points[k + 1].1);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (recall, precision) in points {
        if recall > prev_recall {
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
    }
    ap
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAp {
    pub hoi_id: usize,
    pub ap: f64,
    pub num_gt: usize,
    pub tp: usize,
    pub fp: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub iou_threshold: f64,
    /// Unweighted mean over categories with ground truth.
    pub mean_ap: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub num_images: usize,
    pub per_category: Vec<CategoryAp>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub fn average_precision(assignment: &MatchAssignment, iou_threshold: f64) -> EvalReport {
    let mut ranked_by_category: BTreeMap<usize, Vec<bool>> = BTreeMap::new();
    for &(_, hoi, matched) in &assignment.ranked {
        ranked_by_category
            .entry(hoi)
            .or_default()
            .push(matched.is_some());
    }

    let per_category: Vec<CategoryAp> = assignment
        .gt_per_category
        .iter()
        .map(|(&hoi_id, &num_gt)| {
            let ranked = ranked_by_category
                .get(&hoi_id)
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            let tp = ranked.iter().filter(|t| **t).count();
            CategoryAp {
                hoi_id,
                ap: all_points_ap(ranked, num_gt),
                num_gt,
                tp,
                fp: ranked.len() - tp,
            }
        })
        .collect();

    let tp = assignment.ranked.iter().filter(|r| r.2.is_some()).count();
    let fp = assignment.ranked.len() - tp;
    let num_gt = assignment.num_gt();
    let mean_ap = if per_category.is_empty() {
        0.0
    } else {
        per_category.iter().map(|c| c.ap).sum::<f64>() / per_category.len() as f64
    };

    EvalReport {
        version: REPORT_VERSION,
        iou_threshold,
        mean_ap,
        precision: if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        },
        recall: if num_gt == 0 {
            0.0
        } else {
            tp as f64 / num_gt as f64
        },
        tp,
        fp,
        fn_: num_gt - tp,
        num_images: 0,
        per_category,
        warnings: Vec::new(),
    }
}

impl EvalReport {
    pub fn to_json_bytes(&self) -> Vec<u8> {
        io_util::to_json_bytes(self)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io_util::write_atomic(path.as_ref(), &self.to_json_bytes())
    }

    /// Fixed-width text table; action names come from `kb` when given.
    pub fn to_table(&self, kb: Option<&KnowledgeBase>) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>6}  {:<28} {:>6} {:>5} {:>5} {:>8}",
            "hoi_id", "category", "gt", "tp", "fp", "AP"
        );
        for c in &self.per_category {
            let name = kb
                .and_then(|kb| {
                    let h = kb.hoi(c.hoi_id).ok()?;
                    Some(format!(
                        "{} {}",
                        kb.actions()[h.action_id].name,
                        kb.objects()[h.object_id].name
                    ))
                })
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:>6}  {:<28} {:>6} {:>5} {:>5} {:>8.4}",
                c.hoi_id, name, c.num_gt, c.tp, c.fp, c.ap
            );
        }
        let _ = writeln!(
            out,
            "mAP {:.4} over {} categories",
            self.mean_ap,
            self.per_category.len()
        );
        let _ = writeln!(
            out,
            "precision {:.4}  recall {:.4}  TP {}  FP {}  FN {}  images {}",
            self.precision, self.recall, self.tp, self.fp, self.fn_, self.num_images
        );
        out
    }
}

/// Flattens a labels file into one prediction per (pair, action). Actions
/// without a score (a ground-truth file used as predictions) count as 1.
pub fn predictions_from_labels<T: Scalar>(labels: &LabelsFile<T>) -> Result<Vec<Prediction<T>>> {
    let mut out = Vec::new();
    for (k, l) in labels.labels.iter().enumerate() {
        for a in &l.actions {
            let score = a.score.unwrap_or_else(T::one);
            if !score.is_finite() {
                return Err(Error::validation(format!(
                    "label {k} (image {:?}) has a non-finite score",
                    l.image_id
                )));
            }
            out.push(Prediction {
                image_id: l.image_id.clone(),
                pair_id: l.pair_id.unwrap_or(k),
                hoi_id: a.hoi_id,
                score,
                human_box: l.human_box,
                object_box: l.object_box,
            });
        }
    }
    Ok(out)
}

pub fn ground_truth_from_file<T: Scalar>(
    gt: &LabelsFile<T>,
    kb: Option<&KnowledgeBase>,
) -> Result<Vec<GroundTruth<T>>> {
    let mut out = Vec::new();
    for l in &gt.labels {
        for a in &l.actions {
            if let Some(kb) = kb {
                kb.hoi(a.hoi_id)?;
            }
            out.push(GroundTruth {
                image_id: l.image_id.clone(),
                hoi_id: a.hoi_id,
                human_box: l.human_box,
                object_box: l.object_box,
            });
        }
    }
    Ok(out)
}

/// Matches a labels file against a ground-truth file. Images present in only
/// one of them are dropped with a warning.
pub fn evaluate_files<T: Scalar>(
    labels: &LabelsFile<T>,
    ground_truth: &LabelsFile<T>,
    kb: Option<&KnowledgeBase>,
    iou_threshold: f64,
) -> Result<EvalReport> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::validation(format!(
            "IoU threshold must lie in (0, 1], got {iou_threshold}"
        )));
    }
    let label_images: BTreeSet<String> = labels.covered_images().into_iter().collect();
    let gt_images: BTreeSet<String> = ground_truth.covered_images().into_iter().collect();
    let mut warnings = Vec::new();
    for id in label_images.difference(&gt_images) {
        warnings.push(format!(
            "image {id:?} has labels but no ground truth; skipped"
        ));
    }
    for id in gt_images.difference(&label_images) {
        warnings.push(format!(
            "image {id:?} has ground truth but no labels; skipped"
        ));
    }
    for w in &warnings {
        warn!("{w}");
    }
    let common: BTreeSet<&String> = label_images.intersection(&gt_images).collect();

    let preds: Vec<_> = predictions_from_labels(labels)?
        .into_iter()
        .filter(|p| common.contains(&p.image_id))
        .collect();
    let gts: Vec<_> = ground_truth_from_file(ground_truth, kb)?
        .into_iter()
        .filter(|g| common.contains(&g.image_id))
        .collect();

    let assignment = match_predictions(&preds, &gts, T::lit(iou_threshold));
    let mut report = average_precision(&assignment, iou_threshold);
    report.num_images = common.len();
    report.warnings = warnings;
    Ok(report)
}
