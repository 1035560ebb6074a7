//! From a fused similarity matrix to HOI labels.
//!
//! Each candidate row goes through, in order:
//!
//! * the affordance mask (PKM): only HOI categories of the pair's own object
//!   whose action the object affords keep their score, the rest become 0;
//! * correlated amplification (ICM): the top-1 category and the categories
//!   correlated with it are multiplied by `scale`;
//! * the interaction test: `theta = (max - mean) - |max| * omega1`, interacting
//!   iff `theta > 0` (or `max > fixed_threshold` with the dynamic test off);
//! * action selection: the argmax alone (`top1`) or every category within
//!   `(max - |max| * omega2, max]` (`adaption`), argmax always included.
//!
//! Mask and amplification order is configurable; every stage can be disabled
//! so ablations are reproducible from configuration alone.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::candidates::CandidatePair;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::io_util;
use crate::kb::KnowledgeBase;
use crate::scalar::{argmax, order_free_mean, Scalar};
use crate::similarity::SimilarityMatrix;

pub const LABELS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOrder {
    PkmThenIcm,
    IcmThenPkm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Top1,
    Adaption,
}

/// Which entries the interaction test averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMean {
    /// All N_T entries, masked zeros included.
    AllEntries,
    /// Only the entries the affordance mask allows (all entries with PKM off).
    AllowedEntries,
}

/// Inference knobs. The default numbers are unvalidated starting points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    /// Amplification factor for correlated categories, > 1.
    pub scale: f64,
    /// Threshold balance weight in [0, 1].
    pub omega1: f64,
    /// Selection band width in [0, 1].
    pub omega2: f64,
    pub stage_order: StageOrder,
    pub selection: Selection,
    pub icm_enabled: bool,
    pub pkm_enabled: bool,
    pub dynamic_threshold_enabled: bool,
    /// Used as `max(row) > fixed_threshold` when the dynamic test is off.
    pub fixed_threshold: f64,
    pub threshold_mean: ThresholdMean,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            scale: 1.2,
            omega1: 0.4,
            omega2: 0.2,
            stage_order: StageOrder::PkmThenIcm,
            selection: Selection::Adaption,
            icm_enabled: true,
            pkm_enabled: true,
            dynamic_threshold_enabled: true,
            fixed_threshold: 0.5,
            threshold_mean: ThresholdMean::AllEntries,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 1.0) {
            return Err(Error::validation(format!(
                "scale must be a finite value > 1, got {}",
                self.scale
            )));
        }
        for (name, v) in [("omega1", self.omega1), ("omega2", self.omega2)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        if self.fixed_threshold.is_nan() {
            return Err(Error::validation("fixed_threshold is NaN"));
        }
        Ok(())
    }

    /// Stable SHA-256 over a canonical rendering of every field.
    pub fn digest(&self) -> String {
        let canonical = format!(
            "scale={:?};omega1={:?};omega2={:?};stage_order={:?};selection={:?};icm={};pkm={};\
             dynamic={};fixed_threshold={:?};threshold_mean={:?}",
            self.scale,
            self.omega1,
            self.omega2,
            self.stage_order,
            self.selection,
            self.icm_enabled,
            self.pkm_enabled,
            self.dynamic_threshold_enabled,
            self.fixed_threshold,
            self.threshold_mean,
        );
        format!(
            "sha256:{}",
            hex::encode(Sha256::digest(canonical.as_bytes()))
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdDecision<T> {
    pub theta: T,
    pub interacting: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ActionScore<T> {
    pub hoi_id: usize,
    pub score: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoiLabel<T> {
    pub image_id: String,
    pub pair_id: usize,
    pub human_box: BBox<T>,
    pub object_box: BBox<T>,
    pub object_category: usize,
    /// Selected categories in ascending hoi_id with their final scores.
    pub actions: Vec<ActionScore<T>>,
}

fn check_row_len<T>(row: &[T], kb: &KnowledgeBase) -> Result<()> {
    if row.len() == kb.num_hoi() {
        Ok(())
    } else {
        Err(Error::alignment(
            "similarity row length (N_T)",
            kb.num_hoi(),
            row.len(),
        ))
    }
}

fn row_max<T: Scalar>(row: &[T]) -> T {
    row.iter().copied().fold(T::neg_infinity(), T::max)
}

/// Zeroes every category the pair's object cannot realize.
pub fn pkm_mask<T: Scalar>(
    row: &[T],
    object_category: usize,
    kb: &KnowledgeBase,
) -> Result<Vec<T>> {
    check_row_len(row, kb)?;
    let mut out = vec![T::zero(); row.len()];
    for &j in kb.allowed_hois(object_category)? {
        out[j] = row[j];
    }
    Ok(out)
}

/// Multiplies the top-1 category and its correlated set by `scale`. Rows
/// without a positive entry are returned unchanged.
pub fn icm_amplify<T: Scalar>(row: &[T], kb: &KnowledgeBase, scale: T) -> Result<Vec<T>> {
    check_row_len(row, kb)?;
    let mut out = row.to_vec();
    let Some(top) = argmax(row) else {
        return Ok(out);
    };
    if row[top] <= T::zero() {
        return Ok(out);
    }
    for &j in kb.lookup_correlated(top)? {
        out[j] = out[j] * scale;
    }
    Ok(out)
}

// The penalty uses |max| so a negative row is not rewarded for a larger omega1.
fn theta_of<T: Scalar>(max: T, mean: T, omega1: T) -> T {
    (max - mean) - max.abs() * omega1
}

/// Max-minus-mean interaction test over the whole row.
pub fn dynamic_threshold<T: Scalar>(row: &[T], omega1: T) -> Result<ThresholdDecision<T>> {
    if row.is_empty() {
        return Err(Error::validation("interaction test on an empty row"));
    }
    let theta = theta_of(row_max(row), order_free_mean(row), omega1);
    Ok(ThresholdDecision {
        theta,
        interacting: theta > T::zero(),
    })
}

/// Selects categories from an interacting row; ascending indices.
pub fn action_filter<T: Scalar>(
    row: &[T],
    decision: &ThresholdDecision<T>,
    omega2: T,
    selection: Selection,
) -> Result<Vec<usize>> {
    if !decision.interacting {
        return Err(Error::NotInteracting {
            theta: decision.theta.as_f64(),
        });
    }
    let top = argmax(row).ok_or_else(|| Error::validation("action filter on an empty row"))?;
    match selection {
        Selection::Top1 => Ok(vec![top]),
        Selection::Adaption => {
            let max = row[top];
            let lower = max - max.abs() * omega2;
            Ok((0..row.len())
                .filter(|&j| j == top || (row[j] > lower && row[j] <= max))
                .collect())
        }
    }
}

/// Runs every enabled stage on one row. `None` when the row shows no
/// interaction.
pub fn infer_row<T: Scalar>(
    row: &[T],
    object_category: usize,
    kb: &KnowledgeBase,
    cfg: &InferenceConfig,
) -> Result<Option<Vec<ActionScore<T>>>> {
    check_row_len(row, kb)?;
    let allowed = if cfg.pkm_enabled {
        let allowed = kb.allowed_hois(object_category)?;
        if allowed.is_empty() {
            return Ok(None);
        }
        Some(allowed)
    } else {
        kb.check_object(object_category)?;
        None
    };

    let mut scores = row.to_vec();
    let stages = match cfg.stage_order {
        StageOrder::PkmThenIcm => [Stage::Pkm, Stage::Icm],
        StageOrder::IcmThenPkm => [Stage::Icm, Stage::Pkm],
    };
    for stage in stages {
        match stage {
            Stage::Pkm if cfg.pkm_enabled => scores = pkm_mask(&scores, object_category, kb)?,
            Stage::Icm if cfg.icm_enabled => scores = icm_amplify(&scores, kb, T::lit(cfg.scale))?,
            _ => {}
        }
    }

    let eligible: Vec<usize> = match allowed {
        Some(a) => a.to_vec(),
        None => (0..scores.len()).collect(),
    };
    let eligible_scores: Vec<T> = eligible.iter().map(|&j| scores[j]).collect();

    let max = row_max(&scores);
    let decision = if cfg.dynamic_threshold_enabled {
        let mean = match cfg.threshold_mean {
            ThresholdMean::AllEntries => order_free_mean(&scores),
            ThresholdMean::AllowedEntries => order_free_mean(&eligible_scores),
        };
        let theta = theta_of(max, mean, T::lit(cfg.omega1));
        ThresholdDecision {
            theta,
            interacting: theta > T::zero(),
        }
    } else {
        let fixed = T::lit(cfg.fixed_threshold);
        ThresholdDecision {
            theta: max - fixed,
            interacting: max > fixed,
        }
    };
    if !decision.interacting {
        return Ok(None);
    }

    let picked = action_filter(
        &eligible_scores,
        &decision,
        T::lit(cfg.omega2),
        cfg.selection,
    )?;
    Ok(Some(
        picked
            .into_iter()
            .map(|k| ActionScore {
                hoi_id: eligible[k],
                score: eligible_scores[k],
            })
            .collect(),
    ))
}

#[derive(Clone, Copy)]
enum Stage {
    Pkm,
    Icm,
}

/// Labels for one image. Row `i` of `sim` belongs to `pairs[i]`; output keeps
/// pair order regardless of how rows are scheduled.
pub fn infer_labels<T: Scalar>(
    sim: &SimilarityMatrix<T>,
    pairs: &[CandidatePair<T>],
    image_id: &str,
    kb: &KnowledgeBase,
    cfg: &InferenceConfig,
) -> Result<Vec<HoiLabel<T>>> {
    cfg.validate()?;
    if sim.rows() != pairs.len() {
        return Err(Error::alignment(
            format!("similarity rows vs candidate pairs for image {image_id:?}"),
            pairs.len(),
            sim.rows(),
        ));
    }
    if sim.cols() != kb.num_hoi() {
        return Err(Error::alignment(
            "similarity columns (N_T)",
            kb.num_hoi(),
            sim.cols(),
        ));
    }

    let rows: Vec<Option<HoiLabel<T>>> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| {
            let actions = infer_row(sim.row(i), pair.object_category, kb, cfg)?;
            Ok(actions.map(|actions| HoiLabel {
                image_id: image_id.to_string(),
                pair_id: pair.pair_id,
                human_box: pair.human_box,
                object_box: pair.object_box,
                object_category: pair.object_category,
                actions,
            }))
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

// ---------------------------------------------------------------------------
// Labels file. Ground-truth files share the schema without scores or digest.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ActionRecord<T> {
    pub hoi_id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LabelRecord<T> {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<usize>,
    pub human_box: BBox<T>,
    pub object_box: BBox<T>,
    pub object_category: usize,
    pub actions: Vec<ActionRecord<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LabelsFile<T> {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
    /// Every image the file covers, including images without labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ids: Option<Vec<String>>,
    pub labels: Vec<LabelRecord<T>>,
}

impl<T: Scalar> From<&HoiLabel<T>> for LabelRecord<T> {
    fn from(l: &HoiLabel<T>) -> Self {
        LabelRecord {
            image_id: l.image_id.clone(),
            pair_id: Some(l.pair_id),
            human_box: l.human_box,
            object_box: l.object_box,
            object_category: l.object_category,
            actions: l
                .actions
                .iter()
                .map(|a| ActionRecord {
                    hoi_id: a.hoi_id,
                    score: Some(a.score),
                })
                .collect(),
        }
    }
}

impl<T: Scalar> LabelsFile<T> {
    pub fn from_labels(
        labels: &[HoiLabel<T>],
        image_ids: Vec<String>,
        cfg: &InferenceConfig,
    ) -> Self {
        LabelsFile {
            version: LABELS_VERSION,
            config_digest: Some(cfg.digest()),
            image_ids: Some(image_ids),
            labels: labels.iter().map(LabelRecord::from).collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: Self = io_util::read_json(path.as_ref())?;
        if file.version != LABELS_VERSION {
            return Err(Error::Format(format!(
                "labels file version {} (expected {LABELS_VERSION})",
                file.version
            )));
        }
        for l in &file.labels {
            l.human_box.validate()?;
            l.object_box.validate()?;
        }
        Ok(file)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        io_util::to_json_bytes(self)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io_util::write_atomic(path.as_ref(), &self.to_bytes())
    }

    /// Image ids in the order the file lists them.
    pub fn covered_images(&self) -> Vec<String> {
        match &self.image_ids {
            Some(ids) => ids.clone(),
            None => {
                let mut ids: Vec<String> = Vec::new();
                for l in &self.labels {
                    if !ids.contains(&l.image_id) {
                        ids.push(l.image_id.clone());
                    }
                }
                ids
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::BackgroundMode;

    fn mini() -> KnowledgeBase {
        KnowledgeBase::from_json(include_str!("../data/mini_kb.json")).unwrap()
    }

    fn hoi(kb: &KnowledgeBase, action: &str, object: &str) -> usize {
        kb.hoi_categories()
            .iter()
            .find(|h| {
                kb.actions()[h.action_id].name == action && kb.objects()[h.object_id].name == object
            })
            .unwrap()
            .hoi_id
    }

    /// Three categories, one object, `0` correlated with `1`.
    fn tiny_kb() -> KnowledgeBase {
        KnowledgeBase::from_json(
            r#"{"version":1,
              "actions":[{"action_id":0,"name":"a","gerund":"a-ing"},
                         {"action_id":1,"name":"b","gerund":"b-ing"},
                         {"action_id":2,"name":"c","gerund":"c-ing"}],
              "objects":[{"object_id":0,"name":"person","article_phrase":"a person"},
                         {"object_id":1,"name":"thing","article_phrase":"a thing"}],
              "hoi_categories":[{"hoi_id":0,"action_id":0,"object_id":1},
                                {"hoi_id":1,"action_id":1,"object_id":1},
                                {"hoi_id":2,"action_id":2,"object_id":1}],
              "correlation":{"0":[0,1]},
              "affordance":{"0":[0],"1":[0,1,2]}}"#,
        )
        .unwrap()
    }

    #[test]
    fn pkm_keeps_only_plausible_categories_of_the_object() {
        let kb = mini();
        let apple = kb.object_id_by_name("apple").unwrap();
        let row = vec![1.0f64; kb.num_hoi()];
        let out = pkm_mask(&row, apple, &kb).unwrap();
        assert_eq!(out[hoi(&kb, "eat", "apple")], 1.0);
        assert_eq!(out[hoi(&kb, "pick", "apple")], 1.0);
        assert_eq!(out[hoi(&kb, "ride", "apple")], 0.0);
        assert_eq!(out[hoi(&kb, "ride", "motorcycle")], 0.0);
        assert!(pkm_mask(&row, kb.num_objects(), &kb).is_err());
        assert!(pkm_mask(&row[1..], apple, &kb).is_err());
    }

    #[test]
    fn pkm_with_full_affordance_is_an_object_slice() {
        let kb = tiny_kb();
        let row = [0.3f32, 0.2, 0.1];
        assert_eq!(pkm_mask(&row, 1, &kb).unwrap(), row);
        assert_eq!(pkm_mask(&row, 0, &kb).unwrap(), [0.0; 3]);
    }

    #[test]
    fn pkm_counts_allowed_entries() {
        // six categories, two of them allowed for the object
        let kb = KnowledgeBase::from_json(
            r#"{"version":1,
              "actions":[{"action_id":0,"name":"a","gerund":"a"},{"action_id":1,"name":"b","gerund":"b"},
                         {"action_id":2,"name":"c","gerund":"c"}],
              "objects":[{"object_id":0,"name":"x","article_phrase":"an x"},
                         {"object_id":1,"name":"y","article_phrase":"a y"}],
              "hoi_categories":[{"hoi_id":0,"action_id":0,"object_id":0},{"hoi_id":1,"action_id":1,"object_id":0},
                                {"hoi_id":2,"action_id":2,"object_id":0},{"hoi_id":3,"action_id":0,"object_id":1},
                                {"hoi_id":4,"action_id":1,"object_id":1},{"hoi_id":5,"action_id":2,"object_id":1}],
              "affordance":{"0":[0,2],"1":[1]}}"#,
        )
        .unwrap();
        let out = pkm_mask(&[1.0f64; 6], 0, &kb).unwrap();
        assert_eq!(out.iter().filter(|v| **v != 0.0).count(), 2);
        assert_eq!(out, [1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn icm_scales_the_correlated_set() {
        let kb = tiny_kb();
        let out = icm_amplify(&[0.5f64, 0.4, 0.1], &kb, 1.2).unwrap();
        assert!((out[0] - 0.6).abs() < 1e-15);
        assert!((out[1] - 0.48).abs() < 1e-15);
        assert_eq!(out[2], 0.1);

        assert_eq!(
            icm_amplify(&[0.5f64, 0.4, 0.1], &kb, 1.0).unwrap(),
            [0.5, 0.4, 0.1]
        );
        assert_eq!(
            icm_amplify(&[-0.5f64, -0.4, 0.0], &kb, 2.0).unwrap(),
            [-0.5, -0.4, 0.0]
        );
    }

    #[test]
    fn icm_lifts_actions_correlated_with_racing() {
        let kb = mini();
        let mut row = vec![0.1f64; kb.num_hoi()];
        let race = hoi(&kb, "race", "motorcycle");
        row[race] = 0.9;
        let out = icm_amplify(&row, &kb, 1.5).unwrap();
        for action in ["ride", "straddle", "sit_on"] {
            assert!((out[hoi(&kb, action, "motorcycle")] - 0.15).abs() < 1e-12);
        }
        assert_eq!(out[hoi(&kb, "hold", "motorcycle")], 0.1);
    }

    #[test]
    fn threshold_hand_values() {
        let d = dynamic_threshold(&[0.9f64, 0.1, 0.2], 0.5).unwrap();
        // (0.9 - 0.4) - 0.45
        assert!((d.theta - 0.05).abs() < 1e-12);
        assert!(d.interacting);

        let d = dynamic_threshold(&[0.7f64; 4], 0.3).unwrap();
        assert!(d.theta < 0.0 && !d.interacting);

        // constant negative row: (0) - 0.3 * 0.5
        let d = dynamic_threshold(&[-0.3f64; 3], 0.5).unwrap();
        assert!((d.theta + 0.15).abs() < 1e-12 && !d.interacting);

        let d = dynamic_threshold(&[0.0f32; 5], 0.4).unwrap();
        assert_eq!(d.theta, 0.0);
        assert!(!d.interacting);

        assert!(dynamic_threshold::<f64>(&[], 0.4).is_err());
    }

    #[test]
    fn filter_band_and_top1() {
        let yes = ThresholdDecision {
            theta: 1.0,
            interacting: true,
        };
        assert_eq!(
            action_filter(&[0.8f64, 0.7, 0.5], &yes, 0.25, Selection::Adaption).unwrap(),
            [0, 1]
        );
        assert_eq!(
            action_filter(&[0.8f64, 0.7, 0.8], &yes, 0.0, Selection::Adaption).unwrap(),
            [0]
        );
        assert_eq!(
            action_filter(&[0.3f64, 0.9, 0.9], &yes, 0.5, Selection::Top1).unwrap(),
            [1]
        );

        let no = ThresholdDecision {
            theta: -0.1,
            interacting: false,
        };
        assert!(matches!(
            action_filter(&[0.8f64], &no, 0.2, Selection::Adaption),
            Err(Error::NotInteracting { .. })
        ));
    }

    #[test]
    fn filter_keeps_argmax_for_negative_rows() {
        let yes = ThresholdDecision {
            theta: 1.0,
            interacting: true,
        };
        let out = action_filter(&[-0.5f64, -0.55, -0.9], &yes, 0.2, Selection::Adaption).unwrap();
        assert_eq!(out, [0, 1]);
    }

    fn pairs(n: usize, object_category: usize) -> Vec<CandidatePair<f64>> {
        let b = BBox::new(10.0, 10.0, 4.0, 4.0).unwrap();
        (0..n)
            .map(|i| CandidatePair {
                pair_id: i,
                human_det: 0,
                object_det: i as u64 + 1,
                object_category,
                human_box: b,
                object_box: b,
                crop: b,
                human_mask_ref: None,
                object_mask_ref: None,
                background_mode: BackgroundMode::Delete,
            })
            .collect()
    }

    #[test]
    fn planted_row_yields_one_label() {
        let kb = tiny_kb();
        let s = SimilarityMatrix::from_rows(&[
            vec![0.30, 0.31, 0.29],
            vec![0.90, 0.20, 0.10],
            vec![0.25, 0.25, 0.25],
        ])
        .unwrap();
        let labels =
            infer_labels(&s, &pairs(3, 1), "img", &kb, &InferenceConfig::default()).unwrap();
        assert_eq!(labels.len(), 1);
        assert_eq!(labels[0].pair_id, 1);
        assert_eq!(labels[0].actions.len(), 1);
        assert_eq!(labels[0].actions[0].hoi_id, 0);
        assert!((labels[0].actions[0].score - 0.9 * 1.2).abs() < 1e-12);
    }

    #[test]
    fn constant_rows_yield_nothing() {
        let kb = tiny_kb();
        let s = SimilarityMatrix::from_rows(&[vec![0.4; 3], vec![0.1; 3]]).unwrap();
        let cfg = InferenceConfig {
            threshold_mean: ThresholdMean::AllowedEntries,
            ..InferenceConfig::default()
        };
        assert!(infer_labels(&s, &pairs(2, 1), "img", &kb, &cfg)
            .unwrap()
            .is_empty());
        let cfg = InferenceConfig {
            pkm_enabled: false,
            ..InferenceConfig::default()
        };
        assert!(infer_labels(&s, &pairs(2, 1), "img", &kb, &cfg)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn all_stages_off_is_plain_matching() {
        let kb = mini();
        let cfg = InferenceConfig {
            icm_enabled: false,
            pkm_enabled: false,
            dynamic_threshold_enabled: false,
            fixed_threshold: f64::NEG_INFINITY,
            selection: Selection::Top1,
            ..InferenceConfig::default()
        };
        let n = kb.num_hoi();
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                (0..n)
                    .map(|j| ((i * 7 + j * 3) % 11) as f64 / 10.0)
                    .collect()
            })
            .collect();
        let s = SimilarityMatrix::from_rows(&rows).unwrap();
        let apple = kb.object_id_by_name("apple").unwrap();
        let labels = infer_labels(&s, &pairs(3, apple), "img", &kb, &cfg).unwrap();
        assert_eq!(labels.len(), 3);
        for (l, r) in labels.iter().zip(&rows) {
            assert_eq!(l.actions.len(), 1);
            assert_eq!(Some(l.actions[0].hoi_id), argmax(r));
            assert_eq!(l.actions[0].score, r[l.actions[0].hoi_id]);
        }
    }

    #[test]
    fn object_without_plausible_categories_is_skipped() {
        let kb = tiny_kb();
        // person (object 0) affords action 0 but no category has object 0
        let s = SimilarityMatrix::from_rows(&[vec![0.9, 0.0, 0.0]]).unwrap();
        assert!(
            infer_labels(&s, &pairs(1, 0), "img", &kb, &InferenceConfig::default())
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn misaligned_inputs_are_rejected() {
        let kb = tiny_kb();
        let s = SimilarityMatrix::from_rows(&[vec![0.9, 0.0, 0.0]]).unwrap();
        let err =
            infer_labels(&s, &pairs(2, 1), "img", &kb, &InferenceConfig::default()).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        let bad = InferenceConfig {
            scale: 1.0,
            ..InferenceConfig::default()
        };
        assert!(infer_labels(&s, &pairs(1, 1), "img", &kb, &bad).is_err());
    }

    #[test]
    fn config_digest_is_stable_and_sensitive() {
        let a = InferenceConfig::default();
        assert_eq!(a.digest(), InferenceConfig::default().digest());
        assert!(a.digest().starts_with("sha256:"));
        let b = InferenceConfig { omega2: 0.3, ..a };
        assert_ne!(a.digest(), b.digest());
        let c = InferenceConfig {
            fixed_threshold: f64::NEG_INFINITY,
            ..a
        };
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn config_validation() {
        assert!(InferenceConfig::default().validate().is_ok());
        assert!(InferenceConfig {
            scale: 0.9,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(InferenceConfig {
            omega1: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(InferenceConfig {
            omega2: -0.1,
            ..Default::default()
        }
        .validate()
        .is_err());
        let parsed: InferenceConfig =
            serde_json::from_str(r#"{"selection":"top1","stage_order":"icm_then_pkm"}"#).unwrap();
        assert_eq!(parsed.selection, Selection::Top1);
        assert_eq!(parsed.scale, 1.2);
        assert!(serde_json::from_str::<InferenceConfig>(r#"{"scal":2}"#).is_err());
    }
}
