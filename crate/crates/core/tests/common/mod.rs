//! Test-only reference implementations. Everything here works on plain
//! tables and nested loops in f64 and shares no code path with the library
//! beyond the input types.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;

use hoi_labelforge::candidates::{BackgroundMode, CandidatePair};
use hoi_labelforge::inference::{InferenceConfig, Selection, StageOrder, ThresholdMean};
use hoi_labelforge::kb::{Action, HoiCategory, KnowledgeBaseDocument, ObjectClass, KB_VERSION};
use hoi_labelforge::BBox;
use rand::Rng;

/// Raw knowledge tables as the oracle sees them.
#[derive(Debug, Clone)]
pub struct Tables {
    /// (action, object) per hoi_id
    pub hois: Vec<(usize, usize)>,
    /// afforded actions per object id
    pub affordance: Vec<Vec<usize>>,
    /// correlated set per hoi_id as listed in the document (may omit self)
    pub correlation: BTreeMap<usize, Vec<usize>>,
}

impl Tables {
    pub fn from_document(doc: &KnowledgeBaseDocument) -> Self {
        Tables {
            hois: doc
                .hoi_categories
                .iter()
                .map(|h| (h.action_id, h.object_id))
                .collect(),
            affordance: (0..doc.objects.len())
                .map(|o| doc.affordance.get(&o).cloned().unwrap_or_default())
                .collect(),
            correlation: doc.correlation.clone(),
        }
    }

    fn allowed(&self, j: usize, object: usize) -> bool {
        let (a, o) = self.hois[j];
        o == object && self.affordance[object].contains(&a)
    }

    fn correlated(&self, j: usize, k: usize) -> bool {
        j == k || self.correlation.get(&j).is_some_and(|set| set.contains(&k))
    }
}

/// A random vocabulary with at most `max_hoi` categories. Affordances are
/// never empty; correlation sets sometimes leave out their own key.
pub fn random_document(rng: &mut impl Rng, max_hoi: usize) -> KnowledgeBaseDocument {
    let num_actions = rng.gen_range(1..=4);
    let num_objects = rng.gen_range(2..=3);
    let mut combos: Vec<(usize, usize)> = (0..num_objects)
        .flat_map(|o| (0..num_actions).map(move |a| (a, o)))
        .collect();
    // Fisher-Yates by hand keeps this independent of rand's slice helpers
    for i in (1..combos.len()).rev() {
        let k = rng.gen_range(0..=i);
        combos.swap(i, k);
    }
    let n_t = rng.gen_range(1..=max_hoi.min(combos.len()));
    combos.truncate(n_t);

    let mut affordance = BTreeMap::new();
    for o in 0..num_objects {
        let mut set: Vec<usize> = (0..num_actions).filter(|_| rng.gen_bool(0.6)).collect();
        if set.is_empty() {
            set.push(rng.gen_range(0..num_actions));
        }
        affordance.insert(o, set);
    }
    let mut correlation = BTreeMap::new();
    for j in 0..n_t {
        if rng.gen_bool(0.3) {
            continue;
        }
        let mut set: Vec<usize> = (0..n_t).filter(|&k| k != j && rng.gen_bool(0.3)).collect();
        if rng.gen_bool(0.8) {
            set.insert(0, j);
        }
        correlation.insert(j, set);
    }

    KnowledgeBaseDocument {
        version: KB_VERSION,
        actions: (0..num_actions)
            .map(|a| Action {
                action_id: a,
                name: format!("a{a}"),
                gerund: format!("doing a{a} to"),
            })
            .collect(),
        objects: (0..num_objects)
            .map(|o| ObjectClass {
                object_id: o,
                name: if o == 0 {
                    "person".into()
                } else {
                    format!("o{o}")
                },
                article_phrase: format!("an o{o}"),
            })
            .collect(),
        hoi_categories: combos
            .iter()
            .enumerate()
            .map(|(h, &(a, o))| HoiCategory {
                hoi_id: h,
                action_id: a,
                object_id: o,
                template_override_t1: None,
                template_override_t2: None,
            })
            .collect(),
        correlation,
        affordance,
    }
}

pub fn cosine(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; b.len()]; a.len()];
    for i in 0..a.len() {
        for j in 0..b.len() {
            let mut dot = 0.0;
            let mut na = 0.0;
            let mut nb = 0.0;
            for k in 0..a[i].len() {
                dot += a[i][k] * b[j][k];
                na += a[i][k] * a[i][k];
                nb += b[j][k] * b[j][k];
            }
            out[i][j] = dot / (na.sqrt() * nb.sqrt());
        }
    }
    out
}

/// Selected (hoi_id, score) pairs of one similarity row, or `None` when the
/// row is judged non-interacting.
pub fn label_row(
    row: &[f64],
    object: usize,
    t: &Tables,
    cfg: &InferenceConfig,
) -> Option<Vec<(usize, f64)>> {
    let n = row.len();
    let mut s = row.to_vec();

    let mask = |s: &mut Vec<f64>| {
        for j in 0..n {
            if !t.allowed(j, object) {
                s[j] = 0.0;
            }
        }
    };
    let amplify = |s: &mut Vec<f64>| {
        let mut top = 0;
        for j in 1..n {
            if s[j] > s[top] {
                top = j;
            }
        }
        if s[top] > 0.0 {
            for j in 0..n {
                if t.correlated(top, j) {
                    s[j] *= cfg.scale;
                }
            }
        }
    };
    let first_mask = cfg.stage_order == StageOrder::PkmThenIcm;
    if cfg.pkm_enabled && first_mask {
        mask(&mut s);
    }
    if cfg.icm_enabled {
        amplify(&mut s);
    }
    if cfg.pkm_enabled && !first_mask {
        mask(&mut s);
    }

    let eligible: Vec<usize> = (0..n)
        .filter(|&j| !cfg.pkm_enabled || t.allowed(j, object))
        .collect();
    if eligible.is_empty() {
        return None;
    }

    let mut max = f64::NEG_INFINITY;
    for j in 0..n {
        if s[j] > max {
            max = s[j];
        }
    }
    let interacting = if cfg.dynamic_threshold_enabled {
        let over: Vec<usize> = match cfg.threshold_mean {
            ThresholdMean::AllEntries => (0..n).collect(),
            ThresholdMean::AllowedEntries => eligible.clone(),
        };
        let mut sum = 0.0;
        for &j in &over {
            sum += s[j];
        }
        let mean = sum / over.len() as f64;
        (max - mean) - max.abs() * cfg.omega1 > 0.0
    } else {
        max > cfg.fixed_threshold
    };
    if !interacting {
        return None;
    }

    let mut top = eligible[0];
    for &j in &eligible {
        if s[j] > s[top] {
            top = j;
        }
    }
    let picked: Vec<usize> = match cfg.selection {
        Selection::Top1 => vec![top],
        Selection::Adaption => {
            let m = s[top];
            let lower = m - m.abs() * cfg.omega2;
            eligible
                .iter()
                .copied()
                .filter(|&j| j == top || (s[j] > lower && s[j] <= m))
                .collect()
        }
    };
    Some(picked.into_iter().map(|j| (j, s[j])).collect())
}

/// Per-pair results of one image: (pair index, selections) for interacting pairs.
pub fn label_image(
    sim: &[Vec<f64>],
    objects: &[usize],
    t: &Tables,
    cfg: &InferenceConfig,
) -> Vec<(usize, Vec<(usize, f64)>)> {
    sim.iter()
        .zip(objects)
        .enumerate()
        .filter_map(|(i, (row, &o))| label_row(row, o, t, cfg).map(|sel| (i, sel)))
        .collect()
}

pub fn fuse(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

/// Candidate pairs with dummy geometry and the given object categories.
pub fn pairs_for<T: hoi_labelforge::Scalar>(objects: &[usize]) -> Vec<CandidatePair<T>> {
    let b = |x: f64| BBox {
        cx: T::lit(x),
        cy: T::lit(10.0),
        w: T::lit(8.0),
        h: T::lit(8.0),
    };
    objects
        .iter()
        .enumerate()
        .map(|(i, &o)| CandidatePair {
            pair_id: i,
            human_det: 0,
            object_det: i as u64 + 1,
            object_category: o,
            human_box: b(10.0),
            object_box: b(30.0),
            crop: BBox {
                cx: T::lit(20.0),
                cy: T::lit(10.0),
                w: T::lit(28.0),
                h: T::lit(8.0),
            },
            human_mask_ref: None,
            object_mask_ref: None,
            background_mode: BackgroundMode::Delete,
        })
        .collect()
}

/// All-points interpolated AP written as the textbook sum over recall steps
/// of the best precision at or beyond that recall.
pub fn ap(ranked_tp: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let n = ranked_tp.len();
    let mut prec = vec![0.0; n];
    let mut rec = vec![0.0; n];
    let mut tp = 0;
    for k in 0..n {
        if ranked_tp[k] {
            tp += 1;
        }
        prec[k] = tp as f64 / (k + 1) as f64;
        rec[k] = tp as f64 / num_gt as f64;
    }
    let mut total = 0.0;
    let mut prev = 0.0;
    for k in 0..n {
        if ranked_tp[k] {
            let best = (k..n).map(|m| prec[m]).fold(0.0, f64::max);
            total += (rec[k] - prev) * best;
            prev = rec[k];
        }
    }
    total
}

pub fn random_config(rng: &mut impl Rng) -> InferenceConfig {
    InferenceConfig {
        scale: rng.gen_range(1.01..2.0),
        omega1: rng.gen_range(0.0..=1.0),
        omega2: rng.gen_range(0.0..=1.0),
        stage_order: if rng.gen_bool(0.5) {
            StageOrder::PkmThenIcm
        } else {
            StageOrder::IcmThenPkm
        },
        selection: if rng.gen_bool(0.5) {
            Selection::Adaption
        } else {
            Selection::Top1
        },
        icm_enabled: rng.gen_bool(0.7),
        pkm_enabled: rng.gen_bool(0.7),
        dynamic_threshold_enabled: rng.gen_bool(0.8),
        fixed_threshold: rng.gen_range(-0.5..1.5),
        threshold_mean: if rng.gen_bool(0.5) {
            ThresholdMean::AllEntries
        } else {
            ThresholdMean::AllowedEntries
        },
    }
}
