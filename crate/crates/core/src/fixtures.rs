//! Seeded synthetic inputs for the whole pipeline.
//!
//! Text embeddings come from an orthonormal basis with one direction per
//! action and one per object kind: the verb-only template of a category is
//! its action direction, the full template is the action direction plus
//! half the object direction, normalized. Categories sharing an object thus
//! overlap with cosine 0.2. Candidate rows come in two populations:
//!
//! * planted pairs: `sum(margin_k * t1[hoi_k]) + max(0, 1 - sum(margin)) * b`,
//! * everything else: `b`, the normalized sum of all basis directions, which
//!   scores almost the same against every category,
//!
//! each plus uniform noise in `[-noise, noise]` per coordinate. Planted rows
//! peak sharply on their category; background rows stay flat, so the
//! max-minus-mean test rejects them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::{
    CropSpecDocument, Detection, DetectionRecord, DetectionsFile, ImageDetections,
};
use crate::embedding::{EmbeddingKind, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::inference::{ActionRecord, InferenceConfig, LabelRecord, LabelsFile, LABELS_VERSION};
use crate::kb::{
    Action, HoiCategory, KnowledgeBase, KnowledgeBaseDocument, ObjectClass, KB_VERSION,
};
use crate::pipeline::{
    label_images, pair_detections, ImageInputs, PairingParams, RunManifest, MANIFEST_VERSION,
};
use crate::Real;

pub const PERSON: usize = 0;

/// Noise amplitude of the reference fixture.
pub const DEFAULT_NOISE: f64 = 0.03;

const OBJECT_WEIGHT: f64 = 0.5;
const CELL: f64 = 60.0;
const BOX: f64 = 40.0;
const GRID_COLS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSpec {
    pub humans: usize,
    pub objects: usize,
}

/// One planted interaction: pair `pair` of image `image` performs `hoi_id`.
/// Several entries may target the same pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedInteraction {
    pub image: usize,
    pub pair: usize,
    pub hoi_id: usize,
    /// Weight of the category's direction in the candidate row, in (0, 1].
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureSpec {
    pub seed: u64,
    pub images: Vec<ImageSpec>,
    pub num_actions: usize,
    /// Object kinds besides "person".
    pub num_object_kinds: usize,
    pub dim: usize,
    pub planted: Vec<PlantedInteraction>,
    pub noise: f64,
}

impl FixtureSpec {
    /// N_T: every (action, object kind) combination is a category.
    pub fn num_hoi(&self) -> usize {
        self.num_actions * self.num_object_kinds
    }

    pub fn hoi_parts(&self, hoi_id: usize) -> (usize, usize) {
        (hoi_id % self.num_actions, 1 + hoi_id / self.num_actions)
    }

    /// The bundled reference fixture behind the golden files.
    pub fn reference() -> Self {
        let p = |image, pair, hoi_id, margin| PlantedInteraction {
            image,
            pair,
            hoi_id,
            margin,
        };
        FixtureSpec {
            seed: 20_240_611,
            images: vec![
                ImageSpec {
                    humans: 2,
                    objects: 3,
                },
                ImageSpec {
                    humans: 1,
                    objects: 2,
                },
                ImageSpec {
                    humans: 3,
                    objects: 2,
                },
                ImageSpec {
                    humans: 2,
                    objects: 2,
                },
                ImageSpec {
                    humans: 1,
                    objects: 0,
                },
            ],
            num_actions: 6,
            num_object_kinds: 4,
            dim: 16,
            planted: vec![
                // (action 1, kind 1)
                p(0, 0, 1, 0.9),
                // (action 2, kind 2) with its correlated partner (action 3, kind 2)
                p(0, 4, 8, 0.5),
                p(0, 4, 9, 0.4),
                // (action 4, kind 3)
                p(1, 1, 16, 0.8),
                // (action 1, kind 4)
                p(2, 2, 19, 0.7),
                // (action 3, kind 1)
                p(2, 5, 3, 0.6),
                // (action 5, kind 2)
                p(3, 3, 11, 0.85),
            ],
            noise: DEFAULT_NOISE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::validation(format!("fixture spec: {m}")));
        if self.num_actions == 0 || self.num_object_kinds == 0 {
            return err("needs at least one action and one object kind".into());
        }
        if self.dim < 2 {
            return err(format!("dim must be >= 2, got {}", self.dim));
        }
        if self.dim < self.num_actions + self.num_object_kinds {
            return err(format!(
                "dim {} cannot hold {} orthogonal action and object directions",
                self.dim,
                self.num_actions + self.num_object_kinds
            ));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return err(format!("noise must be finite and >= 0, got {}", self.noise));
        }
        let kb = fixture_kb(self.num_actions, self.num_object_kinds)?;
        let noise_norm = self.noise * (self.dim as f64 / 3.0).sqrt();
        for p in &self.planted {
            let Some(img) = self.images.get(p.image) else {
                return err(format!("planted image {} does not exist", p.image));
            };
            if p.pair >= img.humans * img.objects {
                return err(format!("image {} has no pair {}", p.image, p.pair));
            }
            if p.hoi_id >= self.num_hoi() {
                return err(format!(
                    "planted hoi_id {} >= N_T {}",
                    p.hoi_id,
                    self.num_hoi()
                ));
            }
            if !(p.margin > 0.0 && p.margin <= 1.0) {
                return err(format!("margin must lie in (0, 1], got {}", p.margin));
            }
            if noise_norm >= p.margin {
                return err(format!(
                    "margin {} of hoi_id {} is swamped by noise (expected noise norm {noise_norm:.3})",
                    p.margin, p.hoi_id
                ));
            }
            let (action, object) = self.hoi_parts(p.hoi_id);
            if !kb.lookup_affordance(object)?.contains(&action) {
                return err(format!(
                    "planted hoi_id {} is not afforded by its object",
                    p.hoi_id
                ));
            }
        }
        self.object_categories().map(|_| ())
    }

    /// Object kind of every object detection, fixed by the planted entries
    /// where they pin it, otherwise left for the generator to draw.
    fn object_categories(&self) -> Result<Vec<Vec<Option<usize>>>> {
        let mut cats: Vec<Vec<Option<usize>>> =
            self.images.iter().map(|i| vec![None; i.objects]).collect();
        for p in &self.planted {
            let img = &self.images[p.image];
            let slot = &mut cats[p.image][p.pair % img.objects];
            let (_, object) = self.hoi_parts(p.hoi_id);
            match slot {
                Some(c) if *c != object => {
                    return Err(Error::validation(format!(
                        "fixture spec: object {} of image {} is planted with two different kinds",
                        p.pair % img.objects,
                        p.image
                    )))
                }
                _ => *slot = Some(object),
            }
        }
        Ok(cats)
    }
}

/// Knowledge base for `num_actions x num_object_kinds` categories. Object
/// kind `o` affords action `a` unless `(a + o) % 3 == 0`; actions `2k` and
/// `2k + 1` on the same object are correlated.
pub fn fixture_kb(num_actions: usize, num_object_kinds: usize) -> Result<KnowledgeBase> {
    let actions = (0..num_actions)
        .map(|a| Action {
            action_id: a,
            name: format!("action_{a}"),
            gerund: format!("performing action {a} on"),
        })
        .collect();
    let mut objects = vec![ObjectClass {
        object_id: PERSON,
        name: "person".into(),
        article_phrase: "a person".into(),
    }];
    objects.extend((1..=num_object_kinds).map(|o| ObjectClass {
        object_id: o,
        name: format!("object_{o}"),
        article_phrase: format!("an object of kind {o}"),
    }));
    let hoi_id = |a: usize, o: usize| (o - 1) * num_actions + a;
    let hoi_categories = (0..num_actions * num_object_kinds)
        .map(|h| HoiCategory {
            hoi_id: h,
            action_id: h % num_actions,
            object_id: 1 + h / num_actions,
            template_override_t1: None,
            template_override_t2: None,
        })
        .collect();

    let mut affordance = BTreeMap::new();
    affordance.insert(PERSON, vec![0]);
    for o in 1..=num_object_kinds {
        let mut set: Vec<usize> = (0..num_actions).filter(|a| (a + o) % 3 != 0).collect();
        if set.is_empty() {
            set.push(0);
        }
        affordance.insert(o, set);
    }
    let mut correlation = BTreeMap::new();
    for o in 1..=num_object_kinds {
        for a in 0..num_actions {
            let partner = a ^ 1;
            if partner < num_actions {
                correlation.insert(hoi_id(a, o), vec![hoi_id(a, o), hoi_id(partner, o)]);
            }
        }
    }

    KnowledgeBase::from_document(KnowledgeBaseDocument {
        version: KB_VERSION,
        actions,
        objects,
        hoi_categories,
        correlation,
        affordance,
    })
}

/// Everything a pipeline run consumes, plus the planted ground truth.
#[derive(Debug, Clone)]
pub struct FixtureBundle {
    pub kb: KnowledgeBase,
    pub detections: DetectionsFile<Real>,
    pub crop_specs: Vec<CropSpecDocument<Real>>,
    pub candidate_embeddings: Vec<EmbeddingMatrix<Real>>,
    pub text_t1: EmbeddingMatrix<Real>,
    pub text_t2: EmbeddingMatrix<Real>,
    pub ground_truth: LabelsFile<Real>,
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gram-Schmidt over seeded uniform vectors.
fn orthonormal_basis(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for b in &basis {
            let d = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        if v.iter().map(|x| x * x).sum::<f64>().sqrt() > 1e-3 {
            basis.push(unit(&v));
        }
    }
    basis
}

fn to_matrix(kind: EmbeddingKind, rows: &[Vec<f64>], dim: usize) -> Result<EmbeddingMatrix<Real>> {
    let data = rows.iter().flatten().map(|&v| v as Real).collect();
    EmbeddingMatrix::new(kind, rows.len(), dim, data)
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

pub fn synthesize(spec: &FixtureSpec) -> Result<FixtureBundle> {
    spec.validate()?;
    let kb = fixture_kb(spec.num_actions, spec.num_object_kinds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (na, nk, dim) = (spec.num_actions, spec.num_object_kinds, spec.dim);

    let basis = orthonormal_basis(&mut rng, na + nk, dim);
    let verb = |a: usize| &basis[a];
    let object = |o: usize| &basis[na + o - 1];
    let t2_rows: Vec<Vec<f64>> = (0..spec.num_hoi())
        .map(|h| verb(spec.hoi_parts(h).0).clone())
        .collect();
    let t1_rows: Vec<Vec<f64>> = (0..spec.num_hoi())
        .map(|h| {
            let (a, o) = spec.hoi_parts(h);
            unit(
                &verb(a)
                    .iter()
                    .zip(object(o))
                    .map(|(x, y)| x + OBJECT_WEIGHT * y)
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let background = unit(
        &(0..dim)
            .map(|i| basis.iter().map(|b| b[i]).sum())
            .collect::<Vec<f64>>(),
    );

    let pinned = spec.object_categories()?;
    let mut images = Vec::new();
    for (i, img) in spec.images.iter().enumerate() {
        let image_id = format!("img_{i:03}");
        let mut dets: Vec<Detection<Real>> = Vec::new();
        let mut push = |det_id: u64, slot: usize, category: usize, score: f64, dx: f64| {
            let cx = CELL / 2.0 + CELL * (slot % GRID_COLS) as f64 + dx;
            let cy = CELL / 2.0 + CELL * (slot / GRID_COLS) as f64;
            dets.push(Detection {
                det_id,
                bbox: BBox {
                    cx: cx as Real,
                    cy: cy as Real,
                    w: BOX as Real,
                    h: BOX as Real,
                },
                category,
                score: score as Real,
                mask_ref: Some(format!("{image_id}/{det_id}")),
            });
        };
        for hi in 0..img.humans {
            let score = round2(rng.gen_range(0.6..0.99));
            push(hi as u64, hi, PERSON, score, 0.0);
        }
        let mut first_category = None;
        for (oi, pin) in pinned[i].iter().enumerate() {
            let category = pin.unwrap_or_else(|| rng.gen_range(1..=nk));
            first_category.get_or_insert(category);
            let score = round2(rng.gen_range(0.6..0.99));
            push(
                (img.humans + oi) as u64,
                img.humans + oi,
                category,
                score,
                0.0,
            );
        }
        // a near-duplicate of the first object for NMS and a low-confidence box
        let n = (img.humans + img.objects) as u64;
        if let Some(category) = first_category {
            push(n, img.humans, category, 0.55, 2.0);
        }
        push(n + 1, img.humans + img.objects, 1, 0.3, 0.0);

        let width = (CELL * GRID_COLS as f64) as Real;
        let rows = (img.humans + img.objects + 1).div_ceil(GRID_COLS).max(1);
        images.push(ImageDetections {
            image_id,
            width,
            height: (CELL * rows as f64).max(480.0) as Real,
            detections: dets.iter().map(DetectionRecord::from_detection).collect(),
        });
    }
    let detections = DetectionsFile {
        version: crate::candidates::DETECTIONS_VERSION,
        images,
    };

    let crop_specs = pair_detections(&detections, &kb, &PairingParams::default())?;
    for (doc, img) in crop_specs.iter().zip(&spec.images) {
        debug_assert_eq!(doc.pairs.len(), img.humans * img.objects);
    }

    let mut candidate_embeddings = Vec::new();
    for (i, doc) in crop_specs.iter().enumerate() {
        let rows: Vec<Vec<f64>> = (0..doc.pairs.len())
            .map(|pair| {
                let planted: Vec<&PlantedInteraction> = spec
                    .planted
                    .iter()
                    .filter(|p| p.image == i && p.pair == pair)
                    .collect();
                let mut v = vec![0.0; dim];
                let total: f64 = planted.iter().map(|p| p.margin).sum();
                for p in &planted {
                    v.iter_mut()
                        .zip(&t1_rows[p.hoi_id])
                        .for_each(|(x, t)| *x += p.margin * t);
                }
                let bg = if planted.is_empty() {
                    1.0
                } else {
                    (1.0 - total).max(0.0)
                };
                v.iter_mut()
                    .zip(&background)
                    .for_each(|(x, b)| *x += bg * b);
                for x in v.iter_mut() {
                    *x += spec.noise * rng.gen_range(-1.0..=1.0);
                }
                v
            })
            .collect();
        candidate_embeddings.push(to_matrix(EmbeddingKind::CandidateImage, &rows, dim)?);
    }

    let mut gt_pairs: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for p in &spec.planted {
        gt_pairs
            .entry((p.image, p.pair))
            .or_default()
            .push(p.hoi_id);
    }
    let labels = gt_pairs
        .into_iter()
        .map(|((image, pair), mut hois)| {
            hois.sort_unstable();
            hois.dedup();
            let rec = &crop_specs[image].pairs[pair];
            LabelRecord {
                image_id: rec.image_id.clone(),
                pair_id: Some(pair),
                human_box: rec.human_box,
                object_box: rec.object_box,
                object_category: rec.object_category,
                actions: hois
                    .into_iter()
                    .map(|hoi_id| ActionRecord {
                        hoi_id,
                        score: None,
                    })
                    .collect(),
            }
        })
        .collect();
    let ground_truth = LabelsFile {
        version: LABELS_VERSION,
        config_digest: None,
        image_ids: Some(crop_specs.iter().map(|d| d.image_id.clone()).collect()),
        labels,
    };

    Ok(FixtureBundle {
        kb,
        detections,
        crop_specs,
        candidate_embeddings,
        text_t1: to_matrix(EmbeddingKind::TextT1, &t1_rows, dim)?,
        text_t2: to_matrix(EmbeddingKind::TextT2, &t2_rows, dim)?,
        ground_truth,
    })
}

impl FixtureBundle {
    pub fn manifest(&self, inference: InferenceConfig) -> RunManifest {
        RunManifest {
            version: MANIFEST_VERSION,
            tool_version: None,
            kb: "kb.json".into(),
            text_t1: "text_t1.faem".into(),
            text_t2: Some("text_t2.faem".into()),
            use_t2: true,
            background_mode: None,
            images: self
                .crop_specs
                .iter()
                .map(|d| ImageInputs {
                    crop_specs: PathBuf::from("crops").join(format!("{}.json", d.image_id)),
                    candidate_embeddings: PathBuf::from("embeddings")
                        .join(format!("{}.faem", d.image_id)),
                })
                .collect(),
            labels_out: "labels.json".into(),
            inference,
        }
    }

    /// Labels for the whole fixture, computed in memory.
    pub fn label(&self, cfg: &InferenceConfig) -> Result<LabelsFile<Real>> {
        let images: Vec<_> = self
            .crop_specs
            .iter()
            .cloned()
            .zip(self.candidate_embeddings.iter().cloned())
            .collect();
        Ok(label_images(&self.kb, &self.text_t1, Some(&self.text_t2), &images, cfg)?.0)
    }

    /// Writes every file plus `manifest.json` under `dir`; returns the
    /// manifest path.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let manifest = self.manifest(InferenceConfig::default());
        self.kb.save(dir.join(&manifest.kb))?;
        self.detections.save(dir.join("detections.json"))?;
        for ((doc, emb), inputs) in self
            .crop_specs
            .iter()
            .zip(&self.candidate_embeddings)
            .zip(&manifest.images)
        {
            doc.save(dir.join(&inputs.crop_specs))?;
            emb.save(dir.join(&inputs.candidate_embeddings))?;
        }
        self.text_t1.save(dir.join(&manifest.text_t1))?;
        self.text_t2.save(dir.join("text_t2.faem"))?;
        self.ground_truth.save(dir.join("ground_truth.json"))?;
        let path = dir.join("manifest.json");
        manifest.save(&path)?;
        Ok(path)
    }
}
