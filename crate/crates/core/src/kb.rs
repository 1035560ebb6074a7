//! Vocabularies, the HOI category table and the two knowledge dictionaries:
//! correlated categories (used for amplification) and per-object affordances
//! (used for masking).

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util;

pub const KB_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub action_id: usize,
    pub name: String,
    pub gerund: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectClass {
    pub object_id: usize,
    pub name: String,
    pub article_phrase: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoiCategory {
    pub hoi_id: usize,
    pub action_id: usize,
    pub object_id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_override_t1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_override_t2: Option<String>,
}

/// On-disk knowledge-base document. Map keys are ids written as decimal strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgeBaseDocument {
    pub version: u32,
    pub actions: Vec<Action>,
    pub objects: Vec<ObjectClass>,
    pub hoi_categories: Vec<HoiCategory>,
    #[serde(default)]
    pub correlation: BTreeMap<usize, Vec<usize>>,
    pub affordance: BTreeMap<usize, Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Templates {
    pub hoi_id: usize,
    pub t1: String,
    pub t2: String,
}

/// Validated, immutable knowledge base.
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    actions: Vec<Action>,
    objects: Vec<ObjectClass>,
    hois: Vec<HoiCategory>,
    // indexed by hoi_id, always self-inclusive
    correlation: Vec<Vec<usize>>,
    // indexed by object_id, non-empty
    affordance: Vec<Vec<usize>>,
    // per object_id: hoi_ids whose object matches and whose action is afforded
    allowed_hois: Vec<Vec<usize>>,
    warnings: Vec<String>,
}

impl KnowledgeBase {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let doc: KnowledgeBaseDocument = io_util::read_json(path.as_ref())?;
        Self::from_document(doc)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: KnowledgeBaseDocument =
            serde_json::from_str(text).map_err(|source| Error::Json {
                context: "knowledge base".into(),
                source,
            })?;
        Self::from_document(doc)
    }

    pub fn from_document(doc: KnowledgeBaseDocument) -> Result<Self> {
        if doc.version != KB_VERSION {
            return Err(Error::validation(format!(
                "unsupported knowledge base version {} (expected {KB_VERSION})",
                doc.version
            )));
        }

        for (pos, a) in doc.actions.iter().enumerate() {
            if a.action_id != pos {
                return Err(Error::validation(format!(
                    "action_id {} at position {pos} breaks contiguous numbering",
                    a.action_id
                )));
            }
            if a.gerund.trim().is_empty() {
                return Err(Error::validation(format!(
                    "action_id {} has an empty gerund",
                    a.action_id
                )));
            }
        }
        for (pos, o) in doc.objects.iter().enumerate() {
            if o.object_id != pos {
                return Err(Error::validation(format!(
                    "object_id {} at position {pos} breaks contiguous numbering",
                    o.object_id
                )));
            }
        }

        let n_actions = doc.actions.len();
        let n_objects = doc.objects.len();
        let n_hoi = doc.hoi_categories.len();
        let mut seen_pairs = HashSet::new();
        for (pos, h) in doc.hoi_categories.iter().enumerate() {
            if h.hoi_id != pos {
                return Err(Error::validation(format!(
                    "hoi_id {} at position {pos} breaks contiguous numbering",
                    h.hoi_id
                )));
            }
            if h.action_id >= n_actions {
                return Err(Error::validation(format!(
                    "unknown action_id {} in hoi_id {}",
                    h.action_id, h.hoi_id
                )));
            }
            if h.object_id >= n_objects {
                return Err(Error::validation(format!(
                    "unknown object_id {} in hoi_id {}",
                    h.object_id, h.hoi_id
                )));
            }
            if !seen_pairs.insert((h.action_id, h.object_id)) {
                return Err(Error::validation(format!(
                    "duplicate (action_id {}, object_id {}) pair at hoi_id {}",
                    h.action_id, h.object_id, h.hoi_id
                )));
            }
        }

        let mut warnings = Vec::new();
        let mut correlation: Vec<Vec<usize>> = (0..n_hoi).map(|h| vec![h]).collect();
        for (&key, set) in &doc.correlation {
            if key >= n_hoi {
                return Err(Error::validation(format!(
                    "unknown hoi_id {key} as correlation key"
                )));
            }
            check_ordered_set(
                set,
                n_hoi,
                "hoi_id",
                &format!("correlation set of hoi_id {key}"),
            )?;
            if set.is_empty() {
                continue;
            }
            let mut entry = set.clone();
            if !entry.contains(&key) {
                let msg = format!("correlation set of hoi_id {key} omits itself; inserted");
                warn!("{msg}");
                warnings.push(msg);
                entry.insert(0, key);
            }
            correlation[key] = entry;
        }

        let mut affordance: Vec<Vec<usize>> = vec![Vec::new(); n_objects];
        for (&key, set) in &doc.affordance {
            if key >= n_objects {
                return Err(Error::validation(format!(
                    "unknown object_id {key} as affordance key"
                )));
            }
            check_ordered_set(
                set,
                n_actions,
                "action_id",
                &format!("affordance of object_id {key}"),
            )?;
            affordance[key] = set.clone();
        }
        if let Some(o) = affordance.iter().position(Vec::is_empty) {
            return Err(Error::validation(format!(
                "object_id {o} has no affordance entry (sets must be non-empty)"
            )));
        }

        let allowed_hois = (0..n_objects)
            .map(|o| {
                doc.hoi_categories
                    .iter()
                    .filter(|h| h.object_id == o && affordance[o].contains(&h.action_id))
                    .map(|h| h.hoi_id)
                    .collect()
            })
            .collect();

        Ok(KnowledgeBase {
            actions: doc.actions,
            objects: doc.objects,
            hois: doc.hoi_categories,
            correlation,
            affordance,
            allowed_hois,
            warnings,
        })
    }

    /// Canonical document: every hoi_id and object_id keyed, correlation sets
    /// self-inclusive. Loading it back yields an equal document.
    pub fn to_document(&self) -> KnowledgeBaseDocument {
        KnowledgeBaseDocument {
            version: KB_VERSION,
            actions: self.actions.clone(),
            objects: self.objects.clone(),
            hoi_categories: self.hois.clone(),
            correlation: self.correlation.iter().cloned().enumerate().collect(),
            affordance: self.affordance.iter().cloned().enumerate().collect(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io_util::write_json(path.as_ref(), &self.to_document())
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn objects(&self) -> &[ObjectClass] {
        &self.objects
    }

    pub fn hoi_categories(&self) -> &[HoiCategory] {
        &self.hois
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    /// N_T, the number of HOI categories.
    pub fn num_hoi(&self) -> usize {
        self.hois.len()
    }

    pub fn hoi(&self, hoi_id: usize) -> Result<&HoiCategory> {
        self.hois.get(hoi_id).ok_or(Error::OutOfRange {
            what: "hoi_id",
            id: hoi_id,
            len: self.hois.len(),
        })
    }

    pub fn check_object(&self, object_id: usize) -> Result<()> {
        if object_id < self.objects.len() {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                what: "object_id",
                id: object_id,
                len: self.objects.len(),
            })
        }
    }

    pub fn object_id_by_name(&self, name: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.name == name)
    }

    /// Correlated categories of `hoi_id`, the category itself included.
    pub fn lookup_correlated(&self, hoi_id: usize) -> Result<&[usize]> {
        self.hoi(hoi_id)?;
        Ok(&self.correlation[hoi_id])
    }

    /// Action ids an object category plausibly admits.
    pub fn lookup_affordance(&self, object_id: usize) -> Result<&[usize]> {
        self.check_object(object_id)?;
        Ok(&self.affordance[object_id])
    }

    /// HOI categories a pair with this object can realize: same object and an
    /// afforded action. Ascending hoi_id.
    pub fn allowed_hois(&self, object_id: usize) -> Result<&[usize]> {
        self.check_object(object_id)?;
        Ok(&self.allowed_hois[object_id])
    }

    pub fn action_name(&self, hoi_id: usize) -> Result<&str> {
        let h = self.hoi(hoi_id)?;
        Ok(&self.actions[h.action_id].name)
    }

    /// Both template strings per HOI category, ordered by hoi_id.
    pub fn render_templates(&self) -> Vec<Templates> {
        self.hois
            .iter()
            .map(|h| {
                let gerund = &self.actions[h.action_id].gerund;
                let article = &self.objects[h.object_id].article_phrase;
                Templates {
                    hoi_id: h.hoi_id,
                    t1: h
                        .template_override_t1
                        .clone()
                        .unwrap_or_else(|| format!("a photo of a person {gerund} {article}")),
                    t2: h
                        .template_override_t2
                        .clone()
                        .unwrap_or_else(|| format!("a photo of a person {gerund}")),
                }
            })
            .collect()
    }
}

fn check_ordered_set(set: &[usize], bound: usize, what: &str, owner: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for &id in set {
        if id >= bound {
            return Err(Error::validation(format!("unknown {what} {id} in {owner}")));
        }
        if !seen.insert(id) {
            return Err(Error::validation(format!(
                "duplicate {what} {id} in {owner}"
            )));
        }
    }
    Ok(())
}
