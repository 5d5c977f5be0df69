//! Store of places the robot has described, and retrieval by name.
//!
//! Every emitted description is recorded with the pose it was captured at.
//! A spoken target is embedded with the same text embedder and compared
//! against both the description and the scene labels of every record by
//! dot product; the best record's pose becomes the destination.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Pose, Side};
use crate::gridworld::PoiSighting;
use crate::narrator::Description;

/// Embedding dimension.
pub const EMBED_DIM: usize = 256;
/// Bucket carrying all mass of the empty-text embedding. Trigrams never
/// hash into it.
pub const EMPTY_BUCKET: usize = 0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemanticError {
    #[error("no records to retrieve from")]
    EmptyStore,
    #[error("could not find a destination in {0:?}")]
    UnresolvedTarget(String),
    #[error("bad store line {line}: {reason}")]
    MalformedStore { line: usize, reason: String },
}

pub type Embedding = Vec<f64>;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn normalize_text(s: &str) -> String {
    s.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Character trigrams of the lowercased, whitespace-collapsed text, padded
/// with one space on each side so short words still yield trigrams.
pub fn trigrams(s: &str) -> Vec<String> {
    let norm = normalize_text(s);
    if norm.is_empty() {
        return Vec::new();
    }
    let chars: Vec<char> = format!(" {norm} ").chars().collect();
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

/// Bucket a trigram hashes into, never [`EMPTY_BUCKET`].
pub fn trigram_bucket(t: &str) -> usize {
    1 + (fnv1a(t.as_bytes()) % (EMBED_DIM as u64 - 1)) as usize
}

/// Hashed trigram count vector, L2-normalised.
pub fn embed_text(s: &str) -> Embedding {
    let mut v = vec![0.0; EMBED_DIM];
    let grams = trigrams(s);
    if grams.is_empty() {
        v[EMPTY_BUCKET] = 1.0;
        return v;
    }
    for g in &grams {
        v[trigram_bucket(g)] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticRecord {
    pub id: u64,
    pub pose: Pose,
    pub description_text: String,
    /// Text the scene embedding was computed from.
    pub scene_text: String,
    /// Per-camera texts (left, front, right) for views that saw something.
    #[serde(default)]
    pub views: Vec<SceneView>,
    #[serde(skip)]
    pub desc_embedding: Embedding,
    #[serde(skip)]
    pub scene_embedding: Embedding,
    #[serde(skip)]
    pub view_embeddings: Vec<Embedding>,
    pub timestamp: f64,
}

/// Text standing in for the camera views: sighted POI names and categories.
pub fn scene_text(sightings: &[PoiSighting]) -> String {
    sightings
        .iter()
        .map(|s| format!("{} {}", s.poi.name, s.poi.category))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneView {
    pub side: Side,
    pub text: String,
}

/// One text per camera view, standing in for the separate images each
/// camera saves: the names of the POIs that view shows. Views with no
/// sightings are left out.
pub fn scene_views(sightings: &[PoiSighting]) -> Vec<SceneView> {
    [Side::Left, Side::Front, Side::Right]
        .into_iter()
        .filter_map(|side| {
            let names: Vec<&str> = sightings
                .iter()
                .filter(|s| s.side == side)
                .map(|s| s.poi.name.as_str())
                .collect();
            (!names.is_empty()).then(|| SceneView {
                side,
                text: names.join(" "),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SemanticStore {
    records: Vec<SemanticRecord>,
}

impl SemanticStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[SemanticRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&SemanticRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// One JSON record per line; embeddings are not stored.
    pub fn export_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serialises"));
            out.push('\n');
        }
        out
    }

    /// Reads [`export_jsonl`](Self::export_jsonl) output, recomputing embeddings.
    pub fn import_jsonl(text: &str) -> Result<Self, SemanticError> {
        let mut store = SemanticStore::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut r: SemanticRecord = serde_json::from_str(line).map_err(|e| SemanticError::MalformedStore {
                line: i + 1,
                reason: e.to_string(),
            })?;
            if let Some(last) = store.records.last() {
                if r.id <= last.id || r.timestamp < last.timestamp {
                    return Err(SemanticError::MalformedStore {
                        line: i + 1,
                        reason: "ids and timestamps must increase".into(),
                    });
                }
            }
            r.desc_embedding = embed_text(&r.description_text);
            r.scene_embedding = embed_text(&r.scene_text);
            r.view_embeddings = r.views.iter().map(|v| embed_text(&v.text)).collect();
            store.records.push(r);
        }
        Ok(store)
    }
}

/// Appends a record for a refined description and returns its id.
pub fn record(store: &mut SemanticStore, pose: Pose, description: &Description, sightings: &[PoiSighting]) -> u64 {
    let id = store.records.last().map_or(0, |r| r.id + 1);
    let scene = scene_text(sightings);
    let views = scene_views(sightings);
    store.records.push(SemanticRecord {
        id,
        pose,
        desc_embedding: embed_text(&description.text),
        scene_embedding: embed_text(&scene),
        view_embeddings: views.iter().map(|v| embed_text(&v.text)).collect(),
        description_text: description.text.clone(),
        scene_text: scene,
        views,
        timestamp: description.timestamp,
    });
    id
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetSpec {
    Named(String),
    Initial,
}

/// Phrases that ask to go back to where the walk began.
pub const INITIAL_PATTERNS: &[&str] = &[
    "back to the start",
    "back to start",
    "back to the beginning",
    "to the starting point",
    "to the initial point",
    "starting point",
    "initial point",
    "where we started",
    "where i started",
    "go back to the entrance",
];

/// Phrases after which the destination name follows.
pub const GO_TO_PATTERNS: &[&str] = &[
    "take me to",
    "bring me to",
    "guide me to",
    "lead me to",
    "navigate to",
    "want to go to",
    "go to",
    "head to",
    "walk to",
];

const ARTICLES: &[&str] = &["the", "a", "an"];

/// Rule-based target resolver.
pub fn resolve_target(utterance: &str) -> Result<TargetSpec, SemanticError> {
    let lower = utterance.to_lowercase();
    if INITIAL_PATTERNS.iter().any(|p| lower.contains(p)) {
        return Ok(TargetSpec::Initial);
    }
    for pat in GO_TO_PATTERNS {
        if let Some(pos) = lower.find(pat) {
            // lowercasing can change byte offsets outside ASCII
            if lower.len() != utterance.len() {
                return extract_name(&lower[pos + pat.len()..], utterance);
            }
            return extract_name(&utterance[pos + pat.len()..], utterance);
        }
    }
    Err(SemanticError::UnresolvedTarget(utterance.to_string()))
}

fn extract_name(rest: &str, utterance: &str) -> Result<TargetSpec, SemanticError> {
    let rest = rest.trim().trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
    let mut words: Vec<&str> = rest.split_whitespace().collect();
    while words
        .first()
        .is_some_and(|w| ARTICLES.contains(&w.to_lowercase().as_str()))
    {
        words.remove(0);
    }
    for tail in ["please"] {
        if words.last().is_some_and(|w| w.eq_ignore_ascii_case(tail)) {
            words.pop();
        }
    }
    let name = words.join(" ");
    let name = name.trim_end_matches(|c: char| c.is_ascii_punctuation());
    if name.is_empty() {
        Err(SemanticError::UnresolvedTarget(utterance.to_string()))
    } else {
        Ok(TargetSpec::Named(name.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchedField {
    Description,
    /// The overview of everything sighted.
    Scene,
    /// A single camera view.
    View(Side),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    /// `None` for the initial point.
    pub record_id: Option<u64>,
    pub pose: Pose,
    pub score: f64,
    pub matched_field: MatchedField,
}

/// Finds the destination for `target`: the record whose description, overview
/// or camera view has the highest dot product with the target name. Ties go
/// to the lowest id, and within a record to the first field in that order.
pub fn retrieve(store: &SemanticStore, target: &TargetSpec, start_pose: Pose) -> Result<RetrievalResult, SemanticError> {
    let name = match target {
        TargetSpec::Initial => {
            return Ok(RetrievalResult {
                record_id: None,
                pose: start_pose,
                score: 1.0,
                matched_field: MatchedField::Description,
            })
        }
        TargetSpec::Named(n) => n,
    };
    let q = embed_text(name);
    let mut best: Option<RetrievalResult> = None;
    for r in &store.records {
        let mut score = dot(&q, &r.desc_embedding);
        let mut field = MatchedField::Description;
        let fields = std::iter::once((MatchedField::Scene, &r.scene_embedding)).chain(
            r.views
                .iter()
                .zip(&r.view_embeddings)
                .map(|(v, e)| (MatchedField::View(v.side), e)),
        );
        for (f, e) in fields {
            let s = dot(&q, e);
            if s > score {
                score = s;
                field = f;
            }
        }
        if best.as_ref().is_none_or(|b| score > b.score) {
            best = Some(RetrievalResult {
                record_id: Some(r.id),
                pose: r.pose,
                score,
                matched_field: field,
            });
        }
    }
    best.ok_or(SemanticError::EmptyStore)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::narrator::{DescriptionLevel, Stage};

    fn desc(text: &str, t: f64) -> Description {
        Description {
            text: text.into(),
            level: DescriptionLevel::Balanced,
            scene_tags: vec![],
            pose_at_capture: Pose::default(),
            timestamp: t,
            stage: Stage::Refined,
        }
    }

    /// Dot product computed from trigram multisets directly.
    fn oracle_dot(a: &str, b: &str) -> f64 {
        use std::collections::BTreeMap;
        let count = |s: &str| {
            let mut m: BTreeMap<usize, f64> = BTreeMap::new();
            for g in trigrams(s) {
                *m.entry(trigram_bucket(&g)).or_default() += 1.0;
            }
            m
        };
        let (ca, cb) = (count(a), count(b));
        let na = ca.values().map(|v| v * v).sum::<f64>().sqrt();
        let nb = cb.values().map(|v| v * v).sum::<f64>().sqrt();
        ca.iter().map(|(k, v)| v * cb.get(k).unwrap_or(&0.0)).sum::<f64>() / (na * nb)
    }

    #[test]
    fn embedding_is_unit_and_deterministic() {
        let a = embed_text("blue sofa");
        assert_eq!(a, embed_text("blue sofa"));
        assert!((dot(&a, &a) - 1.0).abs() < 1e-12);
        let e = embed_text("   ");
        assert_eq!(e[EMPTY_BUCKET], 1.0);
        assert_eq!(embed_text("Blue  Sofa"), a);
    }

    #[test]
    fn overlap_ordering_matches_oracle() {
        let a = embed_text("blue sofa");
        let near = dot(&a, &embed_text("blue sofa near entrance"));
        let far = dot(&a, &embed_text("red chair"));
        assert!(far < near);
        assert!((near - oracle_dot("blue sofa", "blue sofa near entrance")).abs() < 1e-12);
        assert!((far - oracle_dot("blue sofa", "red chair")).abs() < 1e-12);
    }

    #[test]
    fn record_ids_and_degenerate_scene() {
        let mut s = SemanticStore::new();
        assert_eq!(record(&mut s, Pose::default(), &desc("x", 1.0), &[]), 0);
        assert_eq!(record(&mut s, Pose::default(), &desc("y", 2.0), &[]), 1);
        assert_eq!(s.records()[0].scene_embedding, embed_text(""));
    }

    #[test]
    fn resolves_targets() {
        assert_eq!(
            resolve_target("I want to go to the blue sofa").unwrap(),
            TargetSpec::Named("blue sofa".into())
        );
        assert_eq!(
            resolve_target("Take me to the Chinese restaurant.").unwrap(),
            TargetSpec::Named("Chinese restaurant".into())
        );
        assert_eq!(resolve_target("take me back to the start").unwrap(), TargetSpec::Initial);
        assert!(matches!(
            resolve_target("the weather is nice"),
            Err(SemanticError::UnresolvedTarget(_))
        ));
        assert!(resolve_target("take me to the").is_err());
    }

    #[test]
    fn retrieval_picks_best_record() {
        let mut s = SemanticStore::new();
        record(&mut s, Pose::new(1.0, 0.0, 0.0), &desc("a blue sofa by the entrance", 1.0), &[]);
        record(&mut s, Pose::new(5.0, 0.0, 0.0), &desc("a red chair", 2.0), &[]);
        let r = retrieve(&s, &TargetSpec::Named("blue sofa".into()), Pose::default()).unwrap();
        assert_eq!(r.record_id, Some(0));
        assert_eq!(r.pose, Pose::new(1.0, 0.0, 0.0));
        let init = retrieve(&s, &TargetSpec::Initial, Pose::default()).unwrap();
        assert_eq!((init.pose, init.score), (Pose::default(), 1.0));
        assert_eq!(
            retrieve(&SemanticStore::new(), &TargetSpec::Named("x".into()), Pose::default()),
            Err(SemanticError::EmptyStore)
        );
    }

    #[test]
    fn export_round_trip() {
        let mut s = SemanticStore::new();
        record(&mut s, Pose::new(1.0, 2.0, 0.5), &desc("a blue sofa", 1.0), &[]);
        record(&mut s, Pose::new(3.0, 2.0, 0.5), &desc("a red chair", 4.5), &[]);
        let back = SemanticStore::import_jsonl(&s.export_jsonl()).unwrap();
        assert_eq!(back, s);
    }

    fn sighting(name: &str, category: &str, side: Side) -> PoiSighting {
        PoiSighting {
            poi: crate::gridworld::Poi {
                id: name.to_lowercase(),
                name: name.into(),
                category: category.into(),
                anchor: crate::Point::new(0.0, 0.0),
                facts: vec![],
                tags: vec![],
            },
            distance: 3.0,
            bearing: side.center_bearing(),
            side,
        }
    }

    #[test]
    fn views_hold_names_per_side() {
        let seen = [
            sighting("Juniper Cafe", "desk", Side::Left),
            sighting("Zephyr Hall", "desk", Side::Left),
            sighting("Echo Theater", "cafe", Side::Right),
            sighting("Birch Kiosk", "shop", Side::Behind),
        ];
        let views = scene_views(&seen);
        assert_eq!(views.len(), 2);
        assert_eq!((views[0].side, views[0].text.as_str()), (Side::Left, "Juniper Cafe Zephyr Hall"));
        assert_eq!((views[1].side, views[1].text.as_str()), (Side::Right, "Echo Theater"));
    }

    #[test]
    fn a_single_view_beats_a_crowded_overview() {
        let mut s = SemanticStore::new();
        let crowded = [
            sighting("Juniper Cafe", "desk", Side::Left),
            sighting("Zephyr Exhibit Hall", "desk", Side::Front),
            sighting("Ember Reading Room", "exhibit", Side::Right),
        ];
        record(&mut s, Pose::new(1.0, 0.0, 0.0), &desc("three places", 1.0), &crowded);
        record(&mut s, Pose::new(9.0, 0.0, 0.0), &desc("a theater", 2.0), &[sighting("Echo Theater", "cafe", Side::Left)]);
        let r = retrieve(&s, &TargetSpec::Named("Juniper Cafe".into()), Pose::default()).unwrap();
        assert_eq!(r.record_id, Some(0));
        assert_eq!(r.matched_field, MatchedField::View(Side::Left));
        assert!((r.score - 1.0).abs() < 1e-12);
        let back = SemanticStore::import_jsonl(&s.export_jsonl()).unwrap();
        assert_eq!(back, s);
    }
}
