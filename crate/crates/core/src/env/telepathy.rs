//! Telepathy-Gym: identify a hidden entity with yes/no attribute questions.
//! The simulated user is attribute-set membership over an entity knowledge base.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::mdp::{ActionKind, ActionRecord, Environment, StepOutcome};
use crate::rng::rng_from_seed;

pub const BUDGET: usize = 12;
pub const MIN_ENTITIES: usize = 16;
pub const UNKNOWN_ATTRIBUTE: &str = "Unknown attribute";

const NAME_POOL: [&str; 40] = [
    "lion", "eagle", "shark", "penguin", "cobra", "elephant", "owl", "dolphin", "frog", "bat", "horse", "octopus",
    "zebra", "crocodile", "parrot", "wolf", "camel", "turtle", "bee", "spider", "rabbit", "giraffe", "salmon",
    "tiger", "kangaroo", "goat", "swan", "lizard", "whale", "ant", "fox", "deer", "panda", "hawk", "crab", "moose",
    "otter", "seal", "snail", "bear",
];

const TAG_POOL: [&str; 12] = [
    "mammal", "flying", "aquatic", "venomous", "nocturnal", "domestic", "carnivore", "striped", "horned", "large",
    "social", "tropical",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    pub attributes: BTreeSet<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum KbError {
    #[error("knowledge base needs at least {MIN_ENTITIES} entities, got {0}")]
    TooSmall(usize),
    #[error("duplicate entity name `{0}`")]
    DuplicateName(String),
    #[error("entities `{0}` and `{1}` share an identical attribute set")]
    Indistinguishable(String, String),
    #[error("attribute tags must be single lowercase tokens: `{0}`")]
    BadTag(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Serialize, Deserialize)]
struct KbFile {
    entities: Vec<Entity>,
}

/// Entity knowledge base; the vocabulary is the union of all attribute tags.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntityKb {
    entities: Vec<Entity>,
    vocabulary: Vec<String>,
}

fn is_token(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit())
}

impl EntityKb {
    pub fn new(entities: Vec<Entity>) -> Result<Self, KbError> {
        if entities.len() < MIN_ENTITIES {
            return Err(KbError::TooSmall(entities.len()));
        }
        let mut seen_names = HashMap::new();
        let mut seen_sets: HashMap<&BTreeSet<String>, &str> = HashMap::new();
        for e in &entities {
            if seen_names.insert(e.name.as_str(), ()).is_some() {
                return Err(KbError::DuplicateName(e.name.clone()));
            }
            if let Some(tag) = e.attributes.iter().find(|t| !is_token(t)) {
                return Err(KbError::BadTag(tag.clone()));
            }
            if let Some(other) = seen_sets.insert(&e.attributes, &e.name) {
                return Err(KbError::Indistinguishable(other.to_string(), e.name.clone()));
            }
        }
        let vocabulary: BTreeSet<String> = entities.iter().flat_map(|e| e.attributes.iter().cloned()).collect();
        Ok(Self { entities, vocabulary: vocabulary.into_iter().collect() })
    }

    pub fn load(path: &Path) -> Result<Self, KbError> {
        let file: KbFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::new(file.entities)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&KbFile { entities: self.entities.clone() }).expect("serializable")
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.entities.iter().position(|e| e.name == name)
    }

    pub fn has(&self, entity: usize, tag: &str) -> bool {
        self.entities[entity].attributes.contains(tag)
    }

    /// Tags mentioned by `text`: explicit tag tokens plus the attributes of
    /// any entity it names.
    pub fn mentioned_tags(&self, text: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for tok in tokens(text) {
            if self.vocabulary.contains(&tok) {
                out.insert(tok.clone());
            }
            if let Some(e) = self.entities.iter().find(|e| e.name == tok) {
                out.extend(e.attributes.iter().cloned());
            }
        }
        out
    }

    /// First vocabulary tag appearing as a token in `text`.
    pub fn match_tag(&self, text: &str) -> Option<&str> {
        tokens(text).find_map(|tok| self.vocabulary.iter().find(|t| **t == tok).map(String::as_str))
    }
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_ascii_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_ascii_lowercase)
}

/// Lowercase, trimmed, trailing punctuation and a leading article removed.
pub fn canonicalize(answer: &str) -> String {
    let lower = answer.trim().to_lowercase();
    let trimmed = lower.trim_end_matches(['.', '!', '?']).trim();
    let words: Vec<&str> = trimmed.split_whitespace().collect();
    let words = match words.first() {
        Some(&("a" | "an" | "the")) => &words[1..],
        _ => &words[..],
    };
    words.join(" ")
}

/// Deterministic knowledge base of 16 entities over 12 tags. Four seed-chosen
/// tags carry a distinct 4-bit code per entity, which makes attribute sets
/// pairwise distinct and guarantees a depth-4 decision tree.
pub fn build_default_kb(seed: u64) -> EntityKb {
    let mut rng = rng_from_seed(seed ^ 0x7E1E_9A7B);
    let mut names = NAME_POOL.to_vec();
    names.shuffle(&mut rng);
    let mut tags = TAG_POOL.to_vec();
    tags.shuffle(&mut rng);
    let (code_tags, free_tags) = tags.split_at(4);
    let mut codes: Vec<usize> = (0..MIN_ENTITIES).collect();
    codes.shuffle(&mut rng);
    let entities = names
        .iter()
        .take(MIN_ENTITIES)
        .zip(codes)
        .map(|(name, code)| {
            let mut attributes: BTreeSet<String> = code_tags
                .iter()
                .enumerate()
                .filter(|(bit, _)| code >> bit & 1 == 1)
                .map(|(_, t)| t.to_string())
                .collect();
            for t in free_tags {
                if rng.gen_bool(0.5) {
                    attributes.insert(t.to_string());
                }
            }
            Entity { name: name.to_string(), attributes }
        })
        .collect();
    EntityKb::new(entities).expect("codes make attribute sets distinct")
}

/// Minimum worst-case number of yes/no attribute splits needed to isolate any
/// entity of `candidates` (a bitmask over `kb` entities). `None` when two
/// candidates cannot be separated.
pub fn min_split_depth(kb: &EntityKb, candidates: u64) -> Option<u32> {
    fn solve(masks: &[u64], set: u64, memo: &mut HashMap<u64, Option<u32>>) -> Option<u32> {
        if set.count_ones() <= 1 {
            return Some(0);
        }
        if let Some(&v) = memo.get(&set) {
            return v;
        }
        let mut best: Option<u32> = None;
        let lower = 64 - (u64::from(set.count_ones()) - 1).leading_zeros();
        for &m in masks {
            let (yes, no) = (set & m, set & !m);
            if yes == 0 || no == 0 {
                continue;
            }
            if let (Some(a), Some(b)) = (solve(masks, yes, memo), solve(masks, no, memo)) {
                let d = 1 + a.max(b);
                if best.is_none_or(|cur| d < cur) {
                    best = Some(d);
                }
                if d == lower {
                    break;
                }
            }
        }
        memo.insert(set, best);
        best
    }
    let masks = attribute_masks(kb);
    solve(&masks, candidates, &mut HashMap::new())
}

/// Bitmask of entities holding each vocabulary tag.
pub fn attribute_masks(kb: &EntityKb) -> Vec<u64> {
    assert!(kb.len() <= 64, "bitmask search supports at most 64 entities");
    kb.vocabulary()
        .iter()
        .map(|tag| {
            kb.entities()
                .iter()
                .enumerate()
                .filter(|(_, e)| e.attributes.contains(tag))
                .fold(0u64, |m, (i, _)| m | 1 << i)
        })
        .collect()
}

pub struct TelepathyGym {
    task_id: String,
    kb: Arc<EntityKb>,
    target: usize,
}

impl TelepathyGym {
    pub fn new(task_id: impl Into<String>, kb: Arc<EntityKb>, target: usize) -> Self {
        assert!(target < kb.len());
        Self { task_id: task_id.into(), kb, target }
    }

    /// Target chosen by seed.
    pub fn from_seed(seed: u64, kb: Arc<EntityKb>) -> Self {
        let target = rng_from_seed(seed).gen_range(0..kb.len());
        Self::new(format!("telepathy:{seed}"), kb, target)
    }

    pub fn target(&self) -> &Entity {
        &self.kb.entities()[self.target]
    }
}

impl Environment for TelepathyGym {
    fn task_id(&self) -> &str {
        &self.task_id
    }

    fn context_fingerprint(&self) -> String {
        let t = self.target();
        let attrs: Vec<&str> = t.attributes.iter().map(String::as_str).collect();
        format!("telepathy|{}|{}|kb={}", t.name, attrs.join(","), self.kb.len())
    }

    fn default_budget(&self) -> usize {
        BUDGET
    }

    fn intro(&self) -> String {
        "Guess the hidden entity. `action`: a yes/no question naming one attribute. \
         `search`: lists the attributes. `answer`: the entity name."
            .into()
    }

    fn step(&mut self, action: &ActionRecord) -> StepOutcome {
        match action.kind {
            ActionKind::Query => match self.kb.match_tag(&action.content) {
                Some(tag) if self.kb.has(self.target, tag) => StepOutcome::neutral("Yes"),
                Some(_) => StepOutcome::neutral("No"),
                None => StepOutcome::neutral(UNKNOWN_ATTRIBUTE),
            },
            ActionKind::Search => StepOutcome::neutral(format!("attributes: {}", self.kb.vocabulary().join(", "))),
            ActionKind::Answer => {
                let target = self.target();
                if canonicalize(&action.content) == target.name {
                    return StepOutcome { observation: "Correct".into(), reward: 1.0, success: true };
                }
                let shared: Vec<String> = self
                    .kb
                    .mentioned_tags(&action.content)
                    .into_iter()
                    .filter(|t| target.attributes.contains(t))
                    .collect();
                if shared.is_empty() {
                    StepOutcome::neutral("Incorrect.")
                } else {
                    StepOutcome::neutral(format!("Incorrect. The target is also: {}", shared.join(", ")))
                }
            }
        }
    }
}

/// Parses the tag list out of a wrong-answer observation.
pub fn parse_shared_tags(observation: &str) -> Vec<String> {
    observation
        .split_once(':')
        .map(|(_, rest)| rest.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gym(seed: u64) -> (Arc<EntityKb>, TelepathyGym) {
        let kb = Arc::new(build_default_kb(0));
        let g = TelepathyGym::from_seed(seed, kb.clone());
        (kb, g)
    }

    #[test]
    fn kb_is_deterministic_and_valid() {
        let a = build_default_kb(3);
        assert_eq!(a, build_default_kb(3));
        assert_ne!(a, build_default_kb(4));
        assert!(a.len() >= 16 && a.vocabulary().len() >= 10);
        let sets: BTreeSet<_> = a.entities().iter().map(|e| &e.attributes).collect();
        assert_eq!(sets.len(), a.len());
    }

    #[test]
    fn kb_admits_log2_decision_tree() {
        for seed in 0..10 {
            let kb = build_default_kb(seed);
            let all = (1u64 << kb.len()) - 1;
            let bound = (kb.len() as f64).log2().ceil() as u32;
            assert!(min_split_depth(&kb, all).unwrap() <= bound, "seed {seed}");
        }
    }

    #[test]
    fn membership_questions() {
        let (_, mut g) = gym(5);
        let target = g.target().clone();
        let has = target.attributes.iter().next().unwrap().clone();
        assert_eq!(g.step(&ActionRecord::query(format!("Is it {has}?"))).observation, "Yes");
        let lacks = g.kb.vocabulary().iter().find(|t| !target.attributes.contains(*t)).unwrap().clone();
        assert_eq!(g.step(&ActionRecord::query(format!("is it {lacks}"))).observation, "No");
        assert_eq!(g.step(&ActionRecord::query("is it blue")).observation, UNKNOWN_ATTRIBUTE);
        let s = g.step(&ActionRecord::search("list"));
        assert!(s.observation.starts_with("attributes: "));
    }

    #[test]
    fn answer_is_case_insensitive() {
        let (_, mut g) = gym(9);
        let name = g.target().name.to_uppercase();
        let out = g.step(&ActionRecord::answer(format!("The {name}.")));
        assert_eq!((out.reward, out.success), (1.0, true));
    }

    #[test]
    fn wrong_answer_lists_shared_tags() {
        let kb = Arc::new(build_default_kb(0));
        // Brute-force a (target, guess) pair sharing exactly three tags.
        let (t, g) = (0..kb.len())
            .flat_map(|t| (0..kb.len()).map(move |g| (t, g)))
            .find(|&(t, g)| {
                t != g && kb.entities()[t].attributes.intersection(&kb.entities()[g].attributes).count() == 3
            })
            .expect("shipped KB has such a pair");
        let shared: Vec<String> =
            kb.entities()[t].attributes.intersection(&kb.entities()[g].attributes).cloned().collect();
        let mut gym = TelepathyGym::new("telepathy:x", kb.clone(), t);
        let out = gym.step(&ActionRecord::answer(kb.entities()[g].name.clone()));
        assert_eq!(out.reward, 0.0);
        assert!(!out.success);
        assert_eq!(parse_shared_tags(&out.observation), shared);
    }

    #[test]
    fn kb_validation() {
        let kb = build_default_kb(1);
        let mut entities = kb.entities().to_vec();
        entities[1].attributes = entities[0].attributes.clone();
        assert!(matches!(EntityKb::new(entities), Err(KbError::Indistinguishable(..))));
        assert!(matches!(EntityKb::new(kb.entities()[..5].to_vec()), Err(KbError::TooSmall(5))));
        let json = kb.to_json();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb.json");
        std::fs::write(&path, json).unwrap();
        assert_eq!(EntityKb::load(&path).unwrap(), kb);
    }

    #[test]
    fn canonicalization() {
        assert_eq!(canonicalize("  The Lion! "), "lion");
        assert_eq!(canonicalize("an owl"), "owl");
        assert_eq!(canonicalize("Sea   Otter"), "sea otter");
    }
}
