//! Turtle-Gym: uncover the hidden twist behind a short story. Questions are
//! answered from a stem-keyed Yes/No/Maybe table; answers are scored against a
//! weighted rubric where each component pays out at most once.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::mdp::{ActionKind, ActionRecord, Environment, StepOutcome};

pub const BUDGET: usize = 15;
const WEIGHT_EPS: f64 = 1e-9;

static DEFAULT_PACK: &str = include_str!("../../data/stories.json");

/// Lowercase plus one suffix strip from {ing, ed, es, s}.
pub fn stem(word: &str) -> String {
    let w = word.to_lowercase();
    let keep = |n: usize| w.len() >= n + 3;
    if w.ends_with("ing") && keep(3) {
        return w[..w.len() - 3].to_string();
    }
    if w.ends_with("ed") && keep(2) {
        return w[..w.len() - 2].to_string();
    }
    if w.ends_with("es") && keep(2) && matches!(w.as_bytes()[w.len() - 3], b's' | b'x' | b'z' | b'h') {
        return w[..w.len() - 2].to_string();
    }
    if w.ends_with('s') && !(w.ends_with("ss") || w.ends_with("us") || w.ends_with("is")) && keep(1) {
        return w[..w.len() - 1].to_string();
    }
    w
}

pub fn stem_set(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(stem).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reply {
    Yes,
    No,
    Maybe,
}

impl Reply {
    pub fn as_str(self) -> &'static str {
        match self {
            Reply::Yes => "Yes",
            Reply::No => "No",
            Reply::Maybe => "Maybe",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RubricComponent {
    pub id: String,
    pub weight: f64,
    pub stems: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaEntry {
    pub stems: Vec<String>,
    pub reply: Reply,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurtleStory {
    pub surface: String,
    #[serde(default)]
    pub hidden_twist: String,
    pub rubric: Vec<RubricComponent>,
    pub qa: Vec<QaEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoryError {
    #[error("rubric weights must lie in (0, 1] and sum to 1, got sum {0}")]
    Weights(f64),
    #[error("rubric component `{0}` has no stems")]
    EmptyComponent(String),
    #[error("story pack is empty")]
    EmptyPack,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl TurtleStory {
    /// Validates weights and normalizes all stems through [`stem`].
    pub fn normalized(mut self) -> Result<Self, StoryError> {
        let sum: f64 = self.rubric.iter().map(|c| c.weight).sum();
        if (sum - 1.0).abs() > WEIGHT_EPS || self.rubric.iter().any(|c| !(c.weight > 0.0 && c.weight <= 1.0)) {
            return Err(StoryError::Weights(sum));
        }
        for c in &mut self.rubric {
            if c.stems.is_empty() {
                return Err(StoryError::EmptyComponent(c.id.clone()));
            }
            c.stems = c.stems.iter().map(|s| stem(s)).collect();
        }
        for q in &mut self.qa {
            q.stems = q.stems.iter().map(|s| stem(s)).collect();
        }
        Ok(self)
    }

    /// Public question predicates (stems only, no replies).
    pub fn questions(&self) -> Vec<Vec<String>> {
        self.qa.iter().map(|q| q.stems.clone()).collect()
    }

    /// Reply of the table entry with the largest stem overlap; first wins ties.
    pub fn reply_to(&self, question: &str) -> Reply {
        let asked = stem_set(question);
        let mut best: Option<(usize, Reply)> = None;
        for q in &self.qa {
            let overlap = q.stems.iter().filter(|s| asked.contains(*s)).count();
            if overlap > 0 && best.is_none_or(|(b, _)| overlap > b) {
                best = Some((overlap, q.reply));
            }
        }
        best.map_or(Reply::Maybe, |(_, r)| r)
    }
}

/// Accepts either one story object or an array of stories.
pub fn parse_pack(json: &str) -> Result<Vec<TurtleStory>, StoryError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Pack {
        Many(Vec<TurtleStory>),
        One(TurtleStory),
    }
    let stories = match serde_json::from_str::<Pack>(json)? {
        Pack::Many(v) => v,
        Pack::One(s) => vec![s],
    };
    if stories.is_empty() {
        return Err(StoryError::EmptyPack);
    }
    stories.into_iter().map(TurtleStory::normalized).collect()
}

pub fn load_pack(path: &Path) -> Result<Vec<TurtleStory>, StoryError> {
    parse_pack(&std::fs::read_to_string(path)?)
}

pub fn default_pack() -> Vec<TurtleStory> {
    parse_pack(DEFAULT_PACK).expect("shipped story pack is valid")
}

/// Strict judges need every stem of a component; the leaky train-time judge
/// accepts any single stem.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeMode {
    #[default]
    Strict,
    Leaky,
}

impl std::str::FromStr for JudgeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(JudgeMode::Strict),
            "leaky" => Ok(JudgeMode::Leaky),
            other => Err(format!("unknown judge `{other}` (strict|leaky)")),
        }
    }
}

/// Newly covered component indices and their summed weight. Pure in
/// `(answer, covered)`.
pub fn judge_answer(answer: &str, rubric: &[RubricComponent], covered: &[bool], mode: JudgeMode) -> (Vec<usize>, f64) {
    let stems = stem_set(answer);
    let newly: Vec<usize> = rubric
        .iter()
        .enumerate()
        .filter(|(i, _)| !covered[*i])
        .filter(|(_, c)| match mode {
            JudgeMode::Strict => c.stems.iter().all(|s| stems.contains(s)),
            JudgeMode::Leaky => c.stems.iter().any(|s| stems.contains(s)),
        })
        .map(|(i, _)| i)
        .collect();
    let score = newly.iter().map(|&i| rubric[i].weight).sum();
    (newly, score)
}

pub struct TurtleGym {
    task_id: String,
    story: Arc<TurtleStory>,
    covered: Vec<bool>,
    judge: JudgeMode,
}

impl TurtleGym {
    pub fn new(task_id: impl Into<String>, story: Arc<TurtleStory>, judge: JudgeMode) -> Self {
        let covered = vec![false; story.rubric.len()];
        Self { task_id: task_id.into(), story, covered, judge }
    }

    pub fn covered_weight(&self) -> f64 {
        self.story.rubric.iter().zip(&self.covered).filter(|(_, &c)| c).map(|(r, _)| r.weight).sum()
    }

    pub fn story(&self) -> &TurtleStory {
        &self.story
    }
}

impl Environment for TurtleGym {
    fn task_id(&self) -> &str {
        &self.task_id
    }

    fn context_fingerprint(&self) -> String {
        format!("turtle|{}|{}|{:?}", self.story.surface, self.story.hidden_twist, self.judge)
    }

    fn default_budget(&self) -> usize {
        BUDGET
    }

    fn intro(&self) -> String {
        format!(
            "{} `action`: a yes/no question. `search`: repeats the story. `answer`: your explanation.",
            self.story.surface
        )
    }

    fn step(&mut self, action: &ActionRecord) -> StepOutcome {
        match action.kind {
            ActionKind::Query => StepOutcome::neutral(self.story.reply_to(&action.content).as_str()),
            ActionKind::Search => StepOutcome::neutral(self.story.surface.clone()),
            ActionKind::Answer => {
                let (newly, score) = judge_answer(&action.content, &self.story.rubric, &self.covered, self.judge);
                for &i in &newly {
                    self.covered[i] = true;
                }
                let total = self.covered_weight();
                let success = total >= 1.0 - WEIGHT_EPS;
                let observation = format!(
                    "{} new component(s) covered, score {score:.3}, cumulative {total:.3}",
                    newly.len()
                );
                StepOutcome { observation, reward: score, success }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_halves() -> Vec<RubricComponent> {
        vec![
            RubricComponent { id: "a".into(), weight: 0.5, stems: vec!["plane".into(), "jump".into()] },
            RubricComponent { id: "b".into(), weight: 0.5, stems: vec!["parachute".into(), "fail".into()] },
        ]
    }

    #[test]
    fn stemming_rules() {
        assert_eq!(stem("Jumping"), "jump");
        assert_eq!(stem("failed"), "fail");
        assert_eq!(stem("boxes"), "box");
        assert_eq!(stem("planes"), "plane");
        assert_eq!(stem("boss"), "boss");
        assert_eq!(stem("press"), "press");
        assert_eq!(stem("is"), "is");
        for w in ["stranded", "rocks", "codes", "realize", "shipwreck"] {
            assert_eq!(stem(&stem(w)), stem(w));
        }
    }

    #[test]
    fn judge_examples() {
        let rubric = vec![
            RubricComponent { id: "x".into(), weight: 0.4, stems: vec!["a1".into()] },
            RubricComponent { id: "y".into(), weight: 0.3, stems: vec!["b1".into()] },
            RubricComponent { id: "z".into(), weight: 0.3, stems: vec!["c1".into()] },
        ];
        let (newly, score) = judge_answer("a1 and b1", &rubric, &[false; 3], JudgeMode::Strict);
        assert_eq!(newly, vec![0, 1]);
        assert!((score - 0.7).abs() < 1e-12);

        let halves = two_halves();
        assert_eq!(judge_answer("", &halves, &[false; 2], JudgeMode::Strict), (vec![], 0.0));
        let (_, full) = judge_answer("plane jump parachute fail", &halves, &[false; 2], JudgeMode::Strict);
        assert_eq!(full, 1.0);
    }

    #[test]
    fn sequential_coverage_bookkeeping() {
        let story = Arc::new(TurtleStory {
            surface: "s".into(),
            hidden_twist: "t".into(),
            rubric: two_halves(),
            qa: vec![],
        });
        let mut gym = TurtleGym::new("turtle:t", story, JudgeMode::Strict);
        let first = gym.step(&ActionRecord::answer("he jumped from a plane"));
        assert_eq!((first.reward, first.success), (0.5, false));
        let second = gym.step(&ActionRecord::answer("the parachute failed"));
        assert_eq!((second.reward, second.success), (0.5, true));
    }

    #[test]
    fn once_only_credit() {
        let story = Arc::new(default_pack().remove(0));
        let full: Vec<String> = story.rubric.iter().flat_map(|c| c.stems.clone()).collect();
        let mut gym = TurtleGym::new("turtle:0", story, JudgeMode::Strict);
        assert!((gym.step(&ActionRecord::answer(full.join(" "))).reward - 1.0).abs() < 1e-12);
        assert_eq!(gym.step(&ActionRecord::answer(full.join(" "))).reward, 0.0);
    }

    #[test]
    fn leaky_judge_accepts_single_stems() {
        let halves = two_halves();
        assert_eq!(judge_answer("plane", &halves, &[false; 2], JudgeMode::Strict).1, 0.0);
        assert_eq!(judge_answer("plane", &halves, &[false; 2], JudgeMode::Leaky).1, 0.5);
    }

    #[test]
    fn question_matching() {
        let pack = default_pack();
        let story = &pack[4];
        assert_eq!(story.reply_to("did he fly in a plane?"), Reply::Yes);
        assert_eq!(story.reply_to("was he shot"), Reply::No);
        assert_eq!(story.reply_to("was it murder"), Reply::No);
        assert_eq!(story.reply_to("what colour was the grass"), Reply::Maybe);
        let mut gym = TurtleGym::new("turtle:4", Arc::new(story.clone()), JudgeMode::Strict);
        assert_eq!(gym.step(&ActionRecord::search("again")).observation, story.surface);
        assert_eq!(gym.step(&ActionRecord::query("alone at night")).reward, 0.0);
    }

    #[test]
    fn shipped_pack_is_valid() {
        let pack = default_pack();
        assert!(pack.len() >= 5);
        for story in &pack {
            let yes: BTreeSet<&String> =
                story.qa.iter().filter(|q| q.reply == Reply::Yes).flat_map(|q| &q.stems).collect();
            for c in &story.rubric {
                assert!(c.stems.iter().all(|s| yes.contains(s)), "{} not reachable", c.id);
            }
        }
    }

    #[test]
    fn bad_weights_rejected() {
        let mut story = default_pack().remove(0);
        story.rubric[0].weight = 0.9;
        assert!(matches!(story.normalized(), Err(StoryError::Weights(_))));
        assert!(matches!(parse_pack("[]"), Err(StoryError::EmptyPack)));
    }
}
