//! Telepathy-Gym agents over a known entity knowledge base.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{Template, TemplateAdapter, RESERVE_TURNS};
use crate::env::telepathy::{attribute_masks, min_split_depth, parse_shared_tags, EntityKb};
use crate::mdp::{ActionKind, ActionRecord, Agent, AgentMove, AgentView};
use crate::rng::{rng_from_seed, Rng};

fn question(tag: &str) -> ActionRecord {
    ActionRecord::query(format!("is it {tag}?"))
}

/// Candidate set and question history for one episode.
pub struct TelepathyMemory {
    kb: Arc<EntityKb>,
    masks: Vec<u64>,
    candidates: u64,
    asked: BTreeSet<String>,
    guessed: BTreeSet<usize>,
    last_answer_wrong: bool,
    seen: usize,
}

impl TelepathyMemory {
    pub fn new(kb: Arc<EntityKb>) -> Self {
        let masks = attribute_masks(&kb);
        let all = if kb.len() == 64 { u64::MAX } else { (1u64 << kb.len()) - 1 };
        Self {
            kb,
            masks,
            candidates: all,
            asked: BTreeSet::new(),
            guessed: BTreeSet::new(),
            last_answer_wrong: false,
            seen: 0,
        }
    }

    pub fn candidates(&self) -> Vec<usize> {
        (0..self.kb.len()).filter(|i| self.candidates >> i & 1 == 1).collect()
    }

    fn tag_mask(&self, tag: &str) -> u64 {
        let i = self.kb.vocabulary().iter().position(|t| t == tag).expect("vocabulary tag");
        self.masks[i]
    }

    fn constrain(&mut self, tag: &str, present: bool) {
        let m = self.tag_mask(tag);
        let next = if present { self.candidates & m } else { self.candidates & !m };
        // Contradictory feedback: keep the last consistent set rather than
        // emptying it.
        if next != 0 {
            self.candidates = next;
        }
    }

    pub fn observe(&mut self, view: &AgentView<'_>) {
        for turn in &view.turns[self.seen.min(view.turns.len())..] {
            match turn.kind() {
                ActionKind::Query => {
                    let Some(tag) = self.kb.match_tag(&turn.action.content).map(str::to_string) else { continue };
                    self.asked.insert(tag.clone());
                    match turn.observation.as_str() {
                        "Yes" => self.constrain(&tag, true),
                        "No" => self.constrain(&tag, false),
                        _ => {}
                    }
                }
                ActionKind::Search => {}
                ActionKind::Answer => {
                    if turn.raw_reward > 0.0 {
                        self.last_answer_wrong = false;
                        continue;
                    }
                    self.last_answer_wrong = true;
                    let name = crate::env::telepathy::canonicalize(&turn.action.content);
                    let Some(idx) = self.kb.position(&name) else { continue };
                    self.guessed.insert(idx);
                    self.candidates &= !(1 << idx);
                    let shared: BTreeSet<String> = parse_shared_tags(&turn.observation).into_iter().collect();
                    let attrs = self.kb.entities()[idx].attributes.clone();
                    for tag in attrs {
                        self.constrain(&tag, shared.contains(&tag));
                    }
                }
            }
        }
        self.seen = view.turns.len();
    }

    pub fn unique(&self) -> bool {
        self.candidates.count_ones() == 1
    }

    pub fn last_answer_wrong(&self) -> bool {
        self.last_answer_wrong
    }

    /// Unasked tag with the smallest worst-case remaining split depth; ties go
    /// to the more balanced split, then vocabulary order.
    pub fn best_question(&self) -> Option<String> {
        let set = self.candidates;
        let mut best: Option<((u32, u32), &str)> = None;
        for (tag, &m) in self.kb.vocabulary().iter().zip(&self.masks) {
            let (yes, no) = (set & m, set & !m);
            if yes == 0 || no == 0 || self.asked.contains(tag) {
                continue;
            }
            let depth = |s: u64| min_split_depth(&self.kb, s).unwrap_or(u32::MAX - 1);
            let worst = depth(yes).max(depth(no));
            let imbalance = yes.count_ones().abs_diff(no.count_ones());
            if best.is_none_or(|(b, _)| (worst, imbalance) < b) {
                best = Some(((worst, imbalance), tag));
            }
        }
        best.map(|(_, t)| t.to_string())
    }

    pub fn best_guess(&self) -> Option<&str> {
        self.candidates().first().map(|&i| self.kb.entities()[i].name.as_str())
    }

    fn random_unasked(&self, rng: &mut Rng) -> String {
        let pool: Vec<&String> = self.kb.vocabulary().iter().filter(|t| !self.asked.contains(*t)).collect();
        match pool.choose(rng) {
            Some(t) => t.to_string(),
            None => self.kb.vocabulary().choose(rng).expect("non-empty vocabulary").clone(),
        }
    }
}

/// Optimal-split questioning, then a single answer once one entity is left.
pub struct BehavioralTelepathyAgent {
    memory: TelepathyMemory,
    reserve_turns: usize,
}

impl BehavioralTelepathyAgent {
    pub fn new(kb: Arc<EntityKb>) -> Self {
        Self { memory: TelepathyMemory::new(kb), reserve_turns: RESERVE_TURNS }
    }
}

impl Agent for BehavioralTelepathyAgent {
    fn act(&mut self, view: &AgentView<'_>) -> AgentMove {
        let m = &mut self.memory;
        m.observe(view);
        let remaining = view.remaining();
        let after_answer = view.last().is_some_and(|t| t.kind() == ActionKind::Answer);
        let may_answer = !after_answer || remaining == 1;
        let next_question = m.best_question();
        if may_answer && (m.unique() || next_question.is_none() || remaining <= self.reserve_turns) {
            if let Some(name) = m.best_guess() {
                return AgentMove::Act(ActionRecord::answer(name));
            }
        }
        match next_question {
            Some(tag) => AgentMove::Act(question(&tag)),
            None => AgentMove::Act(ActionRecord::search("list attributes")),
        }
    }
}

/// Baseline: two fixed questions, then a fresh random guess every turn.
pub struct NaiveTelepathyAgent {
    kb: Arc<EntityKb>,
    rng: Rng,
    guessed: BTreeSet<usize>,
}

impl NaiveTelepathyAgent {
    pub const K0: usize = 2;

    pub fn new(kb: Arc<EntityKb>, seed: u64) -> Self {
        Self { kb, rng: rng_from_seed(seed), guessed: BTreeSet::new() }
    }
}

impl Agent for NaiveTelepathyAgent {
    fn act(&mut self, view: &AgentView<'_>) -> AgentMove {
        let turn = view.turns.len();
        if turn < Self::K0 {
            return AgentMove::Act(question(&self.kb.vocabulary()[turn]));
        }
        let fresh: Vec<usize> = (0..self.kb.len()).filter(|i| !self.guessed.contains(i)).collect();
        let pick = if fresh.is_empty() { self.rng.gen_range(0..self.kb.len()) } else { *fresh.choose(&mut self.rng).expect("non-empty") };
        self.guessed.insert(pick);
        AgentMove::Act(ActionRecord::answer(self.kb.entities()[pick].name.clone()))
    }
}

pub struct TelepathyAdapter {
    memory: TelepathyMemory,
}

impl TelepathyAdapter {
    pub fn new(kb: Arc<EntityKb>) -> Self {
        Self { memory: TelepathyMemory::new(kb) }
    }
}

impl TemplateAdapter for TelepathyAdapter {
    fn observe(&mut self, view: &AgentView<'_>) {
        self.memory.observe(view);
    }

    fn unique(&mut self) -> bool {
        self.memory.unique()
    }

    fn last_answer_wrong(&self) -> bool {
        self.memory.last_answer_wrong()
    }

    fn render(&mut self, template: Template, _view: &AgentView<'_>, rng: &mut Rng) -> ActionRecord {
        let m = &self.memory;
        match template {
            Template::ProbeInformative => question(&m.best_question().unwrap_or_else(|| m.random_unasked(rng))),
            Template::ProbeRandom => question(&m.random_unasked(rng)),
            Template::Search => ActionRecord::search("list attributes"),
            Template::AnswerBest => ActionRecord::answer(m.best_guess().unwrap_or("unknown").to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::telepathy::{build_default_kb, TelepathyGym};
    use crate::mdp::{run_episode, EpisodeConfig};

    #[test]
    fn behavioral_finds_every_target_in_five_turns() {
        let kb = Arc::new(build_default_kb(0));
        let bound = (kb.len() as f64).log2().ceil() as usize + 1;
        for target in 0..kb.len() {
            let gym = Box::new(TelepathyGym::new("telepathy:t", kb.clone(), target));
            let mut agent = BehavioralTelepathyAgent::new(kb.clone());
            let t = run_episode(gym, &mut agent, &EpisodeConfig { budget: 12, seed: 0 });
            assert!(t.succeeded(), "target {target}");
            assert!(t.len() <= bound, "target {target}: {} turns", t.len());
            assert_eq!(t.user_action_count(), 1);
        }
    }

    #[test]
    fn wrong_answer_feedback_refines_candidates() {
        let kb = Arc::new(build_default_kb(0));
        let gym = Box::new(TelepathyGym::new("telepathy:t", kb.clone(), 5));
        let mut ep = crate::mdp::Episode::new(gym, 12);
        ep.step(ActionRecord::answer(kb.entities()[0].name.clone())).unwrap();
        let mut memory = TelepathyMemory::new(kb.clone());
        memory.observe(&ep.view());
        assert!(memory.candidates().contains(&5));
        assert!(!memory.candidates().contains(&0));
        assert!(memory.candidates().len() < kb.len() - 1);
    }

    #[test]
    fn naive_never_repeats_a_guess() {
        let kb = Arc::new(build_default_kb(0));
        let gym = Box::new(TelepathyGym::new("telepathy:t", kb.clone(), 3));
        let mut agent = NaiveTelepathyAgent::new(kb, 4);
        let t = run_episode(gym, &mut agent, &EpisodeConfig { budget: 12, seed: 0 });
        let guesses: BTreeSet<&str> =
            t.turns.iter().filter(|u| u.kind() == ActionKind::Answer).map(|u| u.action.content.as_str()).collect();
        assert_eq!(guesses.len(), t.user_action_count());
    }
}
