//! Turtle-Gym agents. They see the question bank of the story (predicates
//! only) and learn replies by asking.

use std::collections::BTreeSet;

use rand::Rng as _;

use super::{Template, TemplateAdapter, RESERVE_TURNS};
use crate::mdp::{ActionKind, ActionRecord, Agent, AgentMove, AgentView};
use crate::rng::Rng;

fn ask(stems: &[String]) -> ActionRecord {
    ActionRecord::query(format!("{}?", stems.join(" ")))
}

pub struct TurtleMemory {
    questions: Vec<Vec<String>>,
    asked: BTreeSet<usize>,
    confirmed: Vec<String>,
    answered: bool,
    last_answer_wrong: bool,
    seen: usize,
}

impl TurtleMemory {
    pub fn new(questions: Vec<Vec<String>>) -> Self {
        Self { questions, asked: BTreeSet::new(), confirmed: Vec::new(), answered: false, last_answer_wrong: false, seen: 0 }
    }

    fn index_of(&self, content: &str) -> Option<usize> {
        let text = content.trim_end_matches('?');
        self.questions.iter().position(|q| q.join(" ") == text)
    }

    pub fn observe(&mut self, view: &AgentView<'_>) {
        for turn in &view.turns[self.seen.min(view.turns.len())..] {
            match turn.kind() {
                ActionKind::Query => {
                    let Some(i) = self.index_of(&turn.action.content) else { continue };
                    if self.asked.insert(i) && turn.observation == "Yes" {
                        self.confirmed.extend(self.questions[i].iter().cloned());
                    }
                }
                ActionKind::Search => {}
                ActionKind::Answer => {
                    self.answered = true;
                    self.last_answer_wrong = turn.raw_reward == 0.0;
                }
            }
        }
        self.seen = view.turns.len();
    }

    pub fn next_unasked(&self) -> Option<usize> {
        (0..self.questions.len()).find(|i| !self.asked.contains(i))
    }

    /// Every bank question has been asked.
    pub fn complete(&self) -> bool {
        self.next_unasked().is_none()
    }

    /// Explanation built from every confirmed predicate.
    pub fn explanation(&self) -> String {
        if self.confirmed.is_empty() {
            "no explanation yet".into()
        } else {
            self.confirmed.join(" ")
        }
    }
}

/// Asks every bank question once, then submits one explanation assembled
/// from the confirmed predicates.
pub struct BehavioralTurtleAgent {
    memory: TurtleMemory,
    reserve_turns: usize,
}

impl BehavioralTurtleAgent {
    pub fn new(questions: Vec<Vec<String>>) -> Self {
        Self { memory: TurtleMemory::new(questions), reserve_turns: RESERVE_TURNS }
    }
}

impl Agent for BehavioralTurtleAgent {
    fn act(&mut self, view: &AgentView<'_>) -> AgentMove {
        let m = &mut self.memory;
        m.observe(view);
        if m.answered {
            return AgentMove::Stop;
        }
        match m.next_unasked() {
            Some(i) if view.remaining() > self.reserve_turns => AgentMove::Act(ask(&m.questions[i])),
            _ => AgentMove::Act(ActionRecord::answer(m.explanation())),
        }
    }
}

/// Baseline: two questions, then answers with one predicate per turn.
pub struct NaiveTurtleAgent {
    questions: Vec<Vec<String>>,
}

impl NaiveTurtleAgent {
    pub const K0: usize = 2;

    pub fn new(questions: Vec<Vec<String>>) -> Self {
        Self { questions }
    }
}

impl Agent for NaiveTurtleAgent {
    fn act(&mut self, view: &AgentView<'_>) -> AgentMove {
        let turn = view.turns.len();
        let n = self.questions.len();
        if turn < Self::K0 {
            return AgentMove::Act(ask(&self.questions[turn % n]));
        }
        AgentMove::Act(ActionRecord::answer(self.questions[(turn - Self::K0) % n].join(" ")))
    }
}

/// Answers with the `p`-th word of every bank predicate on its `p`-th turn:
/// many loose keywords, few complete explanations.
pub struct KeywordExploiterAgent {
    questions: Vec<Vec<String>>,
}

impl KeywordExploiterAgent {
    pub fn new(questions: Vec<Vec<String>>) -> Self {
        Self { questions }
    }
}

impl Agent for KeywordExploiterAgent {
    fn act(&mut self, view: &AgentView<'_>) -> AgentMove {
        let p = view.turns.len();
        let words: Vec<&str> = self.questions.iter().filter_map(|q| q.get(p)).map(String::as_str).collect();
        if words.is_empty() {
            return AgentMove::Stop;
        }
        AgentMove::Act(ActionRecord::answer(words.join(" ")))
    }
}

pub struct TurtleAdapter {
    memory: TurtleMemory,
}

impl TurtleAdapter {
    pub fn new(questions: Vec<Vec<String>>) -> Self {
        Self { memory: TurtleMemory::new(questions) }
    }
}

impl TemplateAdapter for TurtleAdapter {
    fn observe(&mut self, view: &AgentView<'_>) {
        self.memory.observe(view);
    }

    fn unique(&mut self) -> bool {
        self.memory.complete()
    }

    fn last_answer_wrong(&self) -> bool {
        self.memory.last_answer_wrong
    }

    fn render(&mut self, template: Template, _view: &AgentView<'_>, rng: &mut Rng) -> ActionRecord {
        let m = &self.memory;
        let n = m.questions.len();
        match template {
            Template::ProbeInformative => ask(&m.questions[m.next_unasked().unwrap_or_else(|| rng.gen_range(0..n))]),
            Template::ProbeRandom => ask(&m.questions[rng.gen_range(0..n)]),
            Template::Search => ActionRecord::search("repeat the story"),
            Template::AnswerBest => ActionRecord::answer(m.explanation()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::turtle::{default_pack, JudgeMode, TurtleGym};
    use crate::mdp::{run_episode, EpisodeConfig};
    use std::sync::Arc;

    fn play(agent: &mut dyn Agent, story: usize, judge: JudgeMode) -> crate::Trajectory {
        let story = Arc::new(default_pack().remove(story));
        let gym = Box::new(TurtleGym::new("turtle:t", story, judge));
        run_episode(gym, agent, &EpisodeConfig { budget: 15, seed: 0 })
    }

    #[test]
    fn behavioral_fully_explains_every_story_with_one_answer() {
        for (i, story) in default_pack().into_iter().enumerate() {
            let t = play(&mut BehavioralTurtleAgent::new(story.questions()), i, JudgeMode::Strict);
            assert!(t.succeeded(), "story {i}: {}", t.to_json_line());
            assert_eq!(t.user_action_count(), 1);
            assert!((t.raw_return() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn exploiter_scores_well_only_under_the_leaky_judge() {
        let (mut leaky, mut strict) = (0.0, 0.0);
        let pack = default_pack();
        for (i, story) in pack.iter().enumerate() {
            leaky += play(&mut KeywordExploiterAgent::new(story.questions()), i, JudgeMode::Leaky).raw_return();
            strict += play(&mut KeywordExploiterAgent::new(story.questions()), i, JudgeMode::Strict).raw_return();
        }
        let n = pack.len() as f64;
        assert!(leaky / n > 0.9, "leaky {}", leaky / n);
        assert!(strict / n < 0.5, "strict {}", strict / n);
    }

    #[test]
    fn naive_answers_after_two_questions() {
        let story = default_pack().remove(0);
        let t = play(&mut NaiveTurtleAgent::new(story.questions()), 0, JudgeMode::Strict);
        assert_eq!(t.kinds()[..2], [ActionKind::Query, ActionKind::Query]);
        assert!(t.kinds()[2..].iter().all(|k| *k == ActionKind::Answer));
    }
}
