//! Function-Gym agents built on brute-force hypothesis elimination.

use std::collections::{HashMap, HashSet};
use std::ops::ControlFlow;

use rand::Rng as _;

use super::{TemplateAdapter, Template, RESERVE_TURNS};
use crate::env::function::{
    agrees, canonical_probes, for_each_hypothesis, parse_answer, parse_query, Expr, HypothesisSpace,
    Input, Probe, CORRECT, INCORRECT, INPUT_RANGE,
};
use crate::mdp::{ActionKind, ActionRecord, Agent, AgentMove, AgentView};
use crate::rng::{rng_from_seed, Rng};

/// Cap on depth-3 hypotheses kept when the depth-2 space is exhausted.
const DEEP_CAP: usize = 20_000;
/// Hypotheses scored when choosing an adaptive probe.
const PROBE_SAMPLE: usize = 4_000;
const PROBE_CANDIDATES: usize = 48;

const DIV_ERROR_PREFIX: &str = "error: division by zero";
const SEARCH_PREFIX: &str = "test input: ";

fn to_input(x: &[i64; 4]) -> Input {
    x.map(|v| v as f64)
}

fn render_probe(x: &Input) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// Distinct values with multiplicities, most frequent first; ties keep the
/// order of first appearance.
fn group_values(values: impl IntoIterator<Item = f64>) -> Vec<(f64, usize)> {
    let mut sorted: Vec<(f64, usize)> = values.into_iter().enumerate().map(|(i, v)| (v, i)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // (first index, value at first index, count)
    let mut groups: Vec<(usize, f64, usize)> = Vec::new();
    let mut anchor = f64::NAN;
    for (v, i) in sorted {
        match groups.last_mut() {
            Some(g) if agrees(v, anchor) => {
                g.2 += 1;
                if i < g.0 {
                    (g.0, g.1) = (i, v);
                }
            }
            _ => {
                anchor = v;
                groups.push((i, v, 1));
            }
        }
    }
    groups.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)));
    groups.into_iter().map(|(_, v, n)| (v, n)).collect()
}

struct DeepHypotheses {
    n_probes: usize,
    exprs: Vec<Expr>,
}

/// Everything the function agents remember about one episode.
pub struct FunctionMemory {
    space: HypothesisSpace,
    max_depth: usize,
    deep: Option<DeepHypotheses>,
    test_input: Option<Input>,
    asked: Vec<Input>,
    rejected: Vec<f64>,
    last_answer_wrong: bool,
    seen: usize,
    answers: Option<Vec<(f64, usize)>>,
}

impl FunctionMemory {
    pub fn new(max_depth: usize) -> Self {
        Self {
            space: HypothesisSpace::new(max_depth),
            max_depth,
            deep: None,
            test_input: None,
            asked: Vec::new(),
            rejected: Vec::new(),
            last_answer_wrong: false,
            seen: 0,
            answers: None,
        }
    }

    pub fn test_input(&self) -> Option<Input> {
        self.test_input
    }

    pub fn last_answer_wrong(&self) -> bool {
        self.last_answer_wrong
    }

    pub fn n_probes(&self) -> usize {
        self.space.probes().len()
    }

    pub fn was_asked(&self, x: &Input) -> bool {
        self.asked.contains(x)
    }

    /// Absorbs turns played since the last call.
    pub fn observe(&mut self, view: &AgentView<'_>) {
        if view.turns.len() != self.seen {
            self.answers = None;
        }
        for turn in &view.turns[self.seen.min(view.turns.len())..] {
            let content = &turn.action.content;
            let obs = turn.observation.as_str();
            match turn.kind() {
                ActionKind::Query => {
                    let Some(x) = parse_query(content) else { continue };
                    self.asked.push(x);
                    let probe = if obs.starts_with(DIV_ERROR_PREFIX) {
                        Probe::error(x)
                    } else if let Ok(v) = obs.parse::<f64>() {
                        Probe::new(x, v)
                    } else {
                        continue;
                    };
                    self.space.observe(probe);
                }
                ActionKind::Search => {
                    if let Some(x) = obs.strip_prefix(SEARCH_PREFIX).and_then(parse_query) {
                        self.test_input = Some(x);
                        self.apply_exclusions();
                    }
                }
                ActionKind::Answer => {
                    if obs == INCORRECT {
                        self.last_answer_wrong = true;
                        if let Some(v) = parse_answer(content) {
                            self.rejected.push(v);
                            self.apply_exclusions();
                        }
                    } else if obs == CORRECT {
                        self.last_answer_wrong = false;
                    }
                }
            }
        }
        self.seen = view.turns.len();
    }

    fn apply_exclusions(&mut self) {
        let Some(x) = self.test_input else { return };
        if self.space.probes().is_empty() {
            return;
        }
        self.space.exclude_at(&x, None);
        for &r in &self.rejected {
            self.space.exclude_at(&x, Some(r));
        }
    }

    fn admissible(&self, v: f64) -> bool {
        v.is_finite() && !self.rejected.iter().any(|&r| agrees(v, r))
    }

    /// Depth-3 hypotheses consistent with every probe. A complete earlier
    /// enumeration is narrowed by the new probes; a capped one is redone.
    fn deep_hypotheses(&mut self) -> &[Expr] {
        let n = self.space.probes().len();
        match self.deep.as_mut() {
            Some(d) if d.n_probes == n => {}
            Some(d) if d.exprs.len() < DEEP_CAP => {
                let new = &self.space.probes()[d.n_probes..];
                d.exprs.retain(|e| new.iter().all(|p| p.matches(e.eval(&p.input).ok())));
                d.n_probes = n;
            }
            _ => {
                let mut exprs = Vec::new();
                if self.max_depth >= 3 && n > 0 {
                    let _ = for_each_hypothesis(self.space.probes(), 3, |e| {
                        exprs.push(e);
                        if exprs.len() >= DEEP_CAP {
                            ControlFlow::Break(())
                        } else {
                            ControlFlow::Continue(())
                        }
                    });
                }
                self.deep = Some(DeepHypotheses { n_probes: n, exprs });
            }
        }
        &self.deep.as_ref().expect("just filled").exprs
    }

    fn using_deep(&self) -> bool {
        !self.space.probes().is_empty() && self.space.is_empty() && self.max_depth >= 3
    }

    /// Candidate answers at the test input, most supported first.
    pub fn candidate_answers(&mut self) -> Vec<(f64, usize)> {
        if let Some(a) = &self.answers {
            return a.clone();
        }
        let answers = self.compute_candidate_answers();
        self.answers = Some(answers.clone());
        answers
    }

    fn compute_candidate_answers(&mut self) -> Vec<(f64, usize)> {
        let Some(x) = self.test_input else { return Vec::new() };
        if self.space.probes().is_empty() {
            return Vec::new();
        }
        let values: Vec<f64> = if self.using_deep() {
            let exprs = self.deep_hypotheses().to_vec();
            exprs.iter().filter_map(|e| e.eval(&x).ok()).collect()
        } else {
            self.space.predictions(&x).into_iter().flatten().collect()
        };
        group_values(values.into_iter().filter(|&v| self.admissible(v)))
    }

    /// All consistent hypotheses agree on the test value.
    pub fn unique(&mut self) -> bool {
        self.candidate_answers().len() == 1
    }

    fn probe_pool(&mut self) -> Vec<Expr> {
        if self.space.probes().is_empty() {
            return Vec::new();
        }
        if self.using_deep() {
            return self.deep_hypotheses().to_vec();
        }
        let ids = self.space.ids();
        let step = ids.len().div_ceil(PROBE_SAMPLE).max(1);
        ids.iter().step_by(step).map(|&id| self.space.expr(id)).collect()
    }

    pub fn next_canonical(&self) -> Option<Input> {
        canonical_probes().iter().map(to_input).find(|x| !self.was_asked(x) && Some(*x) != self.test_input)
    }

    fn random_input(&self, rng: &mut Rng) -> Input {
        loop {
            let x: Input = std::array::from_fn(|_| rng.gen_range(INPUT_RANGE) as f64);
            if !self.was_asked(&x) && Some(x) != self.test_input {
                return x;
            }
        }
    }

    /// Probe that minimizes, over its possible observations, the worst-case
    /// number of distinct test answers left.
    pub fn adaptive_probe(&mut self, rng: &mut Rng) -> Input {
        let pool = self.probe_pool();
        let candidates: Vec<Input> = (0..PROBE_CANDIDATES).map(|_| self.random_input(rng)).collect();
        let Some(test) = self.test_input else { return candidates[0] };
        if pool.len() < 2 {
            return candidates[0];
        }
        let test_keys: Vec<Option<i64>> = pool.iter().map(|e| e.eval(&test).ok().map(value_key)).collect();
        let mut best = (usize::MAX, usize::MAX, 0);
        let mut buckets: HashMap<Option<i64>, (usize, HashSet<i64>)> = HashMap::new();
        for (ci, c) in candidates.iter().enumerate() {
            buckets.clear();
            for (e, tk) in pool.iter().zip(&test_keys) {
                let entry = buckets.entry(e.eval(c).ok().map(value_key)).or_default();
                entry.0 += 1;
                if let Some(tk) = tk {
                    entry.1.insert(*tk);
                }
            }
            let worst_answers = buckets.values().map(|b| b.1.len()).max().unwrap_or(0);
            let worst_size = buckets.values().map(|b| b.0).max().unwrap_or(0);
            if (worst_answers, worst_size) < (best.0, best.1) {
                best = (worst_answers, worst_size, ci);
            }
        }
        candidates[best.2]
    }

    pub fn best_answer(&mut self) -> Option<f64> {
        self.candidate_answers().first().map(|(v, _)| *v)
    }
}

/// Bucket key at the precision observations are reported with.
fn value_key(v: f64) -> i64 {
    (v * 1e6).round() as i64
}

fn answer(v: f64) -> ActionRecord {
    ActionRecord::answer(format!("{v}"))
}

/// Searches for the test input, probes the canonical set, then adaptive
/// probes, and answers once every consistent hypothesis agrees.
pub struct BehavioralFunctionAgent {
    memory: FunctionMemory,
    rng: Rng,
    reserve_turns: usize,
}

impl BehavioralFunctionAgent {
    pub fn new(max_depth: usize, seed: u64) -> Self {
        Self { memory: FunctionMemory::new(max_depth), rng: rng_from_seed(seed), reserve_turns: RESERVE_TURNS }
    }
}

impl Agent for BehavioralFunctionAgent {
    fn act(&mut self, view: &AgentView<'_>) -> AgentMove {
        let m = &mut self.memory;
        m.observe(view);
        if m.test_input().is_none() {
            return AgentMove::Act(ActionRecord::search("what is the test input?"));
        }
        let remaining = view.remaining();
        let after_answer = view.last().is_some_and(|t| t.kind() == ActionKind::Answer);
        let may_answer = !after_answer || remaining == 1;
        let candidates = m.candidate_answers();
        if may_answer && (candidates.len() == 1 || (remaining <= self.reserve_turns && !candidates.is_empty())) {
            return AgentMove::Act(answer(candidates[0].0));
        }
        if may_answer && remaining == 1 {
            return AgentMove::Act(answer(0.0));
        }
        let x = match m.next_canonical() {
            Some(x) => x,
            None => m.adaptive_probe(&mut self.rng),
        };
        AgentMove::Act(ActionRecord::query(render_probe(&x)))
    }
}

/// Baseline: a search and a few fixed probes, then a fresh guess every turn
/// drawn from hypotheses fitted to those probes only.
pub struct NaiveFunctionAgent {
    memory: FunctionMemory,
    k0: usize,
    guesses: Option<Vec<f64>>,
    next_guess: usize,
    rng: Rng,
}

impl NaiveFunctionAgent {
    /// Fixed probes before guessing.
    pub const K0: usize = 2;

    pub fn new(max_depth: usize, seed: u64) -> Self {
        Self {
            memory: FunctionMemory::new(max_depth.min(2)),
            k0: Self::K0,
            guesses: None,
            next_guess: 0,
            rng: rng_from_seed(seed),
        }
    }
}

impl Agent for NaiveFunctionAgent {
    fn act(&mut self, view: &AgentView<'_>) -> AgentMove {
        let turn = view.turns.len();
        if turn == 0 {
            return AgentMove::Act(ActionRecord::search("test input"));
        }
        if turn <= self.k0 {
            let x = to_input(&canonical_probes()[turn - 1]);
            return AgentMove::Act(ActionRecord::query(render_probe(&x)));
        }
        if self.guesses.is_none() {
            self.memory.observe(view);
            self.guesses = Some(self.memory.candidate_answers().into_iter().map(|(v, _)| v).collect());
        }
        let guesses = self.guesses.as_ref().expect("filled above");
        let v = match guesses.get(self.next_guess) {
            Some(&v) => v,
            None => f64::from(self.rng.gen_range(-100..=100)),
        };
        self.next_guess += 1;
        AgentMove::Act(answer(v))
    }
}

/// Template renderer for the trainable policy.
pub struct FunctionAdapter {
    memory: FunctionMemory,
}

impl FunctionAdapter {
    pub fn new(max_depth: usize) -> Self {
        Self { memory: FunctionMemory::new(max_depth) }
    }
}

impl TemplateAdapter for FunctionAdapter {
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
        let m = &mut self.memory;
        match template {
            Template::ProbeInformative => {
                let x = match m.next_canonical() {
                    Some(x) => x,
                    None => m.adaptive_probe(rng),
                };
                ActionRecord::query(render_probe(&x))
            }
            Template::ProbeRandom => ActionRecord::query(render_probe(&m.random_input(rng))),
            Template::Search => ActionRecord::search("test input"),
            Template::AnswerBest => answer(m.best_answer().unwrap_or(0.0)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::function::{FunctionContext, FunctionGym};
    use crate::mdp::{run_episode, EpisodeConfig, Termination};

    fn gym(f: Expr, test_input: [i64; 4]) -> Box<FunctionGym> {
        Box::new(FunctionGym::new("function:t", FunctionContext { f, test_input }))
    }

    #[test]
    fn behavioral_solves_the_reference_function_with_one_answer() {
        let x = Expr::var;
        let f = x(2).add(x(3)).pow(2).div(x(1)).mul(x(4));
        let mut agent = BehavioralFunctionAgent::new(3, 0);
        let t = run_episode(gym(f, [1, 2, 3, 4]), &mut agent, &EpisodeConfig { budget: 15, seed: 0 });
        assert_eq!(t.terminated_by, Termination::Success, "{}", t.to_json_line());
        assert_eq!(t.user_action_count(), 1);
        assert_eq!(t.turns[0].kind(), ActionKind::Search);
    }

    #[test]
    fn behavioral_never_repeats_probes_and_solves_simple_sum() {
        let x = Expr::var;
        let mut agent = BehavioralFunctionAgent::new(2, 1);
        let t = run_episode(gym(x(1).add(x(2)), [3, -4, 5, 6]), &mut agent, &EpisodeConfig { budget: 15, seed: 0 });
        assert!(t.succeeded());
        let queries: Vec<&str> =
            t.turns.iter().filter(|u| u.kind() == ActionKind::Query).map(|u| u.action.content.as_str()).collect();
        let mut dedup = queries.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), queries.len());
    }

    #[test]
    fn naive_answers_every_turn_after_k0() {
        let x = Expr::var;
        let f = x(1).mul(x(2)).sub(x(3));
        let run = |seed| {
            let mut agent = NaiveFunctionAgent::new(2, seed);
            run_episode(gym(f.clone(), [5, 5, 5, 5]), &mut agent, &EpisodeConfig { budget: 15, seed })
        };
        let t = run(3);
        for turn in &t.turns[NaiveFunctionAgent::K0 + 1..] {
            assert_eq!(turn.kind(), ActionKind::Answer);
        }
        assert_eq!(t, run(3));
    }

    #[test]
    fn group_values_merges_within_tolerance() {
        let g = group_values([1.0, 2.0, 1.0 + 1e-9, 2.0, 2.0]);
        assert_eq!(g, vec![(2.0, 3), (1.0, 2)]);
    }
}
