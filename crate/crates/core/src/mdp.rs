//! Finite-horizon contextual MDP shared by every gym: the partitioned action
//! space, turn records, trajectories and the episode loop.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Action kinds. `Answer` is the only user-involved kind; `Query` and `Search`
/// are environment-involved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Query,
    Search,
    Answer,
}

impl ActionKind {
    pub const ALL: [ActionKind; 3] = [ActionKind::Query, ActionKind::Search, ActionKind::Answer];

    pub fn is_user_involved(self) -> bool {
        matches!(self, ActionKind::Answer)
    }

    pub fn is_env_involved(self) -> bool {
        !self.is_user_involved()
    }

    /// Name used by the tool-call wire schema (`action`, `answer`, `search`).
    pub fn choice(self) -> &'static str {
        match self {
            ActionKind::Query => "action",
            ActionKind::Search => "search",
            ActionKind::Answer => "answer",
        }
    }

    pub fn from_choice(choice: &str) -> Option<Self> {
        match choice {
            "action" => Some(ActionKind::Query),
            "search" => Some(ActionKind::Search),
            "answer" => Some(ActionKind::Answer),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub kind: ActionKind,
    pub content: String,
}

impl ActionRecord {
    pub fn new(kind: ActionKind, content: impl Into<String>) -> Self {
        Self { kind, content: content.into() }
    }

    pub fn query(content: impl Into<String>) -> Self {
        Self::new(ActionKind::Query, content)
    }

    pub fn search(content: impl Into<String>) -> Self {
        Self::new(ActionKind::Search, content)
    }

    pub fn answer(content: impl Into<String>) -> Self {
        Self::new(ActionKind::Answer, content)
    }

    pub fn is_well_formed(&self) -> bool {
        !self.content.trim().is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    #[serde(flatten)]
    pub action: ActionRecord,
    pub observation: String,
    pub raw_reward: f64,
    pub shaped_reward: f64,
}

impl Turn {
    pub fn kind(&self) -> ActionKind {
        self.action.kind
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Success,
    BudgetExhausted,
    AgentStop,
}

/// One episode. Serialized as a single JSONL line with a fixed field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub context_digest: String,
    #[serde(rename = "budget_T")]
    pub budget: usize,
    pub terminated_by: Termination,
    pub turns: Vec<Turn>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    /// U(τ): number of user-involved turns.
    pub fn user_action_count(&self) -> usize {
        self.turns.iter().filter(|t| t.kind().is_user_involved()).count()
    }

    pub fn env_action_count(&self) -> usize {
        self.len() - self.user_action_count()
    }

    /// R(τ): plain sum of raw rewards; shaping never touches it.
    pub fn raw_return(&self) -> f64 {
        self.turns.iter().map(|t| t.raw_reward).sum()
    }

    pub fn shaped_return(&self) -> f64 {
        self.turns.iter().map(|t| t.shaped_reward).sum()
    }

    /// R(τ) − w·U(τ).
    pub fn moo_objective(&self, weight: f64) -> f64 {
        self.raw_return() - weight * self.user_action_count() as f64
    }

    pub fn succeeded(&self) -> bool {
        self.terminated_by == Termination::Success
    }

    pub fn raw_rewards(&self) -> Vec<f64> {
        self.turns.iter().map(|t| t.raw_reward).collect()
    }

    pub fn shaped_rewards(&self) -> Vec<f64> {
        self.turns.iter().map(|t| t.shaped_reward).collect()
    }

    pub fn kinds(&self) -> Vec<ActionKind> {
        self.turns.iter().map(Turn::kind).collect()
    }

    /// Checks the structural invariants; returns a description of the first violation.
    pub fn validate(&self) -> Result<(), String> {
        if self.budget == 0 {
            return Err("budget_T must be positive".into());
        }
        if self.turns.is_empty() || self.turns.len() > self.budget {
            return Err(format!("{} turns outside 1..={}", self.turns.len(), self.budget));
        }
        for (i, turn) in self.turns.iter().enumerate() {
            if turn.index != i + 1 {
                return Err(format!("turn {} has index {}", i + 1, turn.index));
            }
            if !turn.raw_reward.is_finite() {
                return Err(format!("turn {} raw reward is not finite", turn.index));
            }
            if turn.shaped_reward > turn.raw_reward {
                return Err(format!("turn {} shaped reward exceeds raw reward", turn.index));
            }
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trajectory serialization is infallible")
    }

    pub fn from_json_line(line: &str) -> serde_json::Result<Self> {
        serde_json::from_str(line)
    }
}

pub fn write_jsonl<W: Write>(mut out: W, trajectories: &[Trajectory]) -> std::io::Result<()> {
    for traj in trajectories {
        writeln!(out, "{}", traj.to_json_line())?;
    }
    out.flush()
}

pub fn read_jsonl<R: BufRead>(input: R) -> crate::Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(Trajectory::from_json_line(&line)?);
    }
    Ok(out)
}

/// Stable short digest of a hidden context, so logs never carry the context itself.
pub fn context_digest(fingerprint: &str) -> String {
    let digest = Sha256::digest(fingerprint.as_bytes());
    hex::encode(&digest[..8])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub budget: usize,
    pub seed: u64,
}

/// What an environment reports for one action.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observation: String,
    pub reward: f64,
    /// Terminal success signalled by the environment.
    pub success: bool,
}

impl StepOutcome {
    pub fn neutral(observation: impl Into<String>) -> Self {
        Self { observation: observation.into(), reward: 0.0, success: false }
    }
}

pub trait Environment: Send {
    fn task_id(&self) -> &str;

    /// Canonical text of the hidden context; hashed, never logged.
    fn context_fingerprint(&self) -> String;

    fn default_budget(&self) -> usize;

    /// Opening observation shown to the agent.
    fn intro(&self) -> String;

    fn step(&mut self, action: &ActionRecord) -> StepOutcome;

    fn context_digest(&self) -> String {
        context_digest(&self.context_fingerprint())
    }
}

/// Read-only history handed to agents.
pub struct AgentView<'a> {
    pub intro: &'a str,
    pub turns: &'a [Turn],
    pub budget: usize,
}

impl AgentView<'_> {
    /// 1-based index of the turn about to be played.
    pub fn next_turn(&self) -> usize {
        self.turns.len() + 1
    }

    /// Turns left including the one about to be played.
    pub fn remaining(&self) -> usize {
        self.budget.saturating_sub(self.turns.len())
    }

    pub fn last(&self) -> Option<&Turn> {
        self.turns.last()
    }
}

pub enum AgentMove {
    Act(ActionRecord),
    Stop,
}

pub trait Agent {
    fn act(&mut self, view: &AgentView<'_>) -> AgentMove;
}

pub const INVALID_ACTION: &str = "invalid action: content must be non-empty";

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("episode is already done")]
pub struct EpisodeDone;

/// Episode lifecycle around one environment: turn counting, budget,
/// malformed-action handling and trajectory recording.
pub struct Episode {
    env: Box<dyn Environment>,
    intro: String,
    budget: usize,
    turns: Vec<Turn>,
    terminated_by: Option<Termination>,
}

impl Episode {
    pub fn new(env: Box<dyn Environment>, budget: usize) -> Self {
        assert!(budget > 0, "budget must be positive");
        let intro = env.intro();
        Self { env, intro, budget, turns: Vec::new(), terminated_by: None }
    }

    pub fn with_default_budget(env: Box<dyn Environment>) -> Self {
        let budget = env.default_budget();
        Self::new(env, budget)
    }

    pub fn intro(&self) -> &str {
        &self.intro
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn turn(&self) -> usize {
        self.turns.len()
    }

    pub fn remaining(&self) -> usize {
        self.budget - self.turns.len()
    }

    pub fn is_done(&self) -> bool {
        self.terminated_by.is_some()
    }

    pub fn terminated_by(&self) -> Option<Termination> {
        self.terminated_by
    }

    pub fn view(&self) -> AgentView<'_> {
        AgentView { intro: &self.intro, turns: &self.turns, budget: self.budget }
    }

    pub fn step(&mut self, action: ActionRecord) -> Result<&Turn, EpisodeDone> {
        if self.is_done() {
            return Err(EpisodeDone);
        }
        let outcome = if action.is_well_formed() {
            self.env.step(&action)
        } else {
            StepOutcome::neutral(INVALID_ACTION)
        };
        let reward = if outcome.reward.is_finite() { outcome.reward } else { 0.0 };
        self.turns.push(Turn {
            index: self.turns.len() + 1,
            action,
            observation: outcome.observation,
            raw_reward: reward,
            shaped_reward: reward,
        });
        if outcome.success {
            self.terminated_by = Some(Termination::Success);
        } else if self.turns.len() >= self.budget {
            self.terminated_by = Some(Termination::BudgetExhausted);
        }
        Ok(self.turns.last().expect("turn just pushed"))
    }

    /// Agent declines to continue. Ignored before the first turn, since a
    /// trajectory needs at least one turn.
    pub fn stop(&mut self) -> bool {
        if self.is_done() || self.turns.is_empty() {
            return false;
        }
        self.terminated_by = Some(Termination::AgentStop);
        true
    }

    /// Trajectory so far; an unfinished episode is reported as stopped.
    pub fn snapshot(&self) -> Trajectory {
        Trajectory {
            task_id: self.env.task_id().to_string(),
            context_digest: self.env.context_digest(),
            budget: self.budget,
            terminated_by: self.terminated_by.unwrap_or(Termination::AgentStop),
            turns: self.turns.clone(),
        }
    }

    pub fn into_trajectory(self) -> Trajectory {
        Trajectory {
            task_id: self.env.task_id().to_string(),
            context_digest: self.env.context_digest(),
            budget: self.budget,
            terminated_by: self.terminated_by.unwrap_or(Termination::AgentStop),
            turns: self.turns,
        }
    }
}

/// Plays one episode to termination.
pub fn run_episode(env: Box<dyn Environment>, agent: &mut dyn Agent, cfg: &EpisodeConfig) -> Trajectory {
    let mut episode = Episode::new(env, cfg.budget);
    while !episode.is_done() {
        let mv = agent.act(&episode.view());
        match mv {
            AgentMove::Act(action) => {
                episode.step(action).expect("loop guards on done");
            }
            AgentMove::Stop => {
                if !episode.stop() {
                    // Stopping before any turn counts as a malformed action.
                    episode.step(ActionRecord::new(ActionKind::Query, "")).expect("not done");
                }
            }
        }
    }
    episode.into_trajectory()
}
