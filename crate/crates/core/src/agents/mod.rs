//! Agents: naive baselines, scripted behavioral agents, the trainable
//! template policy and a log replayer.

pub mod function;
pub mod policy;
pub mod telepathy;
pub mod turtle;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::env::{parse_task_id, EnvKind, EnvSuite};
use crate::mdp::{ActionRecord, Agent, AgentMove, AgentView, Trajectory};
use crate::rng::{rng_from_seed, Rng};
use crate::{Error, Result};

pub use policy::{features, policy_act, Features, PolicyParams, N_FEATURES, N_TEMPLATES};

/// Turns kept in hand before a behavioral agent commits to an answer.
pub const RESERVE_TURNS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Template {
    ProbeInformative,
    ProbeRandom,
    Search,
    AnswerBest,
}

impl Template {
    pub const ALL: [Template; N_TEMPLATES] =
        [Template::ProbeInformative, Template::ProbeRandom, Template::Search, Template::AnswerBest];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Turns a template choice into a concrete action for one environment and
/// keeps the memory the features are read from.
pub trait TemplateAdapter {
    fn observe(&mut self, view: &AgentView<'_>);
    fn unique(&mut self) -> bool;
    fn last_answer_wrong(&self) -> bool;
    fn render(&mut self, template: Template, view: &AgentView<'_>, rng: &mut Rng) -> ActionRecord;
}

/// One sampled decision, kept for the policy update.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub features: Features,
    pub template: usize,
    pub log_prob: f64,
}

pub struct TrainableAgent {
    policy: Arc<PolicyParams>,
    adapter: Box<dyn TemplateAdapter>,
    rng: Rng,
    trace: Vec<Decision>,
}

impl TrainableAgent {
    pub fn new(policy: Arc<PolicyParams>, adapter: Box<dyn TemplateAdapter>, seed: u64) -> Self {
        Self { policy, adapter, rng: rng_from_seed(seed), trace: Vec::new() }
    }

    pub fn trace(&self) -> &[Decision] {
        &self.trace
    }

    pub fn into_trace(self) -> Vec<Decision> {
        self.trace
    }
}

impl Agent for TrainableAgent {
    fn act(&mut self, view: &AgentView<'_>) -> AgentMove {
        self.adapter.observe(view);
        let phi = features(view, self.adapter.unique(), self.adapter.last_answer_wrong());
        let (template, log_prob) = policy_act(&self.policy, &phi, &mut self.rng);
        self.trace.push(Decision { features: phi, template, log_prob });
        AgentMove::Act(self.adapter.render(Template::ALL[template], view, &mut self.rng))
    }
}

/// Plays back recorded actions, then stops.
pub struct ReplayAgent {
    actions: std::vec::IntoIter<ActionRecord>,
}

impl ReplayAgent {
    pub fn new(traj: &Trajectory) -> Self {
        let actions: Vec<ActionRecord> = traj.turns.iter().map(|t| t.action.clone()).collect();
        Self { actions: actions.into_iter() }
    }
}

impl Agent for ReplayAgent {
    fn act(&mut self, _view: &AgentView<'_>) -> AgentMove {
        match self.actions.next() {
            Some(a) => AgentMove::Act(a),
            None => AgentMove::Stop,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgentKind {
    Naive,
    Behavioral,
    Trainable,
    Replay,
    Exploiter,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Naive => "naive",
            AgentKind::Behavioral => "behavioral",
            AgentKind::Trainable => "trainable",
            AgentKind::Replay => "replay",
            AgentKind::Exploiter => "exploiter",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "naive" => Ok(AgentKind::Naive),
            "behavioral" => Ok(AgentKind::Behavioral),
            "trainable" => Ok(AgentKind::Trainable),
            "replay" => Ok(AgentKind::Replay),
            "exploiter" => Ok(AgentKind::Exploiter),
            other => Err(format!("unknown agent `{other}` (naive|behavioral|trainable|replay|exploiter)")),
        }
    }
}

fn split(task_id: &str) -> Result<(EnvKind, u64)> {
    parse_task_id(task_id).ok_or_else(|| Error::UnknownTask(task_id.to_string()))
}

pub fn make_adapter(suite: &EnvSuite, task_id: &str) -> Result<Box<dyn TemplateAdapter>> {
    let (kind, seed) = split(task_id)?;
    Ok(match kind {
        EnvKind::Function => Box::new(function::FunctionAdapter::new(suite.function_depth)),
        EnvKind::Telepathy => Box::new(telepathy::TelepathyAdapter::new(suite.kb.clone())),
        EnvKind::Turtle => Box::new(turtle::TurtleAdapter::new(suite.story_for(seed).questions())),
    })
}

/// Builds a fresh agent for one episode of `task_id`. `policy` is required
/// for the trainable agent; replay agents are built with [`ReplayAgent::new`].
pub fn make_agent(
    kind: AgentKind,
    suite: &EnvSuite,
    task_id: &str,
    agent_seed: u64,
    policy: Option<&Arc<PolicyParams>>,
) -> Result<Box<dyn Agent>> {
    let (env, seed) = split(task_id)?;
    let questions = || suite.story_for(seed).questions();
    Ok(match (kind, env) {
        (AgentKind::Trainable, _) => {
            let policy = policy.ok_or_else(|| Error::Config("the trainable agent needs a policy checkpoint".into()))?;
            Box::new(TrainableAgent::new(policy.clone(), make_adapter(suite, task_id)?, agent_seed))
        }
        (AgentKind::Replay, _) => {
            return Err(Error::Config("replay agents are built from a trajectory log".into()));
        }
        (AgentKind::Naive, EnvKind::Function) => Box::new(function::NaiveFunctionAgent::new(suite.function_depth, agent_seed)),
        (AgentKind::Naive, EnvKind::Telepathy) => Box::new(telepathy::NaiveTelepathyAgent::new(suite.kb.clone(), agent_seed)),
        (AgentKind::Naive, EnvKind::Turtle) => Box::new(turtle::NaiveTurtleAgent::new(questions())),
        (AgentKind::Behavioral, EnvKind::Function) => {
            Box::new(function::BehavioralFunctionAgent::new(suite.function_depth, agent_seed))
        }
        (AgentKind::Behavioral, EnvKind::Telepathy) => Box::new(telepathy::BehavioralTelepathyAgent::new(suite.kb.clone())),
        (AgentKind::Behavioral, EnvKind::Turtle) => Box::new(turtle::BehavioralTurtleAgent::new(questions())),
        (AgentKind::Exploiter, EnvKind::Turtle) => Box::new(turtle::KeywordExploiterAgent::new(questions())),
        (AgentKind::Exploiter, other) => {
            return Err(Error::Config(format!("the exploiter agent only plays turtle, not {other}")));
        }
    })
}
