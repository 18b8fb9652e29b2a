//! The three gyms and the suite that builds them from task ids.

pub mod function;
pub mod telepathy;
pub mod turtle;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::mdp::Environment;
use crate::{Error, Result};

use self::telepathy::EntityKb;
use self::turtle::{JudgeMode, TurtleStory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Function,
    Telepathy,
    Turtle,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::Function, EnvKind::Telepathy, EnvKind::Turtle];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Function => "function",
            EnvKind::Telepathy => "telepathy",
            EnvKind::Turtle => "turtle",
        }
    }

    pub fn default_budget(self) -> usize {
        match self {
            EnvKind::Function => function::BUDGET,
            EnvKind::Telepathy => telepathy::BUDGET,
            EnvKind::Turtle => turtle::BUDGET,
        }
    }

    pub fn task_id(self, seed: u64) -> String {
        format!("{}:{seed}", self.name())
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "function" => Ok(EnvKind::Function),
            "telepathy" => Ok(EnvKind::Telepathy),
            "turtle" => Ok(EnvKind::Turtle),
            other => Err(format!("unknown environment `{other}` (function|telepathy|turtle)")),
        }
    }
}

/// Splits `"<env>:<seed>"`.
pub fn parse_task_id(task_id: &str) -> Option<(EnvKind, u64)> {
    let (env, seed) = task_id.split_once(':')?;
    Some((env.parse().ok()?, seed.parse().ok()?))
}

/// Everything needed to rebuild any task from its id.
#[derive(Clone, Debug)]
pub struct EnvSuite {
    pub function_depth: usize,
    pub kb: Arc<EntityKb>,
    pub stories: Arc<Vec<Arc<TurtleStory>>>,
    pub judge: JudgeMode,
}

impl Default for EnvSuite {
    fn default() -> Self {
        Self {
            function_depth: function::DEFAULT_MAX_DEPTH,
            kb: Arc::new(telepathy::build_default_kb(0)),
            stories: Arc::new(turtle::default_pack().into_iter().map(Arc::new).collect()),
            judge: JudgeMode::Strict,
        }
    }
}

impl EnvSuite {
    pub fn with_stories(mut self, stories: Vec<TurtleStory>) -> Self {
        self.stories = Arc::new(stories.into_iter().map(Arc::new).collect());
        self
    }

    pub fn story_for(&self, seed: u64) -> Arc<TurtleStory> {
        self.stories[(seed % self.stories.len() as u64) as usize].clone()
    }

    pub fn make(&self, kind: EnvKind, seed: u64) -> Result<Box<dyn Environment>> {
        Ok(match kind {
            EnvKind::Function => Box::new(function::FunctionGym::from_seed(seed, self.function_depth)?),
            EnvKind::Telepathy => Box::new(telepathy::TelepathyGym::from_seed(seed, self.kb.clone())),
            EnvKind::Turtle => Box::new(turtle::TurtleGym::new(kind.task_id(seed), self.story_for(seed), self.judge)),
        })
    }

    pub fn from_task_id(&self, task_id: &str) -> Result<Box<dyn Environment>> {
        let (kind, seed) = parse_task_id(task_id).ok_or_else(|| Error::UnknownTask(task_id.to_string()))?;
        self.make(kind, seed)
    }
}
