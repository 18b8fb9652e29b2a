//! Batch rollouts and log replay.

use std::sync::Arc;

use rayon::prelude::*;

use crate::agents::{make_agent, AgentKind, PolicyParams, ReplayAgent};
use crate::env::{parse_task_id, EnvKind, EnvSuite};
use crate::mdp::{run_episode, EpisodeConfig, Trajectory};
use crate::rng::derive_seed;
use crate::shaping::{shape, ShapingConfig};
use crate::{Error, Result};

/// `n` consecutive task ids starting at `seed`.
pub fn task_suite(env: EnvKind, seed: u64, n: usize) -> Vec<String> {
    (0..n as u64).map(|i| env.task_id(seed.wrapping_add(i))).collect()
}

/// Agent seed for the `i`-th episode of a rollout.
pub fn agent_seed(base: u64, task_id: &str, i: usize) -> u64 {
    derive_seed(base, task_id, i as u64)
}

#[derive(Clone, Debug)]
pub struct RolloutSpec {
    pub agent: AgentKind,
    pub seed: u64,
    pub shaping: ShapingConfig,
    pub budget: Option<usize>,
    pub policy: Option<Arc<PolicyParams>>,
}

fn budget_for(task_id: &str, budget: Option<usize>) -> Result<usize> {
    let (env, _) = parse_task_id(task_id).ok_or_else(|| Error::UnknownTask(task_id.to_string()))?;
    let b = budget.unwrap_or(env.default_budget());
    if b == 0 {
        return Err(Error::Config("budget must be positive".into()));
    }
    Ok(b)
}

/// Plays one shaped episode per task id, in order.
pub fn rollout(suite: &EnvSuite, tasks: &[String], spec: &RolloutSpec) -> Result<Vec<Trajectory>> {
    tasks
        .par_iter()
        .enumerate()
        .map(|(i, task)| {
            let budget = budget_for(task, spec.budget)?;
            let seed = agent_seed(spec.seed, task, i);
            let mut agent = make_agent(spec.agent, suite, task, seed, spec.policy.as_ref())?;
            let traj = run_episode(suite.from_task_id(task)?, agent.as_mut(), &EpisodeConfig { budget, seed });
            Ok(shape(traj, &spec.shaping, budget))
        })
        .collect()
}

/// Replays the recorded actions of `traj` against a fresh environment.
pub fn replay_one(suite: &EnvSuite, traj: &Trajectory, shaping: &ShapingConfig) -> Result<Trajectory> {
    let env = suite.from_task_id(&traj.task_id)?;
    let cfg = EpisodeConfig { budget: traj.budget, seed: 0 };
    Ok(shape(run_episode(env, &mut ReplayAgent::new(traj), &cfg), shaping, traj.budget))
}

fn first_difference(line: usize, recorded: &Trajectory, replayed: &Trajectory) -> Error {
    let mismatch = |turn, what: &str| Error::ReplayMismatch { line, turn, what: what.to_string() };
    if recorded.context_digest != replayed.context_digest {
        return mismatch(0, "context_digest");
    }
    for (a, b) in recorded.turns.iter().zip(&replayed.turns) {
        let what = if a.observation != b.observation {
            "observation"
        } else if a.raw_reward.to_bits() != b.raw_reward.to_bits() {
            "raw_reward"
        } else if a.shaped_reward.to_bits() != b.shaped_reward.to_bits() {
            "shaped_reward"
        } else if a.index != b.index || a.action != b.action {
            "action"
        } else {
            continue;
        };
        return mismatch(a.index, what);
    }
    if recorded.turns.len() != replayed.turns.len() {
        return mismatch(recorded.turns.len().min(replayed.turns.len()) + 1, "turn count");
    }
    if recorded.terminated_by != replayed.terminated_by {
        return mismatch(recorded.turns.len(), "terminated_by");
    }
    mismatch(0, "serialized bytes")
}

/// Checks that every recorded line is reproduced byte for byte. `lines`
/// are the raw log lines; line numbers in errors are 1-based.
pub fn verify_log(suite: &EnvSuite, lines: &[String], shaping: &ShapingConfig) -> Result<usize> {
    let mut checked = 0;
    for (n, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let recorded = Trajectory::from_json_line(line)?;
        let replayed = replay_one(suite, &recorded, shaping)?;
        if replayed.to_json_line() != *line {
            return Err(first_difference(n + 1, &recorded, &replayed));
        }
        checked += 1;
    }
    Ok(checked)
}
