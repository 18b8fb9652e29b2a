//! Evaluation metrics over trajectory sets. Everything here reads raw rewards
//! and action kinds only, so shaping never changes a report.

mod bleu;
mod pareto;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bleu::{bleu, self_bleu, SMOOTHING_FLOOR};
pub use pareto::{pareto_frontier, weakly_dominates, write_frontier_csv, ParetoPoint};

use crate::mdp::{ActionKind, Trajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("metric undefined on an empty trajectory set")]
    EmptySet,
    #[error("self-BLEU needs at least two texts, got {0}")]
    TooFewTexts(usize),
    #[error("reward translation rate needs a positive training score, got {0}")]
    ZeroTrainScore(f64),
}

/// Answers submitted up to and including the succeeding turn, or `None` if
/// the trajectory never succeeded.
pub fn answers_to_success(traj: &Trajectory) -> Option<usize> {
    traj.succeeded().then(|| traj.user_action_count())
}

/// Fraction of trajectories that succeed using at most `k` answers.
pub fn pass_at_u_k(trajs: &[Trajectory], k: usize) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    if trajs.is_empty() {
        return 0.0;
    }
    let passed = trajs.iter().filter(|t| answers_to_success(t).is_some_and(|u| u <= k)).count();
    passed as f64 / trajs.len() as f64
}

pub fn success_rate(trajs: &[Trajectory]) -> f64 {
    if trajs.is_empty() {
        return 0.0;
    }
    trajs.iter().filter(|t| t.succeeded()).count() as f64 / trajs.len() as f64
}

/// Mean over trajectories of U(τ)/|τ|.
pub fn user_involvement_rate(trajs: &[Trajectory]) -> Result<f64, MetricsError> {
    if trajs.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let sum: f64 = trajs.iter().map(|t| t.user_action_count() as f64 / t.len().max(1) as f64).sum();
    Ok(sum / trajs.len() as f64)
}

/// Mean over trajectories of env-involved / max(user-involved, 1).
pub fn exploration_ratio(trajs: &[Trajectory]) -> f64 {
    if trajs.is_empty() {
        return 0.0;
    }
    let sum: f64 = trajs
        .iter()
        .map(|t| t.env_action_count() as f64 / t.user_action_count().max(1) as f64)
        .sum();
    sum / trajs.len() as f64
}

/// Mean unshaped cumulative reward.
pub fn score(trajs: &[Trajectory]) -> f64 {
    if trajs.is_empty() {
        return 0.0;
    }
    trajs.iter().map(Trajectory::raw_return).sum::<f64>() / trajs.len() as f64
}

/// Evaluation reward over training reward.
pub fn reward_translation_rate(train_score: f64, eval_score: f64) -> Result<f64, MetricsError> {
    if !(train_score > 0.0) {
        return Err(MetricsError::ZeroTrainScore(train_score));
    }
    Ok(eval_score / train_score)
}

/// Mean within-trajectory Self-BLEU of query contents, over trajectories with
/// at least two queries; 0 when none qualify.
pub fn query_self_bleu(trajs: &[Trajectory]) -> f64 {
    let scores: Vec<f64> = trajs
        .iter()
        .filter_map(|t| {
            let queries: Vec<&str> =
                t.turns.iter().filter(|x| x.kind() == ActionKind::Query).map(|x| x.action.content.as_str()).collect();
            self_bleu(&queries, 4).ok()
        })
        .collect();
    if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}

/// `(k, Pass@U-k)` for `k = 1..=k_max`.
pub fn pass_curve(trajs: &[Trajectory], k_max: usize) -> Vec<ParetoPoint> {
    (1..=k_max).map(|k| ParetoPoint::new(k, pass_at_u_k(trajs, k))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_trajectories: usize,
    pub pass_at_u: BTreeMap<usize, f64>,
    pub success_rate: f64,
    pub ur: f64,
    pub score: f64,
    pub exploration_ratio: f64,
    pub self_bleu: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub config: BTreeMap<String, String>,
}

impl EvalReport {
    pub fn compute(trajs: &[Trajectory], k_max: usize) -> Result<Self, MetricsError> {
        Ok(Self {
            n_trajectories: trajs.len(),
            pass_at_u: pass_curve(trajs, k_max).into_iter().map(|p| (p.budget_k, p.pass_rate)).collect(),
            success_rate: success_rate(trajs),
            ur: user_involvement_rate(trajs)?,
            score: score(trajs),
            exploration_ratio: exploration_ratio(trajs),
            self_bleu: query_self_bleu(trajs),
            config: BTreeMap::new(),
        })
    }

    pub fn frontier(&self) -> Vec<ParetoPoint> {
        let points: Vec<ParetoPoint> = self.pass_at_u.iter().map(|(&k, &r)| ParetoPoint::new(k, r)).collect();
        pareto_frontier(&points)
    }
}
