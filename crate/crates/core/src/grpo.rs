//! Group-relative policy optimization with turn-level discounted advantages.
//!
//! Each turn gets `(G_t - mean R) / std R`, where `G_t` is the discounted
//! reward-to-go of shaped rewards and `R` ranges over the totals of the `N`
//! trajectories sampled for the same task. The policy is updated by one
//! gradient-ascent step on the clipped surrogate per batch.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{make_adapter, Decision, PolicyParams, TrainableAgent};
use crate::env::{EnvKind, EnvSuite};
use crate::mdp::{run_episode, EpisodeConfig, Trajectory};
use crate::metrics;
use crate::rng::derive_seed;
use crate::shaping::{shape, ShapingConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrpoError {
    #[error("importance ratio is not finite (sample {index}); the update diverged")]
    NonFiniteRatio { index: usize },
    #[error("invalid rollout group: {0}")]
    InvalidGroup(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("policy parameters became non-finite")]
    NonFiniteParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrpoConfig {
    pub gamma: f64,
    pub clip_eps: f64,
    pub group_size: usize,
    pub std_floor: f64,
    pub learning_rate: f64,
    /// Leave groups whose returns are all equal out of the update.
    pub skip_degenerate: bool,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self { gamma: 0.8, clip_eps: 0.2, group_size: 8, std_floor: 1e-8, learning_rate: 0.5, skip_degenerate: true }
    }
}

impl GrpoConfig {
    /// Settings used by [`train`]: every group contributes, and the std
    /// floor keeps all-equal-return groups at the scale of ordinary ones.
    pub fn training() -> Self {
        Self { std_floor: 0.1, learning_rate: 2.0, skip_degenerate: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), GrpoError> {
        let bad = |m: &str| Err(GrpoError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.clip_eps > 0.0 && self.clip_eps.is_finite()) {
            return bad("clip_eps must be positive");
        }
        if self.group_size < 2 {
            return bad("group_size must be at least 2");
        }
        if !(self.std_floor > 0.0) {
            return bad("std_floor must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

/// `G_t = r_t + gamma * G_{t+1}`, computed backwards.
pub fn reward_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (i, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[i] = acc;
    }
    out
}

/// Mean and population standard deviation.
pub fn mean_pop_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.windows(2).all(|w| w[0] == w[1]) {
        return (values.first().copied().unwrap_or(0.0), 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// N trajectories of one task plus the decisions that produced them.
#[derive(Clone, Debug)]
pub struct RolloutGroup {
    pub task_id: String,
    pub trajectories: Vec<Trajectory>,
    pub decisions: Vec<Vec<Decision>>,
}

impl RolloutGroup {
    pub fn validate(&self) -> Result<(), GrpoError> {
        let err = |m: String| Err(GrpoError::InvalidGroup(m));
        if self.trajectories.len() < 2 {
            return err(format!("{}: need at least 2 trajectories", self.task_id));
        }
        if self.decisions.len() != self.trajectories.len() {
            return err(format!("{}: decision traces do not match trajectories", self.task_id));
        }
        let digest = &self.trajectories[0].context_digest;
        for (t, d) in self.trajectories.iter().zip(&self.decisions) {
            if &t.context_digest != digest {
                return err(format!("{}: trajectories from different contexts", self.task_id));
            }
            if t.len() != d.len() {
                return err(format!("{}: {} turns but {} decisions", self.task_id, t.len(), d.len()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TurnAdvantages {
    pub returns_to_go: Vec<Vec<f64>>,
    pub totals: Vec<f64>,
    pub advantages: Vec<Vec<f64>>,
    pub mean: f64,
    pub std: f64,
    /// Totals have (near) zero spread; `std_floor` stood in for the std.
    pub degenerate: bool,
}

impl TurnAdvantages {
    /// `(R_i - mean) / std` for each trajectory total.
    pub fn normalized_totals(&self) -> Vec<f64> {
        let s = if self.degenerate { 0.0 } else { self.std };
        self.totals.iter().map(|r| if s == 0.0 { 0.0 } else { (r - self.mean) / s }).collect()
    }
}

/// Turn-level advantages from shaped rewards.
pub fn group_advantages(trajectories: &[Trajectory], cfg: &GrpoConfig) -> TurnAdvantages {
    let returns_to_go: Vec<Vec<f64>> =
        trajectories.iter().map(|t| reward_to_go(&t.shaped_rewards(), cfg.gamma)).collect();
    let totals: Vec<f64> = trajectories.iter().map(Trajectory::shaped_return).collect();
    let (mean, std) = mean_pop_std(&totals);
    let degenerate = std < cfg.std_floor;
    let denom = if degenerate { cfg.std_floor } else { std };
    let advantages = returns_to_go.iter().map(|g| g.iter().map(|v| (v - mean) / denom).collect()).collect();
    TurnAdvantages { returns_to_go, totals, advantages, mean, std, degenerate }
}

fn clip(rho: f64, eps: f64) -> f64 {
    rho.clamp(1.0 - eps, 1.0 + eps)
}

fn ratios(new_logprobs: &[f64], old_logprobs: &[f64]) -> Result<Vec<f64>, GrpoError> {
    assert_eq!(new_logprobs.len(), old_logprobs.len(), "log-probability shapes differ");
    new_logprobs
        .iter()
        .zip(old_logprobs)
        .enumerate()
        .map(|(index, (n, o))| {
            let rho = (n - o).exp();
            if rho.is_finite() {
                Ok(rho)
            } else {
                Err(GrpoError::NonFiniteRatio { index })
            }
        })
        .collect()
}

/// Mean of `min(rho A, clip(rho, 1-eps, 1+eps) A)`; an objective to maximize.
pub fn clipped_loss(
    new_logprobs: &[f64],
    old_logprobs: &[f64],
    advantages: &[f64],
    clip_eps: f64,
) -> Result<f64, GrpoError> {
    assert_eq!(advantages.len(), new_logprobs.len(), "advantage shape differs");
    if advantages.is_empty() {
        return Ok(0.0);
    }
    let rho = ratios(new_logprobs, old_logprobs)?;
    let sum: f64 = rho.iter().zip(advantages).map(|(r, a)| (r * a).min(clip(*r, clip_eps) * a)).sum();
    Ok(sum / advantages.len() as f64)
}

/// Derivative of [`clipped_loss`] with respect to each new log-probability.
/// The clipped arm is constant in `rho`, so only terms where the unclipped
/// arm is selected contribute `rho A / n`.
pub fn clipped_loss_grad(
    new_logprobs: &[f64],
    old_logprobs: &[f64],
    advantages: &[f64],
    clip_eps: f64,
) -> Result<Vec<f64>, GrpoError> {
    let n = advantages.len() as f64;
    let rho = ratios(new_logprobs, old_logprobs)?;
    Ok(rho
        .iter()
        .zip(advantages)
        .map(|(r, a)| if r * a <= clip(*r, clip_eps) * a { r * a / n } else { 0.0 })
        .collect())
}

/// One decision with its credit.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub action: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Surrogate {
    pub objective: f64,
    /// Gradient with respect to the flattened `theta`.
    pub grad: Vec<f64>,
    pub clip_fraction: f64,
}

/// Clipped surrogate of `policy` on `samples` and its analytic gradient.
pub fn surrogate(policy: &PolicyParams, samples: &[Sample], clip_eps: f64) -> Result<Surrogate, GrpoError> {
    let mut grad = vec![0.0; policy.theta.len()];
    if samples.is_empty() {
        return Ok(Surrogate { objective: 0.0, grad, clip_fraction: 0.0 });
    }
    let new: Vec<f64> = samples.iter().map(|s| policy.log_prob(&s.features, s.action)).collect();
    let old: Vec<f64> = samples.iter().map(|s| s.old_log_prob).collect();
    let adv: Vec<f64> = samples.iter().map(|s| s.advantage).collect();
    let objective = clipped_loss(&new, &old, &adv, clip_eps)?;
    let d_logp = clipped_loss_grad(&new, &old, &adv, clip_eps)?;
    for (s, d) in samples.iter().zip(&d_logp) {
        if *d != 0.0 {
            policy.accumulate_grad_log_prob(&s.features, s.action, *d, &mut grad);
        }
    }
    let clipped = ratios(&new, &old)?.iter().filter(|r| (*r - 1.0).abs() > clip_eps).count();
    Ok(Surrogate { objective, grad, clip_fraction: clipped as f64 / samples.len() as f64 })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub loss: f64,
    pub mean_abs_advantage: f64,
    pub clip_fraction: f64,
    pub mean_shaped_return: f64,
    pub degenerate_groups: usize,
    pub n_samples: usize,
}

/// Samples of the non-skipped groups, with statistics over all groups.
pub fn build_samples(groups: &[RolloutGroup], cfg: &GrpoConfig) -> Result<(Vec<Sample>, usize, f64), GrpoError> {
    let mut samples = Vec::new();
    let mut degenerate = 0;
    let mut shaped = Vec::new();
    for g in groups {
        g.validate()?;
        let adv = group_advantages(&g.trajectories, cfg);
        shaped.extend(adv.totals.iter().copied());
        if adv.degenerate {
            degenerate += 1;
            if cfg.skip_degenerate {
                continue;
            }
        }
        for (decisions, a) in g.decisions.iter().zip(&adv.advantages) {
            for (d, a) in decisions.iter().zip(a) {
                samples.push(Sample {
                    features: d.features.to_vec(),
                    action: d.template,
                    old_log_prob: d.log_prob,
                    advantage: *a,
                });
            }
        }
    }
    let mean_shaped = if shaped.is_empty() { 0.0 } else { shaped.iter().sum::<f64>() / shaped.len() as f64 };
    Ok((samples, degenerate, mean_shaped))
}

/// One gradient-ascent step on the clipped surrogate.
pub fn grpo_step(
    policy: &PolicyParams,
    groups: &[RolloutGroup],
    cfg: &GrpoConfig,
) -> Result<(PolicyParams, StepStats), GrpoError> {
    cfg.validate()?;
    let (samples, degenerate_groups, mean_shaped_return) = build_samples(groups, cfg)?;
    let s = surrogate(policy, &samples, cfg.clip_eps)?;
    let mut next = policy.clone();
    for (w, g) in next.theta.iter_mut().zip(&s.grad) {
        *w += cfg.learning_rate * g;
    }
    if !next.is_finite() {
        return Err(GrpoError::NonFiniteParams);
    }
    let mean_abs_advantage = if samples.is_empty() {
        0.0
    } else {
        samples.iter().map(|x| x.advantage.abs()).sum::<f64>() / samples.len() as f64
    };
    Ok((
        next,
        StepStats {
            loss: s.objective,
            mean_abs_advantage,
            clip_fraction: s.clip_fraction,
            mean_shaped_return,
            degenerate_groups,
            n_samples: samples.len(),
        },
    ))
}

/// Plays `group_size` episodes of `task_id` under `policy`, shaping each.
/// Agent seeds are `derive_seed(batch_seed, task_id, i)`.
pub fn rollout_group(
    policy: &Arc<PolicyParams>,
    suite: &EnvSuite,
    task_id: &str,
    group_size: usize,
    batch_seed: u64,
    shaping: &ShapingConfig,
    budget: usize,
) -> crate::Result<RolloutGroup> {
    let runs: Vec<crate::Result<(Trajectory, Vec<Decision>)>> = (0..group_size)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(batch_seed, task_id, i as u64);
            let env = suite.from_task_id(task_id)?;
            let mut agent = TrainableAgent::new(policy.clone(), make_adapter(suite, task_id)?, seed);
            let traj = run_episode(env, &mut agent, &EpisodeConfig { budget, seed });
            Ok((shape(traj, shaping, budget), agent.into_trace()))
        })
        .collect();
    let mut group = RolloutGroup { task_id: task_id.to_string(), trajectories: Vec::new(), decisions: Vec::new() };
    for r in runs {
        let (t, d) = r?;
        group.trajectories.push(t);
        group.decisions.push(d);
    }
    Ok(group)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub env: EnvKind,
    pub grpo: GrpoConfig,
    pub shaping: ShapingConfig,
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    pub seed: u64,
    pub budget: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            env: EnvKind::Function,
            grpo: GrpoConfig::training(),
            shaping: ShapingConfig::default(),
            epochs: 30,
            episodes_per_epoch: 128,
            seed: 0,
            budget: None,
        }
    }
}

impl TrainConfig {
    pub fn budget(&self) -> usize {
        self.budget.unwrap_or(self.env.default_budget())
    }

    /// Flat `key=value` view of the configuration, echoed into artifacts.
    pub fn echo(&self) -> BTreeMap<String, String> {
        [
            ("env", self.env.to_string()),
            ("gamma", self.grpo.gamma.to_string()),
            ("clip_eps", self.grpo.clip_eps.to_string()),
            ("group_size", self.grpo.group_size.to_string()),
            ("std_floor", self.grpo.std_floor.to_string()),
            ("learning_rate", self.grpo.learning_rate.to_string()),
            ("skip_degenerate", self.grpo.skip_degenerate.to_string()),
            ("lambda_ans", self.shaping.lambda_ans.to_string()),
            ("lambda_think", self.shaping.lambda_think.to_string()),
            ("epochs", self.epochs.to_string()),
            ("episodes_per_epoch", self.episodes_per_epoch.to_string()),
            ("seed", self.seed.to_string()),
            ("budget", self.budget().to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Task ids sampled for one epoch.
pub fn epoch_tasks(cfg: &TrainConfig, epoch: usize) -> Vec<String> {
    let n_tasks = cfg.episodes_per_epoch.div_ceil(cfg.grpo.group_size);
    (0..n_tasks)
        .map(|j| cfg.env.task_id(derive_seed(cfg.seed, "task", (epoch * n_tasks + j) as u64) % 1_000_000_007))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epoch: usize,
    pub score: f64,
    pub ur: f64,
    pub exploration_ratio: f64,
    pub loss: f64,
    pub clip_fraction: f64,
}

/// Runs `cfg.epochs` rollout/update rounds. Score, UR and exploration ratio
/// of each row come from that epoch's rollouts, on raw rewards. With a
/// checkpoint path, the latest parameters are written after every epoch and
/// before an error is returned.
pub fn train(
    initial: PolicyParams,
    suite: &EnvSuite,
    cfg: &TrainConfig,
    checkpoint: Option<&Path>,
) -> crate::Result<(PolicyParams, Vec<CurveRow>)> {
    cfg.grpo.validate()?;
    let mut policy = initial;
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        match train_epoch(&policy, suite, cfg, epoch) {
            Ok((next, row)) => {
                policy = next;
                curve.push(row);
                if let Some(path) = checkpoint {
                    Checkpoint::new(&policy, cfg.echo()).save(path)?;
                }
            }
            Err(e) => {
                if let Some(path) = checkpoint {
                    Checkpoint::new(&policy, cfg.echo()).save(path)?;
                }
                return Err(e);
            }
        }
    }
    Ok((policy, curve))
}

fn train_epoch(
    policy: &PolicyParams,
    suite: &EnvSuite,
    cfg: &TrainConfig,
    epoch: usize,
) -> crate::Result<(PolicyParams, CurveRow)> {
    let batch_seed = derive_seed(cfg.seed, "epoch", epoch as u64);
    let shared = Arc::new(policy.clone());
    let groups = epoch_tasks(cfg, epoch)
        .iter()
        .map(|task| rollout_group(&shared, suite, task, cfg.grpo.group_size, batch_seed, &cfg.shaping, cfg.budget()))
        .collect::<crate::Result<Vec<_>>>()?;
    let all: Vec<Trajectory> = groups.iter().flat_map(|g| g.trajectories.iter().cloned()).collect();
    let (next, stats) = grpo_step(policy, &groups, &cfg.grpo)?;
    let row = CurveRow {
        epoch,
        score: metrics::score(&all),
        ur: metrics::user_involvement_rate(&all)?,
        exploration_ratio: metrics::exploration_ratio(&all),
        loss: stats.loss,
        clip_fraction: stats.clip_fraction,
    };
    Ok((next, row))
}

pub fn write_curve_csv<W: Write>(
    mut out: W,
    curve: &[CurveRow],
    echo: &BTreeMap<String, String>,
) -> std::io::Result<()> {
    for (k, v) in echo {
        writeln!(out, "# {k}={v}")?;
    }
    writeln!(out, "epoch,score,ur,exploration_ratio,loss,clip_fraction")?;
    for r in curve {
        writeln!(out, "{},{},{},{},{},{}", r.epoch, r.score, r.ur, r.exploration_ratio, r.loss, r.clip_fraction)?;
    }
    Ok(())
}

pub const CHECKPOINT_FORMAT: &str = "proact-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub n_templates: usize,
    pub n_features: usize,
    pub theta: Vec<f64>,
    #[serde(default)]
    pub config: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(policy: &PolicyParams, config: BTreeMap<String, String>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            n_templates: policy.n_templates,
            n_features: policy.n_features,
            theta: policy.theta.clone(),
            config,
        }
    }

    pub fn policy(&self) -> crate::Result<PolicyParams> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(crate::Error::Config(format!(
                "unsupported checkpoint {} v{} (expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION})",
                self.format, self.version
            )));
        }
        if self.theta.len() != self.n_templates * self.n_features || self.theta.iter().any(|v| !v.is_finite()) {
            return Err(crate::Error::Config("checkpoint parameters are malformed".into()));
        }
        Ok(PolicyParams::from_theta(self.n_templates, self.n_features, self.theta.clone()))
    }

    pub fn save(&self, path: &Path) -> crate::Result<()> {
        let tmp = PathBuf::from(format!("{}.tmp", path.display()));
        std::fs::write(&tmp, serde_json::to_string_pretty(self)? + "\n")?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn read<R: BufRead>(mut input: R) -> crate::Result<Self> {
        let mut s = String::new();
        input.read_to_string(&mut s)?;
        Ok(serde_json::from_str(&s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::policy::N_FEATURES;
    use crate::mdp::testing::traj;
    use crate::mdp::ActionKind::{Answer as A, Query as Q};
    use crate::mdp::Termination;
    use proptest::prelude::*;
    use rand::Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn reward_to_go_examples() {
        assert!(close(&reward_to_go(&[0.0, 0.0, 1.0], 0.8), &[0.64, 0.8, 1.0], 1e-12));
        let r = [0.3, -0.2, 0.5, 0.1];
        assert!((reward_to_go(&r, 1.0)[0] - r.iter().sum::<f64>()).abs() < 1e-12);
        assert_eq!(reward_to_go(&[0.7], 0.8), vec![0.7]);
        assert!(reward_to_go(&[], 0.8).is_empty());
    }

    fn single_turn_group(returns: &[f64]) -> Vec<Trajectory> {
        returns.iter().map(|&r| traj(&[A], &[r], Termination::AgentStop, 15)).collect()
    }

    #[test]
    fn advantage_examples() {
        let cfg = GrpoConfig::default();
        let adv = group_advantages(&single_turn_group(&[1.0, 0.0, 0.0, 0.0]), &cfg);
        assert!((adv.mean - 0.25).abs() < 1e-12);
        assert!((adv.std - 0.4330127018922193).abs() < 1e-12);
        let expected = [3f64.sqrt(), -1.0 / 3f64.sqrt(), -1.0 / 3f64.sqrt(), -1.0 / 3f64.sqrt()];
        assert!(close(&adv.normalized_totals(), &expected, 1e-12));

        let flat = group_advantages(&single_turn_group(&[0.5; 4]), &cfg);
        assert!(flat.degenerate);
        assert!(flat.advantages.iter().flatten().all(|a| *a == 0.0));

        let gamma_one = GrpoConfig { gamma: 1.0, ..cfg };
        let returns = [0.2, 0.9, 0.4];
        let adv = group_advantages(&single_turn_group(&returns), &gamma_one);
        let (m, s) = mean_pop_std(&returns);
        for (a, r) in adv.advantages.iter().zip(returns) {
            assert!((a[0] - (r - m) / s).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_multi_turn_uses_the_floor() {
        let cfg = GrpoConfig::default();
        let group: Vec<Trajectory> = (0..2).map(|_| traj(&[Q, A], &[0.0, 1.0], Termination::Success, 15)).collect();
        let adv = group_advantages(&group, &cfg);
        assert!(adv.degenerate);
        assert_eq!(adv.advantages[0][1], 0.0);
        assert!((adv.advantages[0][0] - (0.8 - 1.0) / 1e-8).abs() < 1e-3);
    }

    #[test]
    fn clipped_loss_examples() {
        let adv = [0.5, -1.0, 2.0];
        let lp = [-1.0, -0.3, -2.0];
        assert!((clipped_loss(&lp, &lp, &adv, 0.2).unwrap() - adv.iter().sum::<f64>() / 3.0).abs() < 1e-12);
        let two = 2f64.ln();
        assert!((clipped_loss(&[two], &[0.0], &[1.5], 0.2).unwrap() - 1.2 * 1.5).abs() < 1e-12);
        let half = 0.5f64.ln();
        assert!((clipped_loss(&[half], &[0.0], &[-1.5], 0.2).unwrap() - 0.8 * -1.5).abs() < 1e-12);
        assert!(matches!(clipped_loss(&[800.0], &[0.0], &[1.0], 0.2), Err(GrpoError::NonFiniteRatio { index: 0 })));
    }

    fn random_samples(rng: &mut crate::rng::Rng, n: usize) -> Vec<Sample> {
        (0..n)
            .map(|_| {
                let mut features = vec![1.0];
                features.extend((1..N_FEATURES).map(|_| rng.gen_range(0.0..1.0)));
                Sample {
                    features,
                    action: rng.gen_range(0..4),
                    old_log_prob: rng.gen_range(-2.5..-0.3),
                    advantage: rng.gen_range(-2.0..2.0),
                }
            })
            .collect()
    }

    #[test]
    fn on_policy_gradient_is_vanilla_policy_gradient() {
        let mut rng = crate::rng::rng_from_seed(4);
        let policy = PolicyParams::from_theta(4, 6, (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let mut samples = random_samples(&mut rng, 30);
        for s in &mut samples {
            s.old_log_prob = policy.log_prob(&s.features, s.action);
        }
        let sur = surrogate(&policy, &samples, 0.2).unwrap();
        assert_eq!(sur.clip_fraction, 0.0);
        let mut vanilla = vec![0.0; 24];
        for s in &samples {
            policy.accumulate_grad_log_prob(&s.features, s.action, s.advantage / samples.len() as f64, &mut vanilla);
        }
        assert!(close(&sur.grad, &vanilla, 1e-12));
    }

    #[test]
    fn zero_advantages_leave_parameters_unchanged() {
        let mut rng = crate::rng::rng_from_seed(8);
        let policy = PolicyParams::from_theta(4, 6, (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let group = RolloutGroup {
            task_id: "function:1".into(),
            trajectories: single_turn_group(&[0.0, 0.0]),
            decisions: vec![
                vec![Decision { features: [1.0, 0.0, 0.0, 0.0, 0.0, 0.0], template: 3, log_prob: -1.0 }];
                2
            ],
        };
        let cfg = GrpoConfig { skip_degenerate: false, ..GrpoConfig::default() };
        let (next, stats) = grpo_step(&policy, &[group], &cfg).unwrap();
        assert_eq!(next, policy);
        assert_eq!(stats.mean_abs_advantage, 0.0);
    }

    #[test]
    fn invalid_groups_are_rejected() {
        let one = RolloutGroup {
            task_id: "function:1".into(),
            trajectories: single_turn_group(&[1.0]),
            decisions: vec![vec![]],
        };
        assert!(one.validate().is_err());
        let mut mixed = single_turn_group(&[1.0, 0.0]);
        mixed[1].context_digest = "other".into();
        let d = vec![Decision { features: [1.0, 0.0, 0.0, 0.0, 0.0, 0.0], template: 0, log_prob: -1.0 }];
        let g = RolloutGroup { task_id: "function:1".into(), trajectories: mixed, decisions: vec![d.clone(), d] };
        assert!(g.validate().is_err());
    }

    #[test]
    fn training_is_deterministic_and_zero_epochs_is_identity() {
        let suite = EnvSuite { function_depth: 2, ..EnvSuite::default() };
        let cfg = TrainConfig { epochs: 2, episodes_per_epoch: 16, ..TrainConfig::default() };
        let (a, ca) = train(PolicyParams::default(), &suite, &cfg, None).unwrap();
        let (b, cb) = train(PolicyParams::default(), &suite, &cfg, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(ca, cb);
        assert_eq!(ca.len(), 2);
        let zero = TrainConfig { epochs: 0, ..cfg };
        let (p, c) = train(PolicyParams::default(), &suite, &zero, None).unwrap();
        assert_eq!(p, PolicyParams::default());
        assert!(c.is_empty());
    }

    #[test]
    fn curve_score_ignores_shaping() {
        let suite = EnvSuite { function_depth: 2, ..EnvSuite::default() };
        let base = TrainConfig { epochs: 1, episodes_per_epoch: 16, ..TrainConfig::default() };
        let off = TrainConfig { shaping: ShapingConfig::DISABLED, ..base.clone() };
        let (_, with) = train(PolicyParams::default(), &suite, &base, None).unwrap();
        let (_, without) = train(PolicyParams::default(), &suite, &off, None).unwrap();
        assert_eq!(with[0].score, without[0].score);
        assert_eq!(with[0].ur, without[0].ur);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.json");
        let p = PolicyParams::from_theta(4, 6, (0..24).map(|i| i as f64 * 0.1).collect());
        let cfg = TrainConfig::default();
        Checkpoint::new(&p, cfg.echo()).save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.policy().unwrap(), p);
        assert_eq!(loaded.config["gamma"], "0.8");
        let mut bad = loaded.clone();
        bad.version = 99;
        assert!(bad.policy().is_err());
    }

    #[test]
    fn curve_csv_layout() {
        let mut out = Vec::new();
        let row = CurveRow { epoch: 0, score: 0.5, ur: 0.25, exploration_ratio: 3.0, loss: 0.1, clip_fraction: 0.0 };
        let echo: BTreeMap<String, String> = [("gamma".to_string(), "0.8".to_string())].into();
        write_curve_csv(&mut out, &[row], &echo).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "# gamma=0.8\nepoch,score,ur,exploration_ratio,loss,clip_fraction\n0,0.5,0.25,3,0.1,0\n");
    }

    proptest! {
        #[test]
        fn reward_to_go_is_linear(
            r1 in proptest::collection::vec(-1.0f64..1.0, 1..12),
            a in -2.0f64..2.0, b in -2.0f64..2.0, gamma in 0.01f64..=1.0,
        ) {
            let r2: Vec<f64> = r1.iter().map(|v| v * 0.37 - 0.1).collect();
            let mixed: Vec<f64> = r1.iter().zip(&r2).map(|(x, y)| a * x + b * y).collect();
            let lhs = reward_to_go(&mixed, gamma);
            let (g1, g2) = (reward_to_go(&r1, gamma), reward_to_go(&r2, gamma));
            for i in 0..lhs.len() {
                prop_assert!((lhs[i] - (a * g1[i] + b * g2[i])).abs() < 1e-9);
            }
        }

        #[test]
        fn clip_fraction_is_a_fraction(seed in 0u64..500) {
            let mut rng = crate::rng::rng_from_seed(seed);
            let policy = PolicyParams::from_theta(4, 6, (0..24).map(|_| rng.gen_range(-2.0..2.0)).collect());
            let samples = random_samples(&mut rng, 16);
            let s = surrogate(&policy, &samples, 0.2).unwrap();
            prop_assert!((0.0..=1.0).contains(&s.clip_fraction));
        }
    }
}
