//! Turn-level behavior regularization. Both penalties only ever subtract from
//! `shaped_reward`; raw rewards are left alone.

use serde::{Deserialize, Serialize};

use crate::mdp::{Termination, Trajectory};

pub const DEFAULT_LAMBDA_ANS: f64 = 0.1;
pub const DEFAULT_LAMBDA_THINK: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapingConfig {
    /// Penalty for each user-involved turn directly following another one.
    pub lambda_ans: f64,
    /// Scale of the per-turn penalty for failing before the budget runs out.
    pub lambda_think: f64,
}

impl Default for ShapingConfig {
    fn default() -> Self {
        Self { lambda_ans: DEFAULT_LAMBDA_ANS, lambda_think: DEFAULT_LAMBDA_THINK }
    }
}

impl ShapingConfig {
    pub const DISABLED: ShapingConfig = ShapingConfig { lambda_ans: 0.0, lambda_think: 0.0 };

    pub fn new(lambda_ans: f64, lambda_think: f64) -> Result<Self, String> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(lambda_ans) || !ok(lambda_think) {
            return Err(format!("penalty coefficients must be finite and >= 0 (got {lambda_ans}, {lambda_think})"));
        }
        Ok(Self { lambda_ans, lambda_think })
    }

    pub fn is_disabled(&self) -> bool {
        self.lambda_ans == 0.0 && self.lambda_think == 0.0
    }
}

/// Subtracts `lambda_ans` from every user-involved turn whose predecessor is
/// also user-involved. The first turn is never penalized.
pub fn apply_info_seeking_penalty(mut traj: Trajectory, cfg: &ShapingConfig) -> Trajectory {
    if cfg.lambda_ans == 0.0 {
        return traj;
    }
    for t in 1..traj.turns.len() {
        if traj.turns[t].kind().is_user_involved() && traj.turns[t - 1].kind().is_user_involved() {
            traj.turns[t].shaped_reward -= cfg.lambda_ans;
        }
    }
    traj
}

/// Per-turn over-thinking penalty `lambda_think * (T - T') / T'`, or zero when
/// the trajectory succeeded or used the whole budget.
pub fn overthinking_penalty(traj: &Trajectory, lambda_think: f64, budget: usize) -> f64 {
    let used = traj.turns.len();
    if traj.terminated_by == Termination::Success || used == 0 || used >= budget {
        return 0.0;
    }
    lambda_think * (budget - used) as f64 / used as f64
}

pub fn apply_overthinking_penalty(mut traj: Trajectory, cfg: &ShapingConfig, budget: usize) -> Trajectory {
    let penalty = overthinking_penalty(&traj, cfg.lambda_think, budget);
    if penalty != 0.0 {
        for turn in &mut traj.turns {
            turn.shaped_reward -= penalty;
        }
    }
    traj
}

/// Information-seeking penalty, then over-thinking penalty, on top of the
/// current shaped rewards (fresh episodes carry shaped == raw). Applying it
/// twice compounds unless `cfg` is disabled.
pub fn shape(traj: Trajectory, cfg: &ShapingConfig, budget: usize) -> Trajectory {
    apply_overthinking_penalty(apply_info_seeking_penalty(traj, cfg), cfg, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::testing::traj;
    use crate::mdp::ActionKind::{self, Answer as A, Query as Q, Search as S};
    use proptest::prelude::*;

    fn shaped(t: &Trajectory) -> Vec<f64> {
        t.shaped_rewards()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn consecutive_answers_are_penalized() {
        let t = traj(&[A, A, A], &[0.0, 0.0, 1.0], Termination::Success, 15);
        let out = apply_info_seeking_penalty(t, &ShapingConfig::new(0.1, 0.0).unwrap());
        assert!(close(&shaped(&out), &[0.0, -0.1, 0.9]));
        assert_eq!(out.raw_rewards(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn no_penalty_without_consecutive_answers() {
        let t = traj(&[Q, A], &[0.0, 1.0], Termination::Success, 15);
        let out = apply_info_seeking_penalty(t.clone(), &ShapingConfig::new(0.7, 0.0).unwrap());
        assert_eq!(shaped(&out), t.raw_rewards());
        let out = apply_info_seeking_penalty(
            traj(&[A, A], &[0.0, 0.0], Termination::AgentStop, 15),
            &ShapingConfig::DISABLED,
        );
        assert_eq!(shaped(&out), vec![0.0, 0.0]);
    }

    #[test]
    fn overthinking_examples() {
        let cfg = ShapingConfig::new(0.0, 0.5).unwrap();
        let failed = traj(&[Q; 5], &[0.0; 5], Termination::AgentStop, 15);
        assert!(close(&shaped(&apply_overthinking_penalty(failed, &cfg, 15)), &[-1.0; 5]));
        let full = traj(&[Q; 15], &[0.0; 15], Termination::BudgetExhausted, 15);
        assert_eq!(shaped(&apply_overthinking_penalty(full, &cfg, 15)), vec![0.0; 15]);
        let won = traj(&[Q, Q, A], &[0.0, 0.0, 1.0], Termination::Success, 15);
        assert_eq!(shaped(&apply_overthinking_penalty(won, &cfg, 15)), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn composed_example() {
        let t = traj(&[A, A], &[0.0, 0.0], Termination::AgentStop, 15);
        let out = shape(t, &ShapingConfig::new(0.1, 0.1).unwrap(), 15);
        assert!(close(&shaped(&out), &[-0.65, -0.75]));
        assert_eq!(out.raw_return(), 0.0);
    }

    #[test]
    fn disabled_config_is_identity() {
        let t = traj(&[A, A, Q], &[0.2, 0.3, 0.0], Termination::AgentStop, 15);
        assert_eq!(shape(t.clone(), &ShapingConfig::DISABLED, 15), t);
    }

    #[test]
    fn shaping_twice_compounds() {
        let cfg = ShapingConfig::default();
        let t = traj(&[A, A], &[0.0, 0.0], Termination::AgentStop, 15);
        let once = shape(t, &cfg, 15);
        assert_ne!(shape(once.clone(), &cfg, 15), once);
    }

    #[test]
    fn invalid_coefficients() {
        assert!(ShapingConfig::new(-0.1, 0.0).is_err());
        assert!(ShapingConfig::new(0.0, f64::NAN).is_err());
        assert!(ShapingConfig::new(0.0, f64::INFINITY).is_err());
    }

    fn arb_traj() -> impl Strategy<Value = (Trajectory, usize)> {
        (1usize..=16, any::<bool>()).prop_flat_map(|(budget, success)| {
            (
                proptest::collection::vec((0u8..3, 0.0f64..1.0), 1..=budget),
                Just(budget),
                Just(success),
            )
                .prop_map(|(turns, budget, success)| {
                    let kinds: Vec<ActionKind> = turns.iter().map(|(k, _)| [Q, S, A][*k as usize]).collect();
                    let raw: Vec<f64> = turns.iter().map(|(_, r)| *r).collect();
                    let term = if success { Termination::Success } else { Termination::AgentStop };
                    (traj(&kinds, &raw, term, budget), budget)
                })
        })
    }

    proptest! {
        #[test]
        fn shaping_only_subtracts_and_keeps_raw((t, budget) in arb_traj(), la in 0.0f64..1.0, lt in 0.0f64..1.0) {
            let out = shape(t.clone(), &ShapingConfig::new(la, lt).unwrap(), budget);
            prop_assert_eq!(out.raw_rewards(), t.raw_rewards());
            prop_assert!(out.validate().is_ok());
        }

        #[test]
        fn monotone_in_lambdas((t, budget) in arb_traj(), la in 0.0f64..1.0, lt in 0.0f64..1.0, d in 0.0f64..1.0) {
            let base = shape(t.clone(), &ShapingConfig::new(la, lt).unwrap(), budget);
            let more_ans = shape(t.clone(), &ShapingConfig::new(la + d, lt).unwrap(), budget);
            let more_think = shape(t, &ShapingConfig::new(la, lt + d).unwrap(), budget);
            for i in 0..base.len() {
                prop_assert!(more_ans.turns[i].shaped_reward <= base.turns[i].shaped_reward);
                prop_assert!(more_think.turns[i].shaped_reward <= base.turns[i].shaped_reward);
            }
        }
    }
}
