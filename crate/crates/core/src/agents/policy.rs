//! Softmax-linear template policy: `pi(k | phi) = softmax(theta phi)_k`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::mdp::{ActionKind, AgentView};
use crate::rng::Rng;

/// Number of action templates every adapter exposes.
pub const N_TEMPLATES: usize = 4;
/// Length of the history feature vector.
pub const N_FEATURES: usize = 6;

pub const TEMPLATE_NAMES: [&str; N_TEMPLATES] = ["probe_informative", "probe_random", "search", "answer_best"];

pub type Features = [f64; N_FEATURES];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub n_templates: usize,
    pub n_features: usize,
    /// Row-major `n_templates x n_features`.
    pub theta: Vec<f64>,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self::zeros(N_TEMPLATES, N_FEATURES)
    }
}

impl PolicyParams {
    pub fn zeros(n_templates: usize, n_features: usize) -> Self {
        assert!(n_templates > 0 && n_features > 0);
        Self { n_templates, n_features, theta: vec![0.0; n_templates * n_features] }
    }

    pub fn from_theta(n_templates: usize, n_features: usize, theta: Vec<f64>) -> Self {
        assert_eq!(theta.len(), n_templates * n_features, "theta shape mismatch");
        Self { n_templates, n_features, theta }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
    }

    pub fn logits(&self, phi: &[f64]) -> Vec<f64> {
        assert_eq!(phi.len(), self.n_features);
        self.theta.chunks(self.n_features).map(|row| row.iter().zip(phi).map(|(w, x)| w * x).sum()).collect()
    }

    /// Log-probabilities of every template. Logits are shifted by their max
    /// before exponentiation.
    pub fn log_probs(&self, phi: &[f64]) -> Vec<f64> {
        let logits = self.logits(phi);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        logits.iter().map(|l| l - lse).collect()
    }

    pub fn probs(&self, phi: &[f64]) -> Vec<f64> {
        self.log_probs(phi).into_iter().map(f64::exp).collect()
    }

    pub fn log_prob(&self, phi: &[f64], template: usize) -> f64 {
        self.log_probs(phi)[template]
    }

    /// Adds `scale * d log pi(template | phi) / d theta`, which is
    /// `scale * (e_template - pi) ⊗ phi`, into `grad`.
    pub fn accumulate_grad_log_prob(&self, phi: &[f64], template: usize, scale: f64, grad: &mut [f64]) {
        let probs = self.probs(phi);
        for (k, p) in probs.iter().enumerate() {
            let coeff = scale * (f64::from(u8::from(k == template)) - p);
            if coeff == 0.0 {
                continue;
            }
            for (g, x) in grad[k * self.n_features..(k + 1) * self.n_features].iter_mut().zip(phi) {
                *g += coeff * x;
            }
        }
    }
}

/// Samples a template and returns it with its exact log-probability.
pub fn policy_act(policy: &PolicyParams, phi: &[f64], rng: &mut Rng) -> (usize, f64) {
    let log_probs = policy.log_probs(phi);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut pick = log_probs.len() - 1;
    for (k, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            pick = k;
            break;
        }
    }
    (pick, log_probs[pick])
}

/// `[1, t/T, n_env/T, n_user/T, unique, last_answer_wrong]` where `t` counts
/// turns already played.
pub fn features(view: &AgentView<'_>, unique: bool, last_answer_wrong: bool) -> Features {
    let t = view.budget as f64;
    let n_user = view.turns.iter().filter(|x| x.kind() == ActionKind::Answer).count() as f64;
    let n_env = view.turns.len() as f64 - n_user;
    [
        1.0,
        view.turns.len() as f64 / t,
        n_env / t,
        n_user / t,
        f64::from(u8::from(unique)),
        f64::from(u8::from(last_answer_wrong)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn random_policy(seed: u64) -> PolicyParams {
        let mut rng = rng_from_seed(seed);
        PolicyParams::from_theta(4, 6, (0..24).map(|_| rng.gen_range(-3.0..3.0)).collect())
    }

    #[test]
    fn zero_theta_is_uniform() {
        let p = PolicyParams::default();
        for q in p.probs(&[1.0, 0.2, 0.1, 0.1, 0.0, 1.0]) {
            assert!((q - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn probabilities_normalize_even_with_huge_logits() {
        let mut p = random_policy(3);
        p.theta[0] = 1e308;
        let probs = p.probs(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(probs.iter().all(|v| v.is_finite()));
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for seed in 0..100 {
            let p = random_policy(seed);
            let s: f64 = p.probs(&[1.0, 0.5, 0.3, 0.2, 1.0, 0.0]).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_is_reproducible_and_logprob_exact() {
        let p = random_policy(9);
        let phi = [1.0, 0.4, 0.2, 0.2, 0.0, 1.0];
        let a = policy_act(&p, &phi, &mut rng_from_seed(5));
        let b = policy_act(&p, &phi, &mut rng_from_seed(5));
        assert_eq!(a, b);
        assert_eq!(a.1, p.log_prob(&phi, a.0));
    }

    #[test]
    fn sample_frequencies_follow_probabilities() {
        let p = random_policy(11);
        let phi = [1.0, 0.1, 0.1, 0.0, 1.0, 0.0];
        let probs = p.probs(&phi);
        let mut rng = rng_from_seed(0);
        let mut counts = [0usize; 4];
        let n = 40_000;
        for _ in 0..n {
            counts[policy_act(&p, &phi, &mut rng).0] += 1;
        }
        for k in 0..4 {
            assert!((counts[k] as f64 / n as f64 - probs[k]).abs() < 0.01);
        }
    }

    #[test]
    fn grad_log_prob_matches_finite_differences() {
        let p = random_policy(21);
        let phi = [1.0, 0.3, 0.6, 0.1, 1.0, 0.0];
        let mut grad = vec![0.0; 24];
        p.accumulate_grad_log_prob(&phi, 2, 1.0, &mut grad);
        let h = 1e-6;
        for i in 0..24 {
            let (mut hi, mut lo) = (p.clone(), p.clone());
            hi.theta[i] += h;
            lo.theta[i] -= h;
            let fd = (hi.log_prob(&phi, 2) - lo.log_prob(&phi, 2)) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-7, "{i}: {fd} vs {}", grad[i]);
        }
    }
}
