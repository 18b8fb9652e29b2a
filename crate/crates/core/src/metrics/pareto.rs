use serde::{Deserialize, Serialize};

/// One point of the user-budget / pass-rate trade-off.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub budget_k: usize,
    pub pass_rate: f64,
}

impl ParetoPoint {
    pub fn new(budget_k: usize, pass_rate: f64) -> Self {
        Self { budget_k, pass_rate }
    }

    /// Smaller budget and higher pass rate are better; one must be strict.
    pub fn dominates(&self, other: &ParetoPoint) -> bool {
        self.budget_k <= other.budget_k
            && self.pass_rate >= other.pass_rate
            && (self.budget_k < other.budget_k || self.pass_rate > other.pass_rate)
    }
}

/// Maximal non-dominated subset sorted by budget. Of duplicate points, the
/// first in input order is kept.
pub fn pareto_frontier(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut out: Vec<ParetoPoint> = Vec::new();
    for p in points {
        if points.iter().any(|q| q.dominates(p)) || out.contains(p) {
            continue;
        }
        out.push(*p);
    }
    out.sort_by_key(|p| p.budget_k);
    out
}

/// Every point of `other` is matched or beaten by some point of `front`.
pub fn weakly_dominates(front: &[ParetoPoint], other: &[ParetoPoint]) -> bool {
    other
        .iter()
        .all(|q| front.iter().any(|p| p.budget_k <= q.budget_k && p.pass_rate >= q.pass_rate))
}

pub fn write_frontier_csv<W: std::io::Write>(mut out: W, frontier: &[ParetoPoint]) -> std::io::Result<()> {
    writeln!(out, "k,pass_rate")?;
    for p in frontier {
        writeln!(out, "{},{}", p.budget_k, p.pass_rate)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[(usize, f64)]) -> Vec<ParetoPoint> {
        v.iter().map(|&(k, r)| ParetoPoint::new(k, r)).collect()
    }

    #[test]
    fn examples() {
        assert_eq!(pareto_frontier(&pts(&[(1, 0.3), (2, 0.5), (3, 0.4)])), pts(&[(1, 0.3), (2, 0.5)]));
        assert_eq!(pareto_frontier(&pts(&[(4, 0.2)])), pts(&[(4, 0.2)]));
        assert_eq!(pareto_frontier(&pts(&[(2, 0.5), (2, 0.5), (3, 0.1)])), pts(&[(2, 0.5)]));
        assert!(pareto_frontier(&[]).is_empty());
    }

    #[test]
    fn weak_dominance() {
        let a = pts(&[(1, 0.5), (3, 0.9)]);
        let b = pts(&[(1, 0.4), (4, 0.9)]);
        assert!(weakly_dominates(&a, &b));
        assert!(!weakly_dominates(&b, &a));
        assert!(weakly_dominates(&a, &a));
    }

    proptest! {
        #[test]
        fn sound_and_complete(raw in proptest::collection::vec((1usize..8, 0u8..11), 1..=20)) {
            let points: Vec<ParetoPoint> = raw.iter().map(|&(k, r)| ParetoPoint::new(k, f64::from(r) / 10.0)).collect();
            let front = pareto_frontier(&points);
            for a in &front {
                for b in &front {
                    prop_assert!(!a.dominates(b));
                }
            }
            for p in &points {
                let dominated = points.iter().any(|q| q.dominates(p));
                prop_assert_eq!(front.contains(p), !dominated);
            }
            prop_assert!(front.windows(2).all(|w| w[0].budget_k <= w[1].budget_k));
        }
    }
}
