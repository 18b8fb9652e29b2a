//! Self-BLEU: each text scored as a BLEU candidate against all the others.

use std::collections::HashMap;

use super::MetricsError;

/// Floor applied to zero n-gram precisions before the geometric mean.
pub const SMOOTHING_FLOOR: f64 = 1e-9;

fn ngram_counts<'t, 'a>(tokens: &'t [&'a str], n: usize) -> HashMap<&'t [&'a str], usize> {
    let mut out = HashMap::new();
    for w in tokens.windows(n) {
        *out.entry(w).or_insert(0) += 1;
    }
    out
}

/// Multi-reference sentence BLEU with uniform weights over 1..=`max_n`,
/// clipped counts, brevity penalty against the closest reference length.
pub fn bleu(candidate: &[&str], references: &[Vec<&str>], max_n: usize) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand = ngram_counts(candidate, n);
        let total: usize = cand.values().sum();
        let mut max_ref: HashMap<&[&str], usize> = HashMap::new();
        for r in references {
            for (g, c) in ngram_counts(r, n) {
                let slot = max_ref.entry(g).or_insert(0);
                *slot = (*slot).max(c);
            }
        }
        let clipped: usize = cand.iter().map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0))).sum();
        let p = if total == 0 || clipped == 0 { SMOOTHING_FLOOR } else { clipped as f64 / total as f64 };
        log_sum += p.ln();
    }
    let geo = (log_sum / max_n as f64).exp();
    let c = candidate.len();
    let r = references
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(c);
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    (bp * geo).clamp(0.0, 1.0)
}

/// Mean BLEU of each text against all other texts as references.
pub fn self_bleu<S: AsRef<str>>(texts: &[S], max_n: usize) -> Result<f64, MetricsError> {
    if texts.len() < 2 {
        return Err(MetricsError::TooFewTexts(texts.len()));
    }
    let tokenized: Vec<Vec<&str>> = texts.iter().map(|t| t.as_ref().split_whitespace().collect()).collect();
    let total: f64 = (0..tokenized.len())
        .map(|i| {
            let refs: Vec<Vec<&str>> =
                tokenized.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, t)| t.clone()).collect();
            bleu(&tokenized[i], &refs, max_n)
        })
        .sum();
    Ok(total / tokenized.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_score_one() {
        assert_eq!(self_bleu(&["a b c d", "a b c d"], 4).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_texts_hit_the_floor() {
        let v = self_bleu(&["a b c d", "e f g h"], 4).unwrap();
        assert!(v <= SMOOTHING_FLOOR * (1.0 + 1e-9), "{v}");
    }

    #[test]
    fn pinned_partial_overlap() {
        // Candidate "a b c d e" vs reference "a b c x y" (and symmetrically):
        // p1 = 3/5, p2 = 2/4, p3 = 1/3, p4 = 0 -> floor; equal lengths, BP = 1.
        let expected = (0.6f64 * 0.5 * (1.0 / 3.0) * 1e-9).powf(0.25);
        let v = self_bleu(&["a b c d e", "a b c x y"], 4).unwrap();
        assert!((v - expected).abs() < 1e-15, "{v} vs {expected}");
        assert!((v - 0.003_162_277_660_168_379).abs() < 1e-15);
    }

    #[test]
    fn brevity_penalty_applies_to_short_candidates() {
        let v = bleu(&["a", "b"], &[vec!["a", "b", "c", "d"]], 2);
        assert!((v - (1.0f64 - 2.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn too_few_texts() {
        assert!(matches!(self_bleu(&["a"], 4), Err(MetricsError::TooFewTexts(1))));
    }
}
