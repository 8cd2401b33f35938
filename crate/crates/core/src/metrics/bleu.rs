use std::hash::Hash;

use super::ngram::NGramCounts;
use crate::{Error, Result};

/// Replacement precision for zero-match orders under [`Smoothing::AddEpsilon`].
pub const SMOOTHING_EPSILON: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Smoothing {
    /// Exact BLEU: any zero precision zeroes the score.
    None,
    AddEpsilon,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BleuConfig {
    pub max_order: usize,
    pub weights: Vec<f64>,
    pub smoothing: Smoothing,
}

impl BleuConfig {
    /// Uniform weights over orders `1..=max_order`, sentence-level smoothing.
    pub fn new(max_order: usize) -> Self {
        BleuConfig {
            max_order,
            weights: vec![1.0 / max_order as f64; max_order],
            smoothing: Smoothing::AddEpsilon,
        }
    }

    pub fn unsmoothed(max_order: usize) -> Self {
        BleuConfig {
            smoothing: Smoothing::None,
            ..Self::new(max_order)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_order == 0 {
            return Err(Error::InvalidArgument("BLEU order must be ≥ 1".into()));
        }
        if self.weights.len() != self.max_order {
            return Err(Error::dim("BLEU weights", self.max_order, self.weights.len()));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument(
                "BLEU weights must be non-negative".into(),
            ));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "BLEU weights must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig::new(4)
    }
}

/// Sufficient statistics for BLEU; add them up for a corpus-level score.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BleuStats {
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
    pub candidate_len: usize,
    pub reference_len: usize,
}

impl BleuStats {
    pub fn collect<T, R>(candidate: &[T], references: &[R], max_order: usize) -> Self
    where
        T: Eq + Hash,
        R: AsRef<[T]>,
    {
        let mut matches = Vec::with_capacity(max_order);
        let mut totals = Vec::with_capacity(max_order);
        for n in 1..=max_order {
            let cand = NGramCounts::new(candidate, n);
            let refs: Vec<_> = references
                .iter()
                .map(|r| NGramCounts::new(r.as_ref(), n))
                .collect();
            matches.push(cand.clipped_matches(&refs));
            totals.push(cand.total());
        }
        BleuStats {
            matches,
            totals,
            candidate_len: candidate.len(),
            reference_len: closest_reference_len(candidate.len(), references),
        }
    }

    pub fn add(&mut self, other: &BleuStats) {
        if self.matches.is_empty() {
            *self = other.clone();
            return;
        }
        for (a, b) in self.matches.iter_mut().zip(&other.matches) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            *a += b;
        }
        self.candidate_len += other.candidate_len;
        self.reference_len += other.reference_len;
    }

    pub fn score(&self, cfg: &BleuConfig) -> f64 {
        let mut log_sum = 0.0;
        for (n, &w) in cfg.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let (m, t) = (self.matches[n], self.totals[n]);
            let p = if t == 0 { 0.0 } else { m as f64 / t as f64 };
            let p = match (p > 0.0, cfg.smoothing) {
                (true, _) => p,
                (false, Smoothing::AddEpsilon) => SMOOTHING_EPSILON,
                (false, Smoothing::None) => return 0.0,
            };
            log_sum += w * p.ln();
        }
        self.brevity_penalty() * log_sum.exp()
    }

    /// `min(1, exp(1 - ref_len / cand_len))`
    pub fn brevity_penalty(&self) -> f64 {
        if self.candidate_len == 0 {
            return 0.0;
        }
        let ratio = self.reference_len as f64 / self.candidate_len as f64;
        (1.0 - ratio).exp().min(1.0)
    }
}

// Closest reference length; ties go to the shorter reference.
fn closest_reference_len<T, R: AsRef<[T]>>(cand_len: usize, references: &[R]) -> usize {
    references
        .iter()
        .map(|r| r.as_ref().len())
        .min_by_key(|&l| (l.abs_diff(cand_len), l))
        .unwrap_or(0)
}

/// Sentence-level BLEU of one candidate against one or more references.
pub fn bleu_n<T, R>(candidate: &[T], references: &[R], cfg: &BleuConfig) -> Result<f64>
where
    T: Eq + Hash,
    R: AsRef<[T]>,
{
    cfg.validate()?;
    if candidate.is_empty() {
        return Err(Error::InvalidArgument("BLEU candidate is empty".into()));
    }
    if references.is_empty() {
        return Err(Error::InvalidArgument("BLEU needs at least one reference".into()));
    }
    Ok(BleuStats::collect(candidate, references, cfg.max_order).score(cfg))
}

/// Corpus-level BLEU: n-gram statistics are pooled before the geometric mean.
pub fn corpus_bleu<T, R, C>(pairs: &[(C, Vec<R>)], cfg: &BleuConfig) -> Result<f64>
where
    T: Eq + Hash,
    R: AsRef<[T]>,
    C: AsRef<[T]>,
{
    cfg.validate()?;
    let mut total = BleuStats::default();
    for (cand, refs) in pairs {
        if cand.as_ref().is_empty() || refs.is_empty() {
            return Err(Error::InvalidArgument(
                "corpus BLEU needs non-empty candidates and references".into(),
            ));
        }
        total.add(&BleuStats::collect(cand.as_ref(), refs, cfg.max_order));
    }
    if total.matches.is_empty() {
        return Err(Error::InvalidArgument("corpus BLEU on empty corpus".into()));
    }
    Ok(total.score(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identity_scores_one() {
        let c = toks("the quick brown fox jumps");
        let s = bleu_n(&c, &[c.clone()], &BleuConfig::unsmoothed(4)).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn worked_bigram_example() {
        let c = toks("the cat sat on the mat");
        let r = toks("the cat is on the mat");
        let s = bleu_n(&c, &[r], &BleuConfig::unsmoothed(2)).unwrap();
        let expected = (5.0f64 / 6.0 * 3.0 / 5.0).sqrt();
        assert!((s - expected).abs() < 1e-12, "{s} vs {expected}");
        assert!((s - 0.70711).abs() < 1e-5);
    }

    #[test]
    fn zero_bigram_overlap() {
        let c = toks("b a d c");
        let r = toks("a b c d");
        assert_eq!(bleu_n(&c, &[r.clone()], &BleuConfig::unsmoothed(2)).unwrap(), 0.0);
        let smoothed = bleu_n(&c, &[r], &BleuConfig::new(2)).unwrap();
        assert!(smoothed > 0.0 && smoothed < 1e-4);
    }

    #[test]
    fn brevity_penalty_applies_to_short_candidates() {
        let c = toks("the cat");
        let r = toks("the cat sat down");
        let s = bleu_n(&c, &[r], &BleuConfig::unsmoothed(1)).unwrap();
        assert!((s - (1.0f64 - 2.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn multi_reference_clips_by_max() {
        let c = toks("the the the");
        let r1 = toks("the cat");
        let r2 = toks("the the dog");
        let s = bleu_n(&c, &[r1, r2], &BleuConfig::unsmoothed(1)).unwrap();
        // two of three clipped unigram matches, closest reference length 3
        assert!((s - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let r = toks("a b");
        assert!(bleu_n::<&str, _>(&[], &[r.clone()], &BleuConfig::new(2)).is_err());
        assert!(bleu_n::<&str, Vec<&str>>(&r, &[], &BleuConfig::new(2)).is_err());
        let bad = BleuConfig {
            weights: vec![0.7, 0.7],
            ..BleuConfig::new(2)
        };
        assert!(bleu_n(&r, &[r.clone()], &bad).is_err());
    }

    #[test]
    fn corpus_pools_statistics() {
        let pairs = vec![
            (toks("a b c d"), vec![toks("a b c d")]),
            (toks("e f g h"), vec![toks("e f x h")]),
        ];
        let s = corpus_bleu(&pairs, &BleuConfig::unsmoothed(2)).unwrap();
        let expected = ((7.0f64 / 8.0) * (4.0 / 6.0)).sqrt();
        assert!((s - expected).abs() < 1e-12);
    }
}
