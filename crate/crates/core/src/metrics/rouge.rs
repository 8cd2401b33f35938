use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RougeConfig {
    /// Recall weighting; values above 1 favour recall.
    pub beta: f64,
}

impl Default for RougeConfig {
    fn default() -> Self {
        RougeConfig { beta: 1.2 }
    }
}

/// Length of the longest common subsequence, O(|a|·|b|) time, O(|b|) space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure. Recall and precision each take their own maximum
/// over the references.
pub fn rouge_l<T, R>(candidate: &[T], references: &[R], cfg: &RougeConfig) -> Result<f64>
where
    T: PartialEq,
    R: AsRef<[T]>,
{
    if !(cfg.beta.is_finite() && cfg.beta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ROUGE beta must be positive, got {}",
            cfg.beta
        )));
    }
    if candidate.is_empty() || references.is_empty() {
        return Err(Error::InvalidArgument(
            "ROUGE-L needs a candidate and at least one reference".into(),
        ));
    }
    let mut recall = 0.0f64;
    let mut precision = 0.0f64;
    for r in references {
        let r = r.as_ref();
        if r.is_empty() {
            return Err(Error::InvalidArgument("ROUGE-L reference is empty".into()));
        }
        let l = lcs_len(candidate, r) as f64;
        recall = recall.max(l / r.len() as f64);
        precision = precision.max(l / candidate.len() as f64);
    }
    if recall == 0.0 && precision == 0.0 {
        return Ok(0.0);
    }
    let b2 = cfg.beta * cfg.beta;
    Ok((1.0 + b2) * recall * precision / (recall + b2 * precision))
}
