use std::collections::HashMap;
use std::hash::Hash;

/// Multiset of the order-`n` n-grams of a sequence.
#[derive(Clone, Debug)]
pub struct NGramCounts<'a, T> {
    order: usize,
    counts: HashMap<&'a [T], usize>,
}

impl<'a, T: Eq + Hash> NGramCounts<'a, T> {
    pub fn new(tokens: &'a [T], order: usize) -> Self {
        assert!(order >= 1, "n-gram order must be positive");
        let mut counts = HashMap::new();
        if tokens.len() >= order {
            for w in tokens.windows(order) {
                *counts.entry(w).or_insert(0) += 1;
            }
        }
        NGramCounts { order, counts }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, gram: &[T]) -> usize {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    /// Always `max(0, len - order + 1)` for the source sequence.
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'a [T], usize)> + '_ {
        self.counts.iter().map(|(k, v)| (*k, *v))
    }

    /// Sum over grams of `min(self[g], max over others[g])`.
    pub fn clipped_matches(&self, references: &[NGramCounts<'_, T>]) -> usize {
        self.iter()
            .map(|(g, c)| {
                let cap = references.iter().map(|r| r.get(g)).max().unwrap_or(0);
                c.min(cap)
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals_follow_length() {
        let toks = ["a", "b", "a", "b"];
        for n in 1..=5 {
            let c = NGramCounts::new(&toks, n);
            assert_eq!(c.total(), toks.len().saturating_sub(n - 1).min(toks.len()));
            assert!(c.iter().all(|(_, k)| k >= 1));
        }
        assert_eq!(NGramCounts::new(&toks, 2).get(&["a", "b"]), 2);
    }
}
