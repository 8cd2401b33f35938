use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EvalExample;
use crate::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<EvalExample>,
    pub validation: Vec<EvalExample>,
    pub test: Vec<EvalExample>,
}

/// Partitions the dataset so that no context appears in more than one split.
///
/// Contexts are shuffled with `seed` and allotted by `ratios`
/// (train, validation, test); every split receives at least one context.
/// Examples keep their input order within each split.
pub fn split_by_context(ds: &[EvalExample], ratios: [f64; 3], seed: u64) -> Result<Splits> {
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "split ratios must be positive, got {ratios:?}"
        )));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "split ratios must sum to 1, got {total}"
        )));
    }

    let mut ids: Vec<&str> = Vec::new();
    let mut seen = HashSet::new();
    for ex in ds {
        let id = ex.context.context_id.as_str();
        if seen.insert(id) {
            ids.push(id);
        }
    }
    let k = ids.len();
    if k < 3 {
        return Err(Error::Degenerate(format!(
            "{k} distinct contexts cannot fill three context-disjoint splits"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let mut n_train = ((ratios[0] * k as f64).round() as usize).clamp(1, k - 2);
    let mut n_val = ((ratios[1] * k as f64).round() as usize).max(1);
    if n_train + n_val > k - 1 {
        n_val = (k - 1 - n_train).max(1);
        n_train = k - 1 - n_val;
    }

    let assignment: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let bucket = if i < n_train {
                0
            } else if i < n_train + n_val {
                1
            } else {
                2
            };
            (*id, bucket)
        })
        .collect();

    let mut splits = Splits::default();
    for ex in ds {
        let target = match assignment[ex.context.context_id.as_str()] {
            0 => &mut splits.train,
            1 => &mut splits.validation,
            _ => &mut splits.test,
        };
        target.push(ex.clone());
    }
    Ok(splits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Context, SourceModel, Utterance};

    pub(crate) fn fixture(contexts: usize, per_context: usize) -> Vec<EvalExample> {
        let mut out = Vec::new();
        for c in 0..contexts {
            for r in 0..per_context {
                out.push(EvalExample {
                    context: Context {
                        context_id: format!("ctx{c}"),
                        utterances: vec![Utterance::new(format!("hello {c}"))],
                    },
                    model_response: Utterance::new(format!("resp {r}")),
                    reference_response: Utterance::new("ref"),
                    human_score: 1.0 + (r % 5) as f64,
                    source_model: SourceModel::Human,
                });
            }
        }
        out
    }

    fn ids(xs: &[EvalExample]) -> HashSet<String> {
        xs.iter().map(|e| e.context.context_id.clone()).collect()
    }

    #[test]
    fn table_sized_split() {
        let ds = fixture(1026, 4);
        let s = split_by_context(&ds, [0.7, 0.15, 0.15], 1).unwrap();
        assert_eq!(
            (s.train.len(), s.validation.len(), s.test.len()),
            (2872, 616, 616)
        );
    }

    #[test]
    fn contexts_are_disjoint_and_complete() {
        let ds = fixture(37, 3);
        let s = split_by_context(&ds, [0.6, 0.2, 0.2], 9).unwrap();
        let (a, b, c) = (ids(&s.train), ids(&s.validation), ids(&s.test));
        assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
        let union: HashSet<_> = a.union(&b).chain(c.iter()).cloned().collect();
        assert_eq!(union, ids(&ds));
        assert_eq!(s.train.len() + s.validation.len() + s.test.len(), ds.len());
    }

    #[test]
    fn single_context_is_unsplittable() {
        let ds = fixture(1, 8);
        assert!(matches!(
            split_by_context(&ds, [0.7, 0.15, 0.15], 0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn deterministic_given_seed() {
        let ds = fixture(10, 2);
        let a = split_by_context(&ds, [0.5, 0.25, 0.25], 42).unwrap();
        let b = split_by_context(&ds, [0.5, 0.25, 0.25], 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn three_contexts_fill_every_split() {
        let ds = fixture(3, 1);
        let s = split_by_context(&ds, [0.98, 0.01, 0.01], 3).unwrap();
        assert_eq!(
            (s.train.len(), s.validation.len(), s.test.len()),
            (1, 1, 1)
        );
    }

    #[test]
    fn bad_ratios_rejected() {
        let ds = fixture(5, 1);
        assert!(split_by_context(&ds, [0.5, 0.5, 0.0], 0).is_err());
        assert!(split_by_context(&ds, [0.5, 0.4, 0.4], 0).is_err());
    }
}
