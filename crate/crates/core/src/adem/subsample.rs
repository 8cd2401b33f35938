use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::AdemExample;
use crate::corpus::EvalExample;
use crate::{Error, Result};

/// Something with a human score and a response length in words.
pub trait LengthScored {
    fn human_score(&self) -> f64;
    fn response_len(&self) -> usize;
}

impl LengthScored for EvalExample {
    fn human_score(&self) -> f64 {
        self.human_score
    }

    fn response_len(&self) -> usize {
        self.model_response.word_count()
    }
}

impl LengthScored for AdemExample {
    fn human_score(&self) -> f64 {
        self.human_score
    }

    fn response_len(&self) -> usize {
        self.response_len
    }
}

/// Response-length bins given by increasing lower edges; the last bin is
/// open-ended.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthBins {
    pub lower_edges: Vec<usize>,
}

impl Default for LengthBins {
    /// 1–5, 6–10, 11–20, 21+ words.
    fn default() -> Self {
        LengthBins {
            lower_edges: vec![1, 6, 11, 21],
        }
    }
}

impl LengthBins {
    pub fn new(lower_edges: Vec<usize>) -> Result<Self> {
        let b = LengthBins { lower_edges };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower_edges.is_empty() {
            return Err(Error::InvalidArgument("no length bins configured".into()));
        }
        if self.lower_edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "length bin edges must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn bin(&self, len: usize) -> Option<usize> {
        self.lower_edges.iter().rposition(|&e| len >= e)
    }
}

/// Equalizes the length distribution within each score level (human score
/// rounded to the nearest integer). Every non-empty length bin keeps its
/// examples and is topped up by drawing with replacement from itself until
/// it matches the largest bin at that level.
///
/// The output lists the input in its original order, followed by the drawn
/// copies grouped by score level and bin.
pub fn subsample_by_length<T: LengthScored + Clone>(
    train: &[T],
    bins: &LengthBins,
    seed: u64,
) -> Result<Vec<T>> {
    bins.validate()?;
    let mut groups: BTreeMap<i64, Vec<Vec<usize>>> = BTreeMap::new();
    for (i, ex) in train.iter().enumerate() {
        let len = ex.response_len();
        let b = bins.bin(len).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "response length {len} falls below the first length bin (starts at {})",
                bins.lower_edges[0]
            ))
        })?;
        let level = ex.human_score().round() as i64;
        groups
            .entry(level)
            .or_insert_with(|| vec![Vec::new(); bins.lower_edges.len()])[b]
            .push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<T> = train.to_vec();
    for per_bin in groups.values() {
        let target = per_bin.iter().map(Vec::len).max().unwrap_or(0);
        for members in per_bin.iter().filter(|m| !m.is_empty()) {
            for _ in members.len()..target {
                let k = members[rng.random_range(0..members.len())];
                out.push(train[k].clone());
            }
        }
    }
    Ok(out)
}
