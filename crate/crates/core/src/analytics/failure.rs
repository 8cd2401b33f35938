use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureThresholds {
    /// "High" means `≥ high` for human scores and `> high` for metrics.
    pub high: f64,
    /// "Low" means `< low`.
    pub low: f64,
}

impl Default for FailureThresholds {
    fn default() -> Self {
        FailureThresholds { high: 4.0, low: 2.0 }
    }
}

/// Example indices for each nested filter.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FailureSlices {
    pub human_high: Vec<usize>,
    /// ... and both overlap metrics low
    pub overlap_low: Vec<usize>,
    /// ... and ADEM high
    pub overlap_low_adem_high: Vec<usize>,
    /// Human high and ADEM low.
    pub adem_low: Vec<usize>,
    /// ... and either overlap metric high
    pub adem_low_overlap_high: Vec<usize>,
}

impl FailureSlices {
    pub fn named_counts(&self) -> [(&'static str, usize); 5] {
        [
            ("human_high", self.human_high.len()),
            ("human_high_overlap_low", self.overlap_low.len()),
            ("human_high_overlap_low_adem_high", self.overlap_low_adem_high.len()),
            ("human_high_adem_low", self.adem_low.len()),
            ("human_high_adem_low_overlap_high", self.adem_low_overlap_high.len()),
        ]
    }
}

/// All metric columns should already be normalized to the human scale.
pub fn failure_slice(
    human: &[f64],
    overlap_a: &[f64],
    overlap_b: &[f64],
    adem: &[f64],
    th: FailureThresholds,
) -> Result<FailureSlices> {
    let n = human.len();
    for (col, len) in [("overlap_a", overlap_a.len()), ("overlap_b", overlap_b.len()), ("adem", adem.len())] {
        if len != n {
            return Err(Error::InvalidArgument(format!(
                "column {col} has {len} values, expected {n}"
            )));
        }
    }
    let mut out = FailureSlices::default();
    for i in 0..n {
        if human[i] < th.high {
            continue;
        }
        out.human_high.push(i);
        if overlap_a[i] < th.low && overlap_b[i] < th.low {
            out.overlap_low.push(i);
            if adem[i] > th.high {
                out.overlap_low_adem_high.push(i);
            }
        }
        if adem[i] < th.low {
            out.adem_low.push(i);
            if overlap_a[i] > th.high || overlap_b[i] > th.high {
                out.adem_low_overlap_high.push(i);
            }
        }
    }
    Ok(out)
}
