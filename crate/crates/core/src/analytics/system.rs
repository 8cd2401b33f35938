use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::corr::{pearson, CorrelationResult};
use crate::corpus::SourceModel;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemRow {
    pub source_model: SourceModel,
    pub mean_human: f64,
    pub mean_metric: f64,
    pub count: usize,
}

/// Per-source means, ordered by source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSummary {
    pub rows: Vec<SystemRow>,
}

impl SystemSummary {
    pub fn new(sources: &[SourceModel], human: &[f64], metric: &[f64]) -> Result<Self> {
        if sources.len() != human.len() || human.len() != metric.len() {
            return Err(Error::dim("system-level columns", sources.len(), metric.len()));
        }
        let mut acc: BTreeMap<SourceModel, (f64, f64, usize)> = BTreeMap::new();
        for ((s, h), m) in sources.iter().zip(human).zip(metric) {
            let e = acc.entry(*s).or_default();
            e.0 += h;
            e.1 += m;
            e.2 += 1;
        }
        Ok(SystemSummary {
            rows: acc
                .into_iter()
                .map(|(source_model, (h, m, count))| SystemRow {
                    source_model,
                    mean_human: h / count as f64,
                    mean_metric: m / count as f64,
                    count,
                })
                .collect(),
        })
    }
}

/// Pearson correlation across per-source mean scores.
pub fn system_level_correlation(
    sources: &[SourceModel],
    human: &[f64],
    metric: &[f64],
) -> Result<(CorrelationResult, SystemSummary)> {
    let summary = SystemSummary::new(sources, human, metric)?;
    if summary.rows.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "system-level correlation needs at least 3 source models, got {}",
            summary.rows.len()
        )));
    }
    let h: Vec<f64> = summary.rows.iter().map(|r| r.mean_human).collect();
    let m: Vec<f64> = summary.rows.iter().map(|r| r.mean_metric).collect();
    Ok((pearson(&m, &h)?, summary))
}
