use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corr::{pearson, spearman, CorrelationResult};
use crate::adem::{predict, train_adem, AdemExample, TrainConfig};
use crate::corpus::SourceModel;
use crate::encoder::EmbeddingTriple;
use crate::{par, Error, Execution, Result};

/// The fractions of training data in the data-efficiency table.
pub const DEFAULT_FRACTIONS: [f64; 6] = [1.0, 0.75, 0.5, 0.25, 0.1, 0.05];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrPair {
    pub spearman: CorrelationResult,
    pub pearson: CorrelationResult,
}

/// Spearman and Pearson correlation of predictions with human scores.
pub fn correlate(pred: &[f64], human: &[f64]) -> Result<CorrPair> {
    Ok(CorrPair {
        spearman: spearman(pred, human)?,
        pearson: pearson(pred, human)?,
    })
}

fn mean_pair(pairs: &[CorrPair]) -> CorrPair {
    let k = pairs.len() as f64;
    let avg = |f: &dyn Fn(&CorrPair) -> CorrelationResult| CorrelationResult {
        coefficient: pairs.iter().map(|p| f(p).coefficient).sum::<f64>() / k,
        p_value: pairs.iter().map(|p| f(p).p_value).sum::<f64>() / k,
        n: f(&pairs[0]).n,
    };
    CorrPair {
        spearman: avg(&|p| p.spearman),
        pearson: avg(&|p| p.pearson),
    }
}

fn evaluate(
    train: &[AdemExample],
    validation: &[AdemExample],
    test: &[AdemExample],
    cfg: &TrainConfig,
) -> Result<CorrPair> {
    let trained = train_adem(train, validation, cfg, Execution::Sequential)?;
    let triples: Vec<EmbeddingTriple> = test.iter().map(|e| e.triple.clone()).collect();
    let pred = predict(&trained.params, &triples, Execution::Sequential)?;
    let human: Vec<f64> = test.iter().map(|e| e.human_score).collect();
    correlate(&pred, &human)
}

/// Context ids in order of first appearance.
fn context_order(data: &[AdemExample]) -> Vec<&str> {
    let mut seen = HashSet::new();
    data.iter()
        .map(|e| e.context_id.as_str())
        .filter(|c| seen.insert(*c))
        .collect()
}

/// A random `fraction` of the contexts, keeping all their examples in the
/// original order. Shuffles are nested: a smaller fraction under the same
/// seed is a subset of a larger one.
pub fn context_subset(data: &[AdemExample], fraction: f64, seed: u64) -> Result<Vec<AdemExample>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fraction {fraction} outside (0, 1]"
        )));
    }
    let mut contexts = context_order(data);
    let k = (fraction * contexts.len() as f64).round() as usize;
    if k == 0 {
        return Err(Error::InvalidArgument(format!(
            "fraction {fraction} of {} contexts selects none",
            contexts.len()
        )));
    }
    if k < contexts.len() {
        contexts.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let keep: HashSet<&str> = contexts[..k].iter().copied().collect();
    Ok(data
        .iter()
        .filter(|e| keep.contains(e.context_id.as_str()))
        .cloned()
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fraction: f64,
    pub n_contexts: usize,
    pub n_train: usize,
    /// Test correlations averaged over seeds.
    pub test: CorrPair,
}

/// Trains one model per (fraction, seed) and reports test correlations.
/// Seed `k` uses `cfg.seed + k` for both the subset and training.
pub fn data_efficiency_sweep(
    train: &[AdemExample],
    validation: &[AdemExample],
    test: &[AdemExample],
    fractions: &[f64],
    cfg: &TrainConfig,
    seeds: usize,
    exec: Execution,
) -> Result<Vec<SweepRow>> {
    if seeds == 0 {
        return Err(Error::InvalidArgument("sweep needs at least one seed".into()));
    }
    let mut jobs = Vec::new();
    for &f in fractions {
        for k in 0..seeds as u64 {
            let seed = cfg.seed.wrapping_add(k);
            jobs.push((f, seed, context_subset(train, f, seed)?));
        }
    }
    let results = par::try_map(exec, &jobs, |(_, seed, subset)| {
        let c = TrainConfig {
            seed: *seed,
            ..cfg.clone()
        };
        evaluate(subset, validation, test, &c)
    })?;
    Ok(fractions
        .iter()
        .enumerate()
        .map(|(i, &fraction)| {
            let subset = &jobs[i * seeds].2;
            SweepRow {
                fraction,
                n_contexts: context_order(subset).len(),
                n_train: subset.len(),
                test: mean_pair(&results[i * seeds..(i + 1) * seeds]),
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LooRow {
    /// `None` for the random control.
    pub held_out: Option<SourceModel>,
    pub n_train: usize,
    pub full_test: CorrPair,
    /// Test responses from the held-out source only; `None` when there are
    /// too few of them or their scores are constant.
    pub held_out_test: Option<CorrPair>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub rows: Vec<LooRow>,
    pub warnings: Vec<String>,
}

/// Drops every training example of `source`.
pub fn without_source(train: &[AdemExample], source: SourceModel) -> Vec<AdemExample> {
    train
        .iter()
        .filter(|e| e.source_model != source)
        .cloned()
        .collect()
}

/// One leave-one-out training set; `held_out` is `None` for the random
/// control.
#[derive(Clone, Debug, PartialEq)]
pub struct LooSplit {
    pub held_out: Option<SourceModel>,
    pub train: Vec<AdemExample>,
}

/// The training sets used by [`leave_one_out_eval`]: one per source seen in
/// any split that has training examples, then a random control of the same
/// size as the largest of them (drawn with `seed`, original order kept).
/// Also returns a warning for each skipped source.
pub fn loo_training_sets(
    train: &[AdemExample],
    validation: &[AdemExample],
    test: &[AdemExample],
    seed: u64,
) -> Result<(Vec<LooSplit>, Vec<String>)> {
    let sources: BTreeSet<SourceModel> = train
        .iter()
        .chain(validation)
        .chain(test)
        .map(|e| e.source_model)
        .collect();
    if sources.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "leave-one-out needs at least 2 source models, found {}",
            sources.len()
        )));
    }
    let mut counts: HashMap<SourceModel, usize> = HashMap::new();
    for e in train {
        *counts.entry(e.source_model).or_default() += 1;
    }
    let mut warnings = Vec::new();
    let mut splits = Vec::new();
    for s in &sources {
        if counts.get(s).copied().unwrap_or(0) == 0 {
            warnings.push(format!("skipping {s}: no training examples to hold out"));
            continue;
        }
        splits.push(LooSplit {
            held_out: Some(*s),
            train: without_source(train, *s),
        });
    }
    let matched = splits.iter().map(|j| j.train.len()).max().unwrap_or(0);
    if matched == 0 {
        return Err(Error::InvalidArgument(
            "every leave-one-out training set is empty".into(),
        ));
    }
    let mut idx: Vec<usize> = (0..train.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(matched);
    idx.sort_unstable();
    splits.push(LooSplit {
        held_out: None,
        train: idx.iter().map(|&i| train[i].clone()).collect(),
    });
    Ok((splits, warnings))
}

/// Retrains on each of [`loo_training_sets`] and reports test correlations,
/// overall and on the held-out source's own test responses.
pub fn leave_one_out_eval(
    train: &[AdemExample],
    validation: &[AdemExample],
    test: &[AdemExample],
    cfg: &TrainConfig,
    exec: Execution,
) -> Result<LooReport> {
    let (jobs, warnings) = loo_training_sets(train, validation, test, cfg.seed)?;
    let human_full: Vec<f64> = test.iter().map(|e| e.human_score).collect();
    let rows = par::try_map(exec, &jobs, |LooSplit { held_out: held, train: subset }| {
        let trained = train_adem(subset, validation, cfg, Execution::Sequential)?;
        let triples: Vec<EmbeddingTriple> = test.iter().map(|e| e.triple.clone()).collect();
        let pred = predict(&trained.params, &triples, Execution::Sequential)?;
        let full_test = correlate(&pred, &human_full)?;
        let held_out_test = held.and_then(|s| {
            let (p, h): (Vec<f64>, Vec<f64>) = test
                .iter()
                .zip(&pred)
                .filter(|(e, _)| e.source_model == s)
                .map(|(e, p)| (*p, e.human_score))
                .unzip();
            correlate(&p, &h).ok()
        });
        Ok(LooRow {
            held_out: *held,
            n_train: subset.len(),
            full_test,
            held_out_test,
        })
    })?;
    Ok(LooReport { rows, warnings })
}
