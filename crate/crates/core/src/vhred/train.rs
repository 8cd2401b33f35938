use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gaussian::{anneal_weight, AnnealSchedule};
use super::model::{Dialogue, DialogueDraws, ElboTerms, Vhred, VhredConfig};
use crate::optim::{Adam, AdamConfig, Parameters};
use crate::{par, Error, Execution, Result};

/// Gradients are accumulated in this many fixed groups, independent of the
/// thread count, and summed in order; results do not depend on scheduling.
const GRAD_GROUPS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub model: VhredConfig,
    pub batches: u64,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    pub anneal: AnnealSchedule,
    pub seed: u64,
}

impl PretrainConfig {
    pub fn desk(vocab_size: usize) -> Self {
        PretrainConfig {
            model: VhredConfig::desk(vocab_size),
            batches: 2000,
            batch_size: 16,
            adam: AdamConfig::with_lr(2e-3),
            clip_norm: 5.0,
            anneal: AnnealSchedule::desk(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::InvalidArgument("clip norm must be positive".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        AnnealSchedule::new(self.anneal.total_batches)?;
        Ok(())
    }

    /// Parameters before the first update.
    pub fn init_model(&self) -> Result<Vhred> {
        Vhred::new(self.model, &mut ChaCha8Rng::seed_from_u64(self.seed))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainLogRow {
    pub batch: u64,
    pub recon: f64,
    pub kl: f64,
    pub anneal_w: f64,
    pub objective: f64,
}

impl PretrainLogRow {
    pub const CSV_HEADER: &'static str = "batch,recon,kl,anneal_w,objective";

    pub fn to_csv(rows: &[PretrainLogRow]) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in rows {
            // `{:?}` prints the shortest round-tripping form
            let _ = writeln!(s, "{},{:?},{:?},{:?},{:?}", r.batch, r.recon, r.kl, r.anneal_w, r.objective);
        }
        s
    }

    pub fn write_csv(rows: &[PretrainLogRow], path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, Self::to_csv(rows)).map_err(|e| Error::io(path, e))
    }
}

fn draws_for(model: &Vhred, batch: &[Dialogue], seed: u64) -> Vec<DialogueDraws> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    batch
        .iter()
        .map(|d| {
            DialogueDraws::sample(d, model.config.latent_dim, model.config.word_dropout, &mut rng)
        })
        .collect()
}

fn check_batch(batch: &[Dialogue]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    Ok(())
}

/// ELBO summed over a batch. Noise and dropout masks come from `seed`.
pub fn elbo_batch(
    model: &Vhred,
    batch: &[Dialogue],
    anneal_w: f64,
    seed: u64,
    exec: Execution,
) -> Result<ElboTerms> {
    check_batch(batch)?;
    let draws = draws_for(model, batch, seed);
    let items: Vec<(&Dialogue, &DialogueDraws)> = batch.iter().zip(&draws).collect();
    let per = par::try_map(exec, &items, |(d, dr)| model.dialogue_elbo(d, dr, anneal_w))?;
    let mut total = ElboTerms::default();
    per.iter().for_each(|t| total.add(t));
    Ok(total)
}

/// Like [`elbo_batch`], also returning the gradient of `-objective`.
pub fn elbo_batch_with_grads(
    model: &Vhred,
    batch: &[Dialogue],
    anneal_w: f64,
    seed: u64,
    exec: Execution,
) -> Result<(ElboTerms, Vhred)> {
    check_batch(batch)?;
    let draws = draws_for(model, batch, seed);
    let items: Vec<(&Dialogue, &DialogueDraws)> = batch.iter().zip(&draws).collect();
    let group = items.len().div_ceil(GRAD_GROUPS);
    let groups: Vec<&[(&Dialogue, &DialogueDraws)]> = items.chunks(group).collect();
    let parts = par::try_map(exec, &groups, |g| -> Result<(Vec<ElboTerms>, Vhred)> {
        let mut grads = model.zeros_like();
        let terms = g
            .iter()
            .map(|(d, dr)| model.dialogue_elbo_grad(d, dr, anneal_w, &mut grads))
            .collect::<Result<Vec<_>>>()?;
        Ok((terms, grads))
    })?;
    let mut total = ElboTerms::default();
    let mut grads = model.zeros_like();
    for (terms, g) in &parts {
        terms.iter().for_each(|t| total.add(t));
        grads.add_scaled(1.0, g);
    }
    Ok((total, grads))
}

/// Minibatch Adam ascent on the annealed ELBO. Returns the trained model
/// (its `encoder` is the pre-trained dialogue encoder) and one log row per
/// batch, measured before that batch's update.
pub fn pretrain_vhred(
    corpus: &[Dialogue],
    cfg: &PretrainConfig,
    exec: Execution,
) -> Result<(Vhred, Vec<PretrainLogRow>)> {
    cfg.validate()?;
    let usable: Vec<&Dialogue> = corpus.iter().filter(|d| d.utterances.len() >= 2).collect();
    if usable.is_empty() {
        return Err(Error::InvalidArgument(
            "no dialogue with at least two utterances to pre-train on".into(),
        ));
    }
    let mut model = cfg.init_model()?;
    let mut adam = Adam::new(cfg.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..usable.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut log = Vec::with_capacity(cfg.batches as usize);

    for b in 0..cfg.batches {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size.min(usable.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(usable[order[cursor]].clone());
            cursor += 1;
        }
        let w = anneal_weight(b, cfg.anneal);
        let seed: u64 = rng.random();
        let (terms, mut grads) = elbo_batch_with_grads(&model, &batch, w, seed, exec)?;
        if !(terms.objective.is_finite() && grads.all_finite()) {
            return Err(Error::NonFinite(format!("ELBO or its gradient at batch {b}")));
        }
        debug_assert!(terms.objective <= terms.recon);
        let norm = grads.global_norm();
        if norm > cfg.clip_norm {
            grads.scale(cfg.clip_norm / norm);
        }
        adam.step(&mut model, &grads);
        log.push(PretrainLogRow {
            batch: b,
            recon: terms.recon,
            kl: terms.kl,
            anneal_w: w,
            objective: terms.objective,
        });
    }
    if !model.all_finite() {
        return Err(Error::NonFinite("VHRED parameters after training".into()));
    }
    Ok((model, log))
}
