use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{accumulate_data_grad, adem_loss, adem_score, init_alpha_beta, AdemExample, AdemParams};
use super::pca::PcaProjection;
use super::subsample::{subsample_by_length, LengthBins};
use crate::analytics::{pearson, spearman};
use crate::encoder::{EmbeddingTriple, TensorFile};
use crate::linalg::Mat;
use crate::optim::{Adam, AdamConfig, Parameters};
use crate::{par, Error, Execution, Result};

/// Minibatch gradients are computed in this many fixed groups and summed
/// in order, so the result does not depend on thread scheduling.
const GRAD_GROUPS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// L2 coefficient on `‖M‖²_F + ‖N‖²_F`.
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a better validation Pearson before stopping.
    pub patience: usize,
    pub seed: u64,
    pub pca_dim: usize,
    /// Over-sample length bins within each score level before training.
    pub subsample: bool,
    pub length_bins: LengthBins,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.075,
            lr: 0.01,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            pca_dim: 50,
            subsample: true,
            length_bins: LengthBins::default(),
        }
    }
}

impl TrainConfig {
    /// Every violated constraint, one message each.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            v.push(format!("gamma must be a finite value >= 0, got {}", self.gamma));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            v.push(format!("lr must be > 0, got {}", self.lr));
        }
        if self.batch_size == 0 {
            v.push("batch_size must be at least 1".into());
        }
        if self.max_epochs == 0 {
            v.push("max_epochs must be at least 1".into());
        }
        if self.pca_dim == 0 {
            v.push("pca_dim must be at least 1".into());
        }
        if let Err(e) = self.length_bins.validate() {
            v.push(e.to_string());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(v.join("; ")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Full regularized objective over the training set.
    pub train_loss: f64,
    pub val_pearson: f64,
    pub val_spearman: f64,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_pearson,val_spearman";

    pub fn to_csv(rows: &[EpochLog]) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in rows {
            let _ = writeln!(
                s,
                "{},{:?},{:?},{:?}",
                r.epoch, r.train_loss, r.val_pearson, r.val_spearman
            );
        }
        s
    }

    pub fn write_csv(rows: &[EpochLog], path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, Self::to_csv(rows)).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug)]
pub struct AdemTraining {
    /// Parameters from the epoch with the best validation Pearson.
    pub params: AdemParams,
    /// Row 0 is the calibrated, untrained model.
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    /// Training examples after length sub-sampling.
    pub train_size: usize,
}

/// Scores are unclipped.
pub fn predict(params: &AdemParams, triples: &[EmbeddingTriple], exec: Execution) -> Result<Vec<f64>> {
    par::try_map(exec, triples, |t| adem_score(params, t))
}

fn correlations(params: &AdemParams, data: &[AdemExample], exec: Execution) -> Result<(f64, f64)> {
    let triples: Vec<&EmbeddingTriple> = data.iter().map(|e| &e.triple).collect();
    let preds = par::try_map(exec, &triples, |t| adem_score(params, t))?;
    let human: Vec<f64> = data.iter().map(|e| e.human_score).collect();
    // constant predictions leave the correlation undefined
    let p = pearson(&preds, &human).map_or(f64::NAN, |c| c.coefficient);
    let s = spearman(&preds, &human).map_or(f64::NAN, |c| c.coefficient);
    Ok((p, s))
}

fn full_loss(params: &AdemParams, data: &[AdemExample], gamma: f64) -> Result<f64> {
    let batch: Vec<(&EmbeddingTriple, f64)> = data.iter().map(|e| (&e.triple, e.human_score)).collect();
    adem_loss(params, &batch, gamma)
}

fn check_dims(data: &[AdemExample], n: usize, what: &'static str) -> Result<()> {
    for e in data {
        if e.triple.dim() != n {
            return Err(Error::dim(what, n, e.triple.dim()));
        }
    }
    Ok(())
}

/// Trains `M` and `N` with minibatch Adam on projected triples, keeping
/// the parameters of the best validation epoch.
pub fn train_adem(
    train: &[AdemExample],
    validation: &[AdemExample],
    cfg: &TrainConfig,
    exec: Execution,
) -> Result<AdemTraining> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty ADEM training set".into()));
    }
    if validation.is_empty() {
        return Err(Error::InvalidArgument("empty ADEM validation set".into()));
    }
    let n = train[0].triple.dim();
    check_dims(train, n, "training triple")?;
    check_dims(validation, n, "validation triple")?;

    let data = if cfg.subsample {
        subsample_by_length(train, &cfg.length_bins, cfg.seed)?
    } else {
        train.to_vec()
    };

    let mut params = AdemParams::identity(n);
    let raw = data
        .iter()
        .map(|e| params.raw_score(&e.triple))
        .collect::<Result<Vec<_>>>()?;
    let (alpha, beta) = init_alpha_beta(&raw)?;
    params.alpha = alpha;
    params.beta = beta;

    let (p0, s0) = correlations(&params, validation, exec)?;
    let mut log = vec![EpochLog {
        epoch: 0,
        train_loss: full_loss(&params, &data, cfg.gamma)?,
        val_pearson: p0,
        val_spearman: s0,
    }];
    let mut best = params.clone();
    let mut best_val = if p0.is_nan() { f64::NEG_INFINITY } else { p0 };
    let mut best_epoch = 0;
    let mut stale = 0;

    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<(&EmbeddingTriple, f64)> = idx
                .iter()
                .map(|&i| (&data[i].triple, data[i].human_score))
                .collect();
            let group = batch.len().div_ceil(GRAD_GROUPS);
            let groups: Vec<&[(&EmbeddingTriple, f64)]> = batch.chunks(group).collect();
            let parts = par::try_map(exec, &groups, |g| {
                let mut grads = params.zeros_like();
                accumulate_data_grad(&params, g, &mut grads)?;
                Ok(grads)
            })?;
            let mut grads = params.zeros_like();
            for g in &parts {
                grads.add_scaled(1.0, g);
            }
            grads.add_scaled(2.0 * cfg.gamma, &params);
            if !grads.all_finite() {
                return Err(Error::NonFinite(format!("ADEM gradient in epoch {epoch}")));
            }
            adam.step(&mut params, &grads);
        }
        let train_loss = full_loss(&params, &data, cfg.gamma)?;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite(format!("ADEM training loss in epoch {epoch}")));
        }
        let (p, s) = correlations(&params, validation, exec)?;
        log.push(EpochLog {
            epoch,
            train_loss,
            val_pearson: p,
            val_spearman: s,
        });
        if p > best_val {
            best_val = p;
            best = params.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(AdemTraining {
        params: best,
        log,
        best_epoch,
        train_size: data.len(),
    })
}

/// A trained scorer: projection plus bilinear parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdemModel {
    pub pca: PcaProjection,
    pub params: AdemParams,
    pub config: TrainConfig,
}

fn seed_parts(seed: u64) -> Vec<f64> {
    (0..4).map(|k| ((seed >> (16 * k)) & 0xffff) as f64).collect()
}

fn seed_from_parts(parts: &[f64]) -> Result<u64> {
    if parts.len() != 4 {
        return Err(Error::Checkpoint("seed tensor must hold four parts".into()));
    }
    Ok(parts
        .iter()
        .enumerate()
        .fold(0u64, |s, (k, p)| s | ((*p as u64) << (16 * k))))
}

impl AdemModel {
    /// Projects raw encoder triples and scores them, in input order.
    pub fn score_triples(&self, raw: &[EmbeddingTriple], exec: Execution) -> Result<Vec<f64>> {
        par::try_map(exec, raw, |t| {
            adem_score(&self.params, &self.pca.project_triple(t)?)
        })
    }

    pub fn to_tensor_file(&self) -> TensorFile {
        let mut f = TensorFile::default();
        let n = self.params.dim();
        f.push("adem.M", vec![n, n], self.params.m.data.clone());
        f.push("adem.N", vec![n, n], self.params.n.data.clone());
        f.push_scalar("adem.alpha", self.params.alpha);
        f.push_scalar("adem.beta", self.params.beta);
        self.pca.to_tensor_file("pca", &mut f);
        let c = &self.config;
        f.push_scalar("adem.config.gamma", c.gamma);
        f.push_scalar("adem.config.lr", c.lr);
        f.push_scalar("adem.config.batch_size", c.batch_size as f64);
        f.push_scalar("adem.config.max_epochs", c.max_epochs as f64);
        f.push_scalar("adem.config.patience", c.patience as f64);
        f.push("adem.config.seed", vec![4], seed_parts(c.seed));
        f.push_scalar("adem.config.pca_dim", c.pca_dim as f64);
        f.push_scalar("adem.config.subsample", if c.subsample { 1.0 } else { 0.0 });
        let edges: Vec<f64> = c.length_bins.lower_edges.iter().map(|&e| e as f64).collect();
        f.push("adem.config.length_bins", vec![edges.len()], edges);
        f
    }

    pub fn from_tensor_file(f: &TensorFile) -> Result<Self> {
        let m = f.get("adem.M")?;
        if m.shape.len() != 2 || m.shape[0] != m.shape[1] {
            return Err(Error::Checkpoint("adem.M must be square".into()));
        }
        let n = m.shape[0];
        let mat = |name: &str, rows: usize, cols: usize| -> Result<Mat> {
            let t = f.get(name)?;
            if t.shape != [rows, cols] {
                return Err(Error::Checkpoint(format!(
                    "{name} has shape {:?}, expected [{rows}, {cols}]",
                    t.shape
                )));
            }
            Ok(Mat {
                rows,
                cols,
                data: t.data.clone(),
            })
        };
        let params = AdemParams {
            m: mat("adem.M", n, n)?,
            n: mat("adem.N", n, n)?,
            alpha: f.scalar("adem.alpha")?,
            beta: f.scalar("adem.beta")?,
        };
        params.validate()?;
        let pca = PcaProjection::from_tensor_file("pca", f)?;
        if pca.output_dim() != n {
            return Err(Error::Checkpoint(format!(
                "projection has {} outputs but adem.M is {n}×{n}",
                pca.output_dim()
            )));
        }
        let config = TrainConfig {
            gamma: f.scalar("adem.config.gamma")?,
            lr: f.scalar("adem.config.lr")?,
            batch_size: f.usize("adem.config.batch_size")?,
            max_epochs: f.usize("adem.config.max_epochs")?,
            patience: f.usize("adem.config.patience")?,
            seed: seed_from_parts(&f.get("adem.config.seed")?.data)?,
            pca_dim: f.usize("adem.config.pca_dim")?,
            subsample: f.scalar("adem.config.subsample")? != 0.0,
            length_bins: LengthBins {
                lower_edges: f
                    .get("adem.config.length_bins")?
                    .data
                    .iter()
                    .map(|&e| e as usize)
                    .collect(),
            },
        };
        Ok(AdemModel { pca, params, config })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_tensor_file().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tensor_file(&TensorFile::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::adem::fit_pca;
    use crate::corpus::SourceModel;

    fn example(t: EmbeddingTriple, h: f64, len: usize) -> AdemExample {
        AdemExample {
            context_id: "c".into(),
            source_model: SourceModel::Hred,
            human_score: h,
            response_len: len,
            reference_len: len,
            triple: t,
        }
    }

    /// Scores produced by a random teacher `M*`, `N*`.
    fn teacher_data(count: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<AdemExample> {
        let mut m = Mat::zeros(n, n);
        let mut nn = Mat::zeros(n, n);
        m.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        nn.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        (0..count)
            .map(|_| {
                let mut v = || (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
                let t = EmbeddingTriple::new(v(), v(), v()).unwrap();
                let raw = m.bilinear(&t.context, &t.response) + nn.bilinear(&t.reference, &t.response);
                example(t, 3.0 + raw, 1 + rng.random_range(0..30))
            })
            .collect()
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            gamma: 0.0,
            lr: 0.02,
            max_epochs: 60,
            subsample: false,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn learns_a_random_teacher() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = teacher_data(900, 4, &mut rng);
        let (train, val) = data.split_at(700);
        let out = train_adem(train, val, &quick_cfg(), Execution::default()).unwrap();
        let best = out.log[out.best_epoch].val_pearson;
        assert!(best > 0.99, "{best}");
        assert!(best > out.log[0].val_pearson);
    }

    #[test]
    fn deterministic_across_runs_and_schedulers() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = teacher_data(200, 3, &mut rng);
        let (train, val) = data.split_at(150);
        let cfg = TrainConfig {
            max_epochs: 5,
            ..TrainConfig::default()
        };
        let a = train_adem(train, val, &cfg, Execution::Sequential).unwrap();
        let b = train_adem(train, val, &cfg, Execution::Parallel).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(EpochLog::to_csv(&a.log), EpochLog::to_csv(&b.log));
    }

    #[test]
    fn initial_predictions_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = teacher_data(50, 3, &mut rng);
        let cfg = TrainConfig {
            max_epochs: 1,
            subsample: false,
            ..TrainConfig::default()
        };
        let mut p = AdemParams::identity(3);
        let raw: Vec<f64> = data.iter().map(|e| p.raw_score(&e.triple).unwrap()).collect();
        (p.alpha, p.beta) = init_alpha_beta(&raw).unwrap();
        let triples: Vec<EmbeddingTriple> = data.iter().map(|e| e.triple.clone()).collect();
        let preds = predict(&p, &triples, Execution::default()).unwrap();
        assert!(preds.iter().all(|s| (1.0 - 1e-12..=5.0 + 1e-12).contains(s)));
        assert!(train_adem(&data, &[], &cfg, Execution::default()).is_err());
    }

    #[test]
    fn early_stopping_returns_best_epoch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = teacher_data(300, 3, &mut rng);
        let (train, val) = data.split_at(200);
        let cfg = TrainConfig {
            patience: 2,
            max_epochs: 200,
            lr: 0.05,
            ..quick_cfg()
        };
        let out = train_adem(train, val, &cfg, Execution::default()).unwrap();
        let best = out
            .log
            .iter()
            .map(|r| r.val_pearson)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.log[out.best_epoch].val_pearson, best);
        assert!(out.log.len() <= out.best_epoch + 1 + cfg.patience);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vecs: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let pca = fit_pca(&vecs, 3).unwrap();
        let mut params = AdemParams::identity(3);
        params.alpha = -0.25;
        params.beta = 0.5;
        let model = AdemModel {
            pca,
            params,
            config: TrainConfig {
                seed: 0xdead_beef_1234_5678,
                ..TrainConfig::default()
            },
        };
        let back = AdemModel::from_tensor_file(
            &TensorFile::from_bytes(&model.to_tensor_file().to_bytes()).unwrap(),
        )
        .unwrap();
        assert_eq!(back.config, model.config);
        assert_eq!(back, model);
    }
}
