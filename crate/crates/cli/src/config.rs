use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use dialeval::adem::{LengthBins, TrainConfig};
use dialeval::analytics::{EvalConfig, DEFAULT_FRACTIONS};
use dialeval::encoder::EncoderConfig;
use dialeval::optim::AdamConfig;
use dialeval::synth::{EmbeddingSynthConfig, ScoreModel, TextSynthConfig};
use dialeval::vhred::{AnnealSchedule, PretrainConfig, VhredConfig};

/// Everything a run can be configured with. Every section and key is
/// optional in the file; missing ones take the defaults below.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub synth: SynthSection,
    pub prepare: PrepareSection,
    pub pretrain: PretrainSection,
    pub adem: AdemSection,
    pub eval: EvalSection,
    pub sweep: SweepSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Seeds every random choice of every command.
    pub seed: u64,
    /// Use the rayon thread pool for batch work. Results do not depend on it.
    pub parallel: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            parallel: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    /// Scored text dialogues for the full pipeline.
    Text,
    /// Embedded triples whose score is affine in `cᵀr̂ + rᵀr̂`.
    Realizable,
    /// Embedded triples with scores independent of the embeddings.
    Independent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub kind: SynthKind,
    /// Text: number of contexts.
    pub contexts: usize,
    /// Responses per context; sources cycle TFIDF, DE, HRED, HUMAN.
    pub responses_per_context: usize,
    /// Text: noise on the latent quality before rounding to a score.
    pub text_noise_sd: f64,
    /// Embedded: vector dimension.
    pub dim: usize,
    pub train_examples: usize,
    pub validation_examples: usize,
    pub test_examples: usize,
    /// Embedded: additive score noise.
    pub embedding_noise_sd: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let t = TextSynthConfig::default();
        let e = EmbeddingSynthConfig::default();
        SynthSection {
            kind: SynthKind::Text,
            contexts: t.contexts,
            responses_per_context: t.responses_per_context,
            text_noise_sd: t.noise_sd,
            dim: e.dim,
            train_examples: e.train_examples,
            validation_examples: e.validation_examples,
            test_examples: e.test_examples,
            embedding_noise_sd: e.noise_sd,
        }
    }
}

impl SynthSection {
    pub fn text(&self, seed: u64) -> TextSynthConfig {
        TextSynthConfig {
            contexts: self.contexts,
            responses_per_context: self.responses_per_context,
            noise_sd: self.text_noise_sd,
            seed,
        }
    }

    pub fn embeddings(&self, seed: u64) -> EmbeddingSynthConfig {
        EmbeddingSynthConfig {
            dim: self.dim,
            responses_per_context: self.responses_per_context,
            train_examples: self.train_examples,
            validation_examples: self.validation_examples,
            test_examples: self.test_examples,
            noise_sd: self.embedding_noise_sd,
            score_model: match self.kind {
                SynthKind::Independent => ScoreModel::Independent,
                _ => ScoreModel::Realizable,
            },
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepareSection {
    /// Train, validation and test shares of the contexts.
    pub split: [f64; 3],
    pub bpe_merges: usize,
    /// Including the reserved symbols.
    pub vocab_size: usize,
    pub keep_speaker_tokens: bool,
}

impl Default for PrepareSection {
    fn default() -> Self {
        PrepareSection {
            split: [0.7, 0.15, 0.15],
            bpe_merges: 5000,
            vocab_size: 20000,
            keep_speaker_tokens: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainSection {
    pub embed_dim: usize,
    pub utterance_hidden: usize,
    pub context_hidden: usize,
    pub layer_norm: bool,
    pub latent_dim: usize,
    pub mlp_hidden: usize,
    pub decoder_hidden: usize,
    pub word_dropout: f64,
    pub batches: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: f64,
    /// Batches over which the KL weight ramps from 0 to 1.
    pub anneal_batches: u64,
}

impl Default for PretrainSection {
    fn default() -> Self {
        // vocab size is filled in from the prepared vocabulary
        let p = PretrainConfig::desk(0);
        let m = p.model;
        PretrainSection {
            embed_dim: m.encoder.embed_dim,
            utterance_hidden: m.encoder.utterance_hidden,
            context_hidden: m.encoder.context_hidden,
            layer_norm: m.encoder.layer_norm,
            latent_dim: m.latent_dim,
            mlp_hidden: m.mlp_hidden,
            decoder_hidden: m.decoder_hidden,
            word_dropout: m.word_dropout,
            batches: p.batches,
            batch_size: p.batch_size,
            lr: p.adam.lr,
            clip_norm: p.clip_norm,
            anneal_batches: p.anneal.total_batches,
        }
    }
}

impl PretrainSection {
    pub fn to_config(&self, vocab_size: usize, seed: u64) -> PretrainConfig {
        PretrainConfig {
            model: VhredConfig {
                encoder: EncoderConfig {
                    vocab_size,
                    embed_dim: self.embed_dim,
                    utterance_hidden: self.utterance_hidden,
                    context_hidden: self.context_hidden,
                    layer_norm: self.layer_norm,
                },
                latent_dim: self.latent_dim,
                mlp_hidden: self.mlp_hidden,
                decoder_hidden: self.decoder_hidden,
                word_dropout: self.word_dropout,
            },
            batches: self.batches,
            batch_size: self.batch_size,
            adam: AdamConfig::with_lr(self.lr),
            clip_norm: self.clip_norm,
            anneal: AnnealSchedule {
                total_batches: self.anneal_batches,
            },
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdemSection {
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub pca_dim: usize,
    pub subsample: bool,
    pub length_bins: Vec<usize>,
}

impl Default for AdemSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        AdemSection {
            gamma: t.gamma,
            lr: t.lr,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            pca_dim: t.pca_dim,
            subsample: t.subsample,
            length_bins: t.length_bins.lower_edges,
        }
    }
}

impl AdemSection {
    pub fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            gamma: self.gamma,
            lr: self.lr,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
            pca_dim: self.pca_dim,
            subsample: self.subsample,
            length_bins: LengthBins {
                lower_edges: self.length_bins.clone(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub delta_w_threshold: usize,
    pub failure_high: f64,
    pub failure_low: f64,
    pub failure_overlap: [String; 2],
    pub adem_column: String,
    pub jitter_sd: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        let e = EvalConfig::default();
        EvalSection {
            delta_w_threshold: e.delta_w_threshold,
            failure_high: e.failure_high,
            failure_low: e.failure_low,
            failure_overlap: e.failure_overlap,
            adem_column: e.adem_column,
            jitter_sd: e.jitter_sd,
        }
    }
}

impl EvalSection {
    pub fn to_config(&self, seed: u64) -> EvalConfig {
        EvalConfig {
            delta_w_threshold: self.delta_w_threshold,
            failure_high: self.failure_high,
            failure_low: self.failure_low,
            failure_overlap: self.failure_overlap.clone(),
            adem_column: self.adem_column.clone(),
            jitter_sd: self.jitter_sd,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Shares of the training contexts to train on.
    pub fractions: Vec<f64>,
    /// Repetitions per fraction, seeded `seed`, `seed + 1`, ...
    pub seeds: usize,
    pub leave_one_out: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            fractions: DEFAULT_FRACTIONS.to_vec(),
            seeds: 3,
            leave_one_out: true,
        }
    }
}

impl RunConfig {
    /// Defaults overlaid with `path`, if given.
    pub fn from_file(path: Option<&Path>) -> Result<Self, String> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// Every problem with the configuration, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let s = &self.synth;
        if s.contexts == 0 {
            v.push("synth.contexts must be positive".into());
        }
        if s.responses_per_context == 0 {
            v.push("synth.responses_per_context must be positive".into());
        }
        if s.dim == 0 {
            v.push("synth.dim must be positive".into());
        }
        for (name, n) in [
            ("train_examples", s.train_examples),
            ("validation_examples", s.validation_examples),
            ("test_examples", s.test_examples),
        ] {
            if n == 0 {
                v.push(format!("synth.{name} must be positive"));
            }
        }
        for (name, x) in [
            ("text_noise_sd", s.text_noise_sd),
            ("embedding_noise_sd", s.embedding_noise_sd),
        ] {
            if !(x.is_finite() && x >= 0.0) {
                v.push(format!("synth.{name} must be finite and >= 0, got {x}"));
            }
        }

        let p = &self.prepare;
        if p.split.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            v.push(format!("prepare.split entries must be positive, got {:?}", p.split));
        } else if (p.split.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            v.push(format!("prepare.split must sum to 1, got {:?}", p.split));
        }
        if p.vocab_size <= dialeval::corpus::RESERVED.len() {
            v.push(format!(
                "prepare.vocab_size must exceed the {} reserved symbols",
                dialeval::corpus::RESERVED.len()
            ));
        }

        let t = &self.pretrain;
        for (name, n) in [
            ("embed_dim", t.embed_dim),
            ("utterance_hidden", t.utterance_hidden),
            ("context_hidden", t.context_hidden),
            ("latent_dim", t.latent_dim),
            ("mlp_hidden", t.mlp_hidden),
            ("decoder_hidden", t.decoder_hidden),
            ("batch_size", t.batch_size),
        ] {
            if n == 0 {
                v.push(format!("pretrain.{name} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&t.word_dropout) {
            v.push(format!("pretrain.word_dropout must be in [0, 1), got {}", t.word_dropout));
        }
        if !(t.lr.is_finite() && t.lr > 0.0) {
            v.push(format!("pretrain.lr must be positive, got {}", t.lr));
        }
        if !(t.clip_norm > 0.0) {
            v.push(format!("pretrain.clip_norm must be positive, got {}", t.clip_norm));
        }
        if t.anneal_batches == 0 {
            v.push("pretrain.anneal_batches must be positive".into());
        }

        for msg in self.adem.to_config(self.run.seed).violations() {
            v.push(format!("adem: {msg}"));
        }

        let e = &self.eval;
        if !(e.failure_low < e.failure_high) {
            v.push(format!(
                "eval.failure_low ({}) must be below eval.failure_high ({})",
                e.failure_low, e.failure_high
            ));
        }
        if !(e.jitter_sd.is_finite() && e.jitter_sd >= 0.0) {
            v.push(format!("eval.jitter_sd must be finite and >= 0, got {}", e.jitter_sd));
        }

        let w = &self.sweep;
        if w.fractions.is_empty() {
            v.push("sweep.fractions must not be empty".into());
        }
        for f in &w.fractions {
            if !(*f > 0.0 && *f <= 1.0) {
                v.push(format!("sweep.fractions entry {f} outside (0, 1]"));
            }
        }
        if w.seeds == 0 {
            v.push("sweep.seeds must be positive".into());
        }
        v
    }
}
