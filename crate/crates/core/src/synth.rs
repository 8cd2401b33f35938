//! Seeded synthetic data: embedded triples with known score structure,
//! length-biased score samples, scored text dialogues, and small
//! tokenized dialogue corpora.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::adem::{AdemExample, LengthBins, LengthScored};
use crate::corpus::{Context, EvalExample, SourceModel, Utterance, EOU, RESERVED};
use crate::encoder::EmbeddingTriple;
use crate::vhred::Dialogue;
use crate::{Error, Result};

const SOURCES: [SourceModel; 4] = [
    SourceModel::Tfidf,
    SourceModel::De,
    SourceModel::Hred,
    SourceModel::Human,
];

/// How human scores relate to the embeddings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreModel {
    /// `a + b (cᵀr̂ + rᵀr̂) + noise`, clipped to `[1, 5]`.
    Realizable,
    /// Uniform on `[1, 5]`, independent of the embeddings.
    Independent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingSynthConfig {
    pub dim: usize,
    /// Responses per context; each gets a different source in turn.
    pub responses_per_context: usize,
    pub train_examples: usize,
    pub validation_examples: usize,
    pub test_examples: usize,
    /// Standard deviation of the additive score noise.
    pub noise_sd: f64,
    pub score_model: ScoreModel,
    pub seed: u64,
}

impl Default for EmbeddingSynthConfig {
    fn default() -> Self {
        EmbeddingSynthConfig {
            dim: 50,
            responses_per_context: 4,
            train_examples: 2000,
            validation_examples: 400,
            test_examples: 400,
            noise_sd: 0.1,
            score_model: ScoreModel::Realizable,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSplits {
    pub train: Vec<AdemExample>,
    pub validation: Vec<AdemExample>,
    pub test: Vec<AdemExample>,
}

/// Offset and slope of the realizable score map. Entries of every vector
/// have variance `1/√d`, so each dot product has unit variance and the raw
/// signal has standard deviation √2.
const SCORE_OFFSET: f64 = 3.0;
const SCORE_SLOPE: f64 = 0.6;

/// Context-disjoint embedded splits. Contexts are never shared across
/// splits; ids encode the split (`train-00012`).
pub fn synth_embeddings(cfg: &EmbeddingSynthConfig) -> Result<EmbeddingSplits> {
    if cfg.dim == 0 || cfg.responses_per_context == 0 {
        return Err(Error::InvalidArgument(
            "synthetic embeddings need dim and responses_per_context >= 1".into(),
        ));
    }
    if !(cfg.noise_sd >= 0.0 && cfg.noise_sd.is_finite()) {
        return Err(Error::InvalidArgument("noise_sd must be finite and >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sd = (cfg.dim as f64).powf(-0.25);
    let noise = Normal::new(0.0, cfg.noise_sd.max(f64::MIN_POSITIVE)).expect("valid sd");
    let split = |name: &str, count: usize, rng: &mut ChaCha8Rng| -> Result<Vec<AdemExample>> {
        let mut out = Vec::with_capacity(count);
        let mut ctx = 0;
        while out.len() < count {
            let vec = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..cfg.dim)
                    .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            };
            let c = vec(rng);
            let r = vec(rng);
            let reference_len = rng.random_range(1..=20);
            for k in 0..cfg.responses_per_context.min(count - out.len()) {
                let r_hat = vec(rng);
                let raw = crate::linalg::dot(&c, &r_hat) + crate::linalg::dot(&r, &r_hat);
                let eps = if cfg.noise_sd > 0.0 { noise.sample(rng) } else { 0.0 };
                let uniform: f64 = rng.random_range(1.0..=5.0);
                let human = match cfg.score_model {
                    ScoreModel::Realizable => (SCORE_OFFSET + SCORE_SLOPE * raw + eps).clamp(1.0, 5.0),
                    ScoreModel::Independent => uniform,
                };
                out.push(AdemExample {
                    context_id: format!("{name}-{ctx:05}"),
                    source_model: SOURCES[k % SOURCES.len()],
                    human_score: human,
                    response_len: rng.random_range(1..=25),
                    reference_len,
                    triple: EmbeddingTriple::new(c.clone(), r.clone(), r_hat)?,
                });
            }
            ctx += 1;
        }
        Ok(out)
    };
    Ok(EmbeddingSplits {
        train: split("train", cfg.train_examples, &mut rng)?,
        validation: split("val", cfg.validation_examples, &mut rng)?,
        test: split("test", cfg.test_examples, &mut rng)?,
    })
}

/// A bare (score, length) pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LengthSample {
    pub human_score: f64,
    pub response_len: usize,
}

impl LengthScored for LengthSample {
    fn human_score(&self) -> f64 {
        self.human_score
    }

    fn response_len(&self) -> usize {
        self.response_len
    }
}

/// Longest length generated in the open-ended last bin.
const MAX_LEN: usize = 30;

fn bin_ranges(bins: &LengthBins) -> Vec<(usize, usize)> {
    let e = &bins.lower_edges;
    (0..e.len())
        .map(|b| {
            let hi = e.get(b + 1).map_or(MAX_LEN.max(e[b]), |n| n - 1);
            (e[b], hi)
        })
        .collect()
}

fn bin_probs(kappa: f64, score: f64, nbins: usize) -> Vec<f64> {
    let mid = (nbins as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..nbins)
        .map(|b| (kappa * (b as f64 - mid) * (score - 3.0)).exp())
        .collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Population correlation between score and length for a given `kappa`.
fn expected_corr(kappa: f64, ranges: &[(usize, usize)]) -> f64 {
    let scores = [1.0, 2.0, 3.0, 4.0, 5.0];
    let (mut es, mut es2, mut el, mut el2, mut esl) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for s in scores {
        let p = bin_probs(kappa, s, ranges.len());
        let (mut m1, mut m2) = (0.0, 0.0);
        for (pb, &(lo, hi)) in p.iter().zip(ranges) {
            let k = (hi - lo + 1) as f64;
            let mean = (lo + hi) as f64 / 2.0;
            let var = (k * k - 1.0) / 12.0;
            m1 += pb * mean;
            m2 += pb * (var + mean * mean);
        }
        es += s / 5.0;
        es2 += s * s / 5.0;
        el += m1 / 5.0;
        el2 += m2 / 5.0;
        esl += s * m1 / 5.0;
    }
    (esl - es * el) / ((es2 - es * es).sqrt() * (el2 - el * el).sqrt())
}

/// Integer scores 1–5, uniformly; the length bin is drawn with weights
/// tilted by the score and the length is uniform within the bin. The tilt
/// is solved so the population correlation equals `target`.
pub fn length_correlated_samples(
    count: usize,
    target: f64,
    bins: &LengthBins,
    seed: u64,
) -> Result<Vec<LengthSample>> {
    bins.validate()?;
    if !(0.0..0.9).contains(&target) {
        return Err(Error::InvalidArgument(format!(
            "target correlation {target} outside [0, 0.9)"
        )));
    }
    let ranges = bin_ranges(bins);
    let (mut lo, mut hi) = (0.0, 20.0);
    if expected_corr(hi, &ranges) < target {
        return Err(Error::InvalidArgument(format!(
            "correlation {target} is not reachable with these bins"
        )));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if expected_corr(mid, &ranges) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let kappa = 0.5 * (lo + hi);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let s = rng.random_range(1..=5) as f64;
            let p = bin_probs(kappa, s, ranges.len());
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut b = ranges.len() - 1;
            for (k, pk) in p.iter().enumerate() {
                acc += pk;
                if u < acc {
                    b = k;
                    break;
                }
            }
            let (l, h) = ranges[b];
            LengthSample {
                human_score: s,
                response_len: rng.random_range(l..=h),
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextSynthConfig {
    pub contexts: usize,
    pub responses_per_context: usize,
    /// Standard deviation of the noise added to the latent quality score.
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for TextSynthConfig {
    fn default() -> Self {
        TextSynthConfig {
            contexts: 1026,
            responses_per_context: 4,
            noise_sd: 0.5,
            seed: 0,
        }
    }
}

const SYLLABLES: [&str; 16] = [
    "ba", "ko", "mi", "tu", "re", "sa", "lo", "ni", "pe", "da", "vu", "gi", "ha", "zo", "fe", "ru",
];
const TOPICS: usize = 12;
const TOPIC_WORDS: usize = 15;
const COMMON_WORDS: usize = 20;

fn lexicon() -> Vec<String> {
    let mut words = Vec::new();
    for a in SYLLABLES {
        for b in SYLLABLES {
            words.push(format!("{a}{b}"));
        }
    }
    words
}

/// Mean fraction of on-topic words per source.
fn source_quality(s: SourceModel) -> f64 {
    match s {
        SourceModel::Human => 0.8,
        SourceModel::Hred => 0.55,
        SourceModel::De => 0.45,
        _ => 0.3,
    }
}

/// Scored text examples. Each context has a topic; a response's quality is
/// the fraction of its words drawn from that topic, which varies by source,
/// and the integer human score is `1 + 4·quality` plus noise, rounded and
/// clipped.
pub fn synth_text_dataset(cfg: &TextSynthConfig) -> Result<Vec<EvalExample>> {
    if cfg.contexts == 0 || cfg.responses_per_context == 0 {
        return Err(Error::InvalidArgument(
            "synthetic text needs at least one context and response".into(),
        ));
    }
    let words = lexicon();
    let common = &words[..COMMON_WORDS];
    let topics: Vec<&[String]> = (0..TOPICS)
        .map(|t| &words[COMMON_WORDS + t * TOPIC_WORDS..COMMON_WORDS + (t + 1) * TOPIC_WORDS])
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sd.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidArgument(format!("noise_sd: {e}")))?;
    let sentence = |rng: &mut ChaCha8Rng, topic: &[String], q: f64, len: usize| -> String {
        (0..len)
            .map(|_| {
                let pool = if rng.random::<f64>() < q { topic } else { common };
                pool.choose(rng).expect("non-empty pool").as_str()
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut out = Vec::with_capacity(cfg.contexts * cfg.responses_per_context);
    for c in 0..cfg.contexts {
        let topic = topics[rng.random_range(0..TOPICS)];
        let n_utt = rng.random_range(1..=4);
        let utterances: Vec<Utterance> = (0..n_utt)
            .map(|_| {
                let len = rng.random_range(3..=10);
                Utterance::new(sentence(&mut rng, topic, 0.7, len))
            })
            .collect();
        let ref_len = rng.random_range(3..=15);
        let reference = sentence(&mut rng, topic, 0.8, ref_len);
        for k in 0..cfg.responses_per_context {
            let source = SOURCES[k % SOURCES.len()];
            let q = (source_quality(source) + rng.random_range(-0.25..0.25)).clamp(0.0, 1.0);
            let len = rng.random_range(1..=20);
            let response = sentence(&mut rng, topic, q, len);
            let eps = if cfg.noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let human = (1.0 + 4.0 * q + eps).round().clamp(1.0, 5.0);
            out.push(EvalExample {
                context: Context {
                    context_id: format!("ctx-{c:05}"),
                    utterances: utterances.clone(),
                },
                model_response: Utterance::new(response),
                reference_response: Utterance::new(reference.clone()),
                human_score: human,
                source_model: source,
            });
        }
    }
    Ok(out)
}

/// `count` tokenized dialogues of 2–4 utterances over ids
/// `RESERVED.len()..vocab_size`, each utterance ending in end-of-utterance.
pub fn toy_dialogues(count: usize, vocab_size: usize, seed: u64) -> Result<Vec<Dialogue>> {
    if vocab_size <= RESERVED.len() {
        return Err(Error::InvalidArgument(format!(
            "vocabulary of {vocab_size} has no room beyond the reserved ids"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = RESERVED.len() as u32;
    Ok((0..count)
        .map(|_| {
            let n = rng.random_range(2..=4);
            Dialogue::new(
                (0..n)
                    .map(|_| {
                        let len = rng.random_range(2..=5);
                        let mut u: Vec<u32> = (0..len)
                            .map(|_| rng.random_range(lo..vocab_size as u32))
                            .collect();
                        u.push(EOU);
                        u
                    })
                    .collect(),
            )
        })
        .collect())
}
