//! Word-overlap baselines: BLEU-N, ROUGE-L and METEOR.
//!
//! All scorers are generic over the token type where the formula allows;
//! METEOR needs string tokens for its stemming stage.

mod batch;
mod bleu;
mod meteor;
mod ngram;
mod rouge;

pub use batch::{score_overlap, OverlapScores, OVERLAP_METRICS};
pub use bleu::{bleu_n, corpus_bleu, BleuConfig, BleuStats, Smoothing, SMOOTHING_EPSILON};
pub use meteor::{align, meteor, stem, Alignment, MatchStage, MeteorConfig};
pub use ngram::NGramCounts;
pub use rouge::{lcs_len, rouge_l, RougeConfig};
