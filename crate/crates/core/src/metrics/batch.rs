use super::{bleu_n, meteor, rouge_l, BleuConfig, MeteorConfig, RougeConfig};
use crate::corpus::{EvalExample, Normalizer};
use crate::par::{self, Execution};
use crate::Result;

/// Column names used in score files, in [`OverlapScores::values`] order.
pub const OVERLAP_METRICS: [&str; 6] = ["bleu1", "bleu2", "bleu3", "bleu4", "rouge_l", "meteor"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverlapScores {
    /// Smoothed sentence BLEU-1 .. BLEU-4.
    pub bleu: [f64; 4],
    pub rouge_l: f64,
    pub meteor: f64,
}

impl OverlapScores {
    pub fn values(&self) -> [f64; 6] {
        [
            self.bleu[0],
            self.bleu[1],
            self.bleu[2],
            self.bleu[3],
            self.rouge_l,
            self.meteor,
        ]
    }
}

fn score_one(ex: &EvalExample, normalizer: Normalizer) -> Result<OverlapScores> {
    let cand = normalizer.words(&ex.model_response.text);
    let reference = normalizer.words(&ex.reference_response.text);
    // Stripping speaker tokens can leave nothing behind; such responses
    // share nothing with anything.
    if cand.is_empty() || reference.is_empty() {
        return Ok(OverlapScores {
            bleu: [0.0; 4],
            rouge_l: 0.0,
            meteor: 0.0,
        });
    }
    let refs = [reference.as_slice()];
    let mut bleu = [0.0; 4];
    for (n, b) in bleu.iter_mut().enumerate() {
        *b = bleu_n(&cand, &refs, &BleuConfig::new(n + 1))?;
    }
    Ok(OverlapScores {
        bleu,
        rouge_l: rouge_l(&cand, &refs, &RougeConfig::default())?,
        meteor: meteor(&cand, &reference, &MeteorConfig::default())?,
    })
}

/// Scores every example's model response against its reference.
pub fn score_overlap(
    examples: &[EvalExample],
    normalizer: Normalizer,
    exec: Execution,
) -> Result<Vec<OverlapScores>> {
    par::try_map(exec, examples, |ex| score_one(ex, normalizer))
}
