//! Dataset ingestion, context-disjoint splitting and subword tokenization.

mod bpe;
mod dataset;
mod split;
mod vocab;

pub use bpe::{learn_bpe, segment_word, BpeMerges, WORD_END};
pub use dataset::{
    format_dataset, load_dataset, parse_dataset, write_dataset, Context, EvalExample, SourceModel, Utterance,
};
pub use split::{split_by_context, Splits};
pub use vocab::{build_vocab, detokenize, Tokenizer, Vocabulary, EOC, EOU, PAD, RESERVED, UNK};

/// Whitespace word splitter shared by tokenization and the overlap metrics.
///
/// Speaker markers such as `<first_speaker>` are dropped unless
/// `keep_speaker_tokens` is set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Normalizer {
    pub keep_speaker_tokens: bool,
}

impl Normalizer {
    pub fn words<'a>(&self, text: &'a str) -> Vec<&'a str> {
        text.split_whitespace()
            .filter(|w| self.keep_speaker_tokens || !is_speaker_token(w))
            .collect()
    }
}

pub fn is_speaker_token(word: &str) -> bool {
    word.starts_with('<') && word.ends_with("_speaker>")
}
