use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::bpe::{segment_word, BpeMerges, WORD_END};
use super::{EvalExample, Normalizer};
use crate::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
/// End of utterance.
pub const EOU: u32 = 2;
/// End of context.
pub const EOC: u32 = 3;

/// Names of the reserved ids `0..RESERVED.len()`.
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "</s>", "</d>"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary from non-reserved symbols in id order.
    pub fn from_symbols<I: IntoIterator<Item = String>>(symbols: I) -> Result<Self> {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, u32> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        for s in symbols {
            if index.contains_key(&s) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate vocabulary entry `{s}`"
                )));
            }
            index.insert(s.clone(), tokens.len() as u32);
            tokens.push(s);
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, symbol: &str) -> u32 {
        self.index.get(symbol).copied().unwrap_or(UNK)
    }

    pub fn symbol(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// One non-reserved token per line; line `k` holds id `RESERVED.len() + k`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens[RESERVED.len()..] {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_symbols(text.lines().filter(|l| !l.is_empty()).map(str::to_string))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Subword symbols of a whole utterance. The bare word-end marker of the
/// final word is dropped; end-of-utterance stands in for it.
fn utterance_symbols(words: &[&str], merges: &BpeMerges) -> Vec<String> {
    let mut out = Vec::new();
    for w in words {
        out.extend(segment_word(w, merges));
    }
    if out.last().map(String::as_str) == Some(WORD_END) {
        out.pop();
    }
    out
}

/// Keeps the `max_size - RESERVED.len()` most frequent symbols; ties are
/// broken by symbol order so ids are reproducible.
pub fn build_vocab<S: AsRef<str>>(
    texts: &[S],
    merges: &BpeMerges,
    max_size: usize,
    normalizer: Normalizer,
) -> Result<Vocabulary> {
    if max_size <= RESERVED.len() {
        return Err(Error::InvalidArgument(format!(
            "vocabulary size {max_size} leaves no room beyond {} reserved ids",
            RESERVED.len()
        )));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for t in texts {
        let words = normalizer.words(t.as_ref());
        for s in utterance_symbols(&words, merges) {
            *counts.entry(s).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(s, _)| !RESERVED.contains(&s.as_str()))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size - RESERVED.len());
    Vocabulary::from_symbols(ranked.into_iter().map(|(s, _)| s))
}

/// BPE tokenizer bound to a vocabulary.
#[derive(Clone, Debug)]
pub struct Tokenizer {
    pub merges: BpeMerges,
    pub vocab: Vocabulary,
    pub normalizer: Normalizer,
}

impl Tokenizer {
    pub fn new(merges: BpeMerges, vocab: Vocabulary, normalizer: Normalizer) -> Self {
        Tokenizer {
            merges,
            vocab,
            normalizer,
        }
    }

    pub fn symbols(&self, text: &str) -> Vec<String> {
        utterance_symbols(&self.normalizer.words(text), &self.merges)
    }

    /// Token ids of `text` followed by end-of-utterance.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        self.symbols(text)
            .iter()
            .map(|s| self.vocab.id(s))
            .chain(std::iter::once(EOU))
            .collect()
    }

    /// Fills the `tokens` field of every utterance in the example.
    pub fn annotate(&self, ex: &mut EvalExample) {
        for u in ex.context.utterances.iter_mut() {
            u.tokens = Some(self.tokenize(&u.text));
        }
        ex.model_response.tokens = Some(self.tokenize(&ex.model_response.text));
        ex.reference_response.tokens = Some(self.tokenize(&ex.reference_response.text));
    }
}

/// Inverse of [`Tokenizer::symbols`] for in-vocabulary text.
pub fn detokenize(symbols: &[String]) -> String {
    symbols.concat().replace(WORD_END, " ").trim_end().to_string()
}
