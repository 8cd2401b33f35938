use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use crate::{Error, Result};

/// Marker appended to every word before merging, so merges never cross
/// word boundaries and word-final subwords stay distinct.
pub const WORD_END: &str = "</w>";

/// Ordered merge rules; index is the rule's rank.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BpeMerges {
    rules: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
}

impl BpeMerges {
    pub fn from_rules(rules: Vec<(String, String)>) -> Self {
        let ranks = rules
            .iter()
            .enumerate()
            .map(|(i, r)| (r.clone(), i))
            .collect();
        BpeMerges { rules, ranks }
    }

    pub fn rules(&self) -> &[(String, String)] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// One rule per line, `left right`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (l, r) in &self.rules {
            s.push_str(l);
            s.push(' ');
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                    rules.push((l.to_string(), r.to_string()))
                }
                _ => {
                    return Err(Error::Parse {
                        line: i + 1,
                        field: "merge".into(),
                        message: format!("expected `left right`, got `{line}`"),
                    })
                }
            }
        }
        Ok(BpeMerges::from_rules(rules))
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

fn initial_symbols(word: &str) -> Vec<String> {
    word.chars()
        .map(String::from)
        .chain(std::iter::once(WORD_END.to_string()))
        .collect()
}

fn merge_pair(symbols: &[String], left: &str, right: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
            out.push(format!("{left}{right}"));
            i += 2;
        } else {
            out.push(symbols[i].clone());
            i += 1;
        }
    }
    out
}

/// Learns `num_merges` rules by repeatedly merging the most frequent
/// adjacent symbol pair. Equal counts go to the lexicographically smallest
/// merged symbol, then the smallest left symbol.
pub fn learn_bpe<S: AsRef<str>>(texts: &[S], num_merges: usize) -> Result<BpeMerges> {
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for t in texts {
        for w in t.as_ref().split_whitespace() {
            *freq.entry(w).or_default() += 1;
        }
    }
    if freq.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot learn merges from an empty corpus".into(),
        ));
    }
    let mut words: Vec<(Vec<String>, usize)> = freq
        .into_iter()
        .map(|(w, c)| (initial_symbols(w), c))
        .collect();

    let mut rules = Vec::with_capacity(num_merges);
    for _ in 0..num_merges {
        let mut counts: HashMap<(&str, &str), usize> = HashMap::new();
        for (syms, c) in &words {
            for pair in syms.windows(2) {
                *counts.entry((&pair[0], &pair[1])).or_default() += c;
            }
        }
        let best = counts.into_iter().max_by(|(pa, ca), (pb, cb)| {
            ca.cmp(cb).then_with(|| {
                let ma = format!("{}{}", pa.0, pa.1);
                let mb = format!("{}{}", pb.0, pb.1);
                mb.cmp(&ma).then_with(|| pb.0.cmp(pa.0))
            })
        });
        let Some(((l, r), _)) = best else { break };
        let (l, r) = (l.to_string(), r.to_string());
        for (syms, _) in words.iter_mut() {
            *syms = merge_pair(syms, &l, &r);
        }
        rules.push((l, r));
    }
    Ok(BpeMerges::from_rules(rules))
}

/// Splits one word into subword symbols. The returned sequence still ends
/// with the word-end marker, either bare or fused into the last symbol.
pub fn segment_word(word: &str, merges: &BpeMerges) -> Vec<String> {
    let mut syms = initial_symbols(word);
    loop {
        let best = syms
            .windows(2)
            .filter_map(|p| merges.ranks.get(&(p[0].clone(), p[1].clone())))
            .min()
            .copied();
        let Some(rank) = best else { break };
        let (l, r) = &merges.rules[rank];
        syms = merge_pair(&syms, l, r);
    }
    syms
}
