use crate::{Error, Result};

/// Matching stages, applied in order on tokens left unmatched by earlier
/// stages.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatchStage {
    Exact,
    /// Equality after [`stem`].
    Stem,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeteorConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub theta: f64,
    pub stages: Vec<MatchStage>,
}

impl Default for MeteorConfig {
    fn default() -> Self {
        MeteorConfig {
            alpha: 0.9,
            gamma: 0.5,
            theta: 3.0,
            stages: vec![MatchStage::Exact, MatchStage::Stem],
        }
    }
}

impl MeteorConfig {
    pub fn exact_only() -> Self {
        MeteorConfig {
            stages: vec![MatchStage::Exact],
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !(self.gamma >= 0.0) || !(self.theta >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "METEOR parameters out of range: alpha={} gamma={} theta={}",
                self.alpha, self.gamma, self.theta
            )));
        }
        Ok(())
    }
}

/// Suffix-stripping stemmer: removes one trailing `ing`, `es`, `ed` or `s`
/// when at least three characters remain.
pub fn stem(word: &str) -> &str {
    for suffix in ["ing", "es", "ed", "s"] {
        if let Some(base) = word.strip_suffix(suffix) {
            if base.chars().count() >= 3 {
                return base;
            }
        }
    }
    word
}

/// A resolved alignment: `(candidate index, reference index)` pairs sorted
/// by candidate index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alignment {
    pub pairs: Vec<(usize, usize)>,
}

impl Alignment {
    /// Number of runs where consecutive matches are adjacent on both sides,
    /// read in candidate order.
    pub fn chunks(&self) -> usize {
        if self.pairs.is_empty() {
            return 0;
        }
        1 + self
            .pairs
            .windows(2)
            .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
            .count()
    }
}

// Beyond this many search nodes the best alignment found so far is kept.
const SEARCH_BUDGET: usize = 200_000;

struct Search<'a> {
    // per candidate position: (ref index, stage) options
    options: Vec<Vec<(usize, usize)>>,
    stage_targets: &'a [usize],
    stage_counts: Vec<usize>,
    used: Vec<bool>,
    current: Vec<(usize, usize)>,
    best: Option<(usize, Vec<(usize, usize)>)>,
    nodes: usize,
    // remaining candidate positions that could still match at each stage
    remaining_capacity: Vec<Vec<usize>>,
}

impl Search<'_> {
    fn chunks_so_far(&self) -> usize {
        Alignment {
            pairs: self.current.clone(),
        }
        .chunks()
    }

    fn run(&mut self, pos: usize) {
        self.nodes += 1;
        if self.nodes > SEARCH_BUDGET && self.best.is_some() {
            return;
        }
        let chunks = self.chunks_so_far();
        if let Some((best, _)) = &self.best {
            if chunks >= *best {
                return;
            }
        }
        // every stage must still be able to reach its target
        for (s, &target) in self.stage_targets.iter().enumerate() {
            if self.stage_counts[s] + self.remaining_capacity[pos][s] < target {
                return;
            }
        }
        if pos == self.options.len() {
            if self.stage_counts.as_slice() == self.stage_targets {
                self.best = Some((chunks, self.current.clone()));
            }
            return;
        }
        // prefer continuing the previous chunk, then lower ref indices
        let mut opts = self.options[pos].clone();
        if let Some(&(pc, pr)) = self.current.last() {
            if pc + 1 == pos {
                opts.sort_by_key(|&(r, _)| (r != pr + 1, r));
            }
        }
        for (r, s) in opts {
            if self.used[r] || self.stage_counts[s] >= self.stage_targets[s] {
                continue;
            }
            self.used[r] = true;
            self.stage_counts[s] += 1;
            self.current.push((pos, r));
            self.run(pos + 1);
            self.current.pop();
            self.stage_counts[s] -= 1;
            self.used[r] = false;
        }
        self.run_skip(pos);
    }

    fn run_skip(&mut self, pos: usize) {
        self.run(pos + 1);
    }
}

fn key<'a>(word: &'a str, stage: MatchStage) -> &'a str {
    match stage {
        MatchStage::Exact => word,
        MatchStage::Stem => stem(word),
    }
}

// Maximum matches at each stage. Stage keys are equivalence classes, so the
// maximum matching at a stage is the sum over classes of the smaller side.
fn stage_targets<S: AsRef<str>>(cand: &[S], reference: &[S], stages: &[MatchStage]) -> Vec<usize> {
    use std::collections::HashMap;
    let mut cand_left: Vec<bool> = vec![true; cand.len()];
    let mut ref_left: Vec<bool> = vec![true; reference.len()];
    let mut targets = Vec::with_capacity(stages.len());
    for &stage in stages {
        let mut cand_by_key: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, w) in cand.iter().enumerate().filter(|(i, _)| cand_left[*i]) {
            cand_by_key.entry(key(w.as_ref(), stage)).or_default().push(i);
        }
        let mut ref_by_key: HashMap<&str, Vec<usize>> = HashMap::new();
        for (j, w) in reference.iter().enumerate().filter(|(j, _)| ref_left[*j]) {
            ref_by_key.entry(key(w.as_ref(), stage)).or_default().push(j);
        }
        let mut total = 0;
        for (k, cs) in &cand_by_key {
            if let Some(rs) = ref_by_key.get(k) {
                let n = cs.len().min(rs.len());
                total += n;
                // which members are consumed does not change the leftover
                // key multiset at later stages
                for &i in &cs[..n] {
                    cand_left[i] = false;
                }
                for &j in &rs[..n] {
                    ref_left[j] = false;
                }
            }
        }
        targets.push(total);
    }
    targets
}

/// Stage-wise alignment with the maximum match count at each stage and,
/// among those, the fewest chunks.
pub fn align<S: AsRef<str>>(candidate: &[S], reference: &[S], stages: &[MatchStage]) -> Alignment {
    let targets = stage_targets(candidate, reference, stages);
    let options: Vec<Vec<(usize, usize)>> = candidate
        .iter()
        .map(|c| {
            let mut opts = Vec::new();
            for (j, r) in reference.iter().enumerate() {
                // first stage whose key matches decides the pair's stage
                if let Some(s) = stages
                    .iter()
                    .position(|&st| key(c.as_ref(), st) == key(r.as_ref(), st))
                {
                    opts.push((j, s));
                }
            }
            opts
        })
        .collect();
    let mut remaining_capacity = vec![vec![0usize; stages.len()]; candidate.len() + 1];
    for pos in (0..candidate.len()).rev() {
        let mut row = remaining_capacity[pos + 1].clone();
        for s in 0..stages.len() {
            if options[pos].iter().any(|&(_, st)| st == s) {
                row[s] += 1;
            }
        }
        remaining_capacity[pos] = row;
    }
    let mut search = Search {
        options,
        stage_targets: &targets,
        stage_counts: vec![0; stages.len()],
        used: vec![false; reference.len()],
        current: Vec::new(),
        best: None,
        nodes: 0,
        remaining_capacity,
    };
    search.run(0);
    Alignment {
        pairs: search.best.map(|(_, p)| p).unwrap_or_default(),
    }
}

/// METEOR with the configured matcher stages.
pub fn meteor<S: AsRef<str>>(candidate: &[S], reference: &[S], cfg: &MeteorConfig) -> Result<f64> {
    cfg.validate()?;
    if candidate.is_empty() || reference.is_empty() {
        return Err(Error::InvalidArgument(
            "METEOR needs non-empty candidate and reference".into(),
        ));
    }
    let alignment = align(candidate, reference, &cfg.stages);
    let m = alignment.pairs.len();
    if m == 0 {
        return Ok(0.0);
    }
    let p = m as f64 / candidate.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f_mean = p * r / (cfg.alpha * p + (1.0 - cfg.alpha) * r);
    let pen = cfg.gamma * (alignment.chunks() as f64 / m as f64).powf(cfg.theta);
    Ok((1.0 - pen) * f_mean)
}
