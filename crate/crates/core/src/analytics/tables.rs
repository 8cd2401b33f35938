use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::bias::length_bias_report;
use super::failure::{failure_slice, FailureSlices, FailureThresholds};
use super::normalize::normalize_scores;
use super::system::system_level_correlation;
use super::sweep::{correlate, LooReport, SweepRow};
use crate::corpus::{EvalExample, SourceModel};
use crate::{Error, Result};

/// The per-example facts every analysis needs besides metric scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleMeta {
    pub context_id: String,
    pub source_model: SourceModel,
    pub human_score: f64,
    pub response_len: usize,
    pub reference_len: usize,
}

impl ExampleMeta {
    pub fn from_example(ex: &EvalExample) -> Self {
        ExampleMeta {
            context_id: ex.context.context_id.clone(),
            source_model: ex.source_model,
            human_score: ex.human_score,
            response_len: ex.model_response.word_count(),
            reference_len: ex.reference_response.word_count(),
        }
    }

    pub fn delta_w(&self) -> usize {
        self.response_len.abs_diff(self.reference_len)
    }
}

/// One row per example with header
/// `context_id,source_model,human_score,response_len,reference_len`.
pub fn meta_to_csv(meta: &[ExampleMeta]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if meta.is_empty() {
        w.write_record(["context_id", "source_model", "human_score", "response_len", "reference_len"])?;
    }
    for m in meta {
        w.serialize(m)?;
    }
    finish(w)
}

pub fn meta_from_csv(text: &str) -> Result<Vec<ExampleMeta>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in r.deserialize() {
        let m: ExampleMeta = rec?;
        if !(1.0..=5.0).contains(&m.human_score) {
            return Err(Error::Validation {
                line: out.len() + 2,
                message: format!("human_score {} outside [1, 5]", m.human_score),
            });
        }
        out.push(m);
    }
    Ok(out)
}

/// Named metric columns aligned with a list of examples.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreTable {
    pub context_ids: Vec<String>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl ScoreTable {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn push(&mut self, name: impl Into<String>, scores: Vec<f64>) -> Result<()> {
        if scores.len() != self.context_ids.len() {
            return Err(Error::dim("score column", self.context_ids.len(), scores.len()));
        }
        self.columns.push((name.into(), scores));
        Ok(())
    }

    /// Long format `example,context_id,metric,score`, grouped by metric.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["example", "context_id", "metric", "score"])?;
        for (name, scores) in &self.columns {
            for (i, s) in scores.iter().enumerate() {
                w.write_record([
                    i.to_string(),
                    self.context_ids[i].clone(),
                    name.clone(),
                    format!("{s:?}"),
                ])?;
            }
        }
        finish(w)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers()?.clone();
        if header != csv::StringRecord::from(vec!["example", "context_id", "metric", "score"]) {
            return Err(Error::Parse {
                line: 1,
                field: "header".into(),
                message: "expected `example,context_id,metric,score`".into(),
            });
        }
        let mut table = ScoreTable::default();
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = k + 2;
            let parse_err = |field: &str, message: String| Error::Parse {
                line,
                field: field.into(),
                message,
            };
            let example: usize = rec[0]
                .parse()
                .map_err(|e| parse_err("example", format!("{e}")))?;
            let score: f64 = rec[3].parse().map_err(|e| parse_err("score", format!("{e}")))?;
            let metric = &rec[2];
            if table.columns.last().map(|(n, _)| n.as_str()) != Some(metric) {
                if table.column(metric).is_some() {
                    return Err(parse_err("metric", format!("rows of `{metric}` are not contiguous")));
                }
                table.columns.push((metric.to_string(), Vec::new()));
            }
            let first = table.columns.len() == 1;
            let col = &mut table.columns.last_mut().expect("pushed").1;
            if example != col.len() {
                return Err(parse_err("example", format!("expected index {}", col.len())));
            }
            if first {
                table.context_ids.push(rec[1].to_string());
            } else if table.context_ids.get(example).map(String::as_str) != Some(&rec[1]) {
                return Err(parse_err("context_id", "does not match the first metric's rows".into()));
            }
            col.push(score);
        }
        for (name, col) in &table.columns {
            if col.len() != table.context_ids.len() {
                return Err(Error::InvalidArgument(format!(
                    "metric `{name}` has {} scores, expected {}",
                    col.len(),
                    table.context_ids.len()
                )));
            }
        }
        Ok(table)
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn f(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Word-count difference splitting the length-bias groups.
    pub delta_w_threshold: usize,
    pub failure_high: f64,
    pub failure_low: f64,
    /// The two overlap metrics of the failure analysis.
    pub failure_overlap: [String; 2],
    pub adem_column: String,
    /// Standard deviation of the optional scatter jitter; 0 disables it.
    pub jitter_sd: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            delta_w_threshold: 6,
            failure_high: 4.0,
            failure_low: 2.0,
            failure_overlap: ["bleu2".into(), "rouge_l".into()],
            adem_column: "adem".into(),
            jitter_sd: 0.0,
            seed: 0,
        }
    }
}

/// Named CSV tables produced by one evaluation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tables {
    pub files: Vec<(String, String)>,
}

impl Tables {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_str())
    }

    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, content) in &self.files {
            let p = dir.join(name);
            fs::write(&p, content).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

pub const UTTERANCE_TABLE: &str = "utterance_correlation.csv";
pub const SYSTEM_TABLE: &str = "system_correlation.csv";
pub const SYSTEM_MEANS_TABLE: &str = "system_means.csv";
pub const LENGTH_BIAS_TABLE: &str = "length_bias.csv";
pub const FAILURE_TABLE: &str = "failure_slices.csv";
pub const FAILURE_EXAMPLES_TABLE: &str = "failure_examples.csv";
pub const SCATTER_TABLE: &str = "scatter.csv";
pub const SWEEP_TABLE: &str = "data_efficiency.csv";
pub const LOO_TABLE: &str = "leave_one_out.csv";

/// Tables written by evaluation, in report order.
pub const EVAL_TABLES: [&str; 7] = [
    UTTERANCE_TABLE,
    SYSTEM_TABLE,
    SYSTEM_MEANS_TABLE,
    LENGTH_BIAS_TABLE,
    FAILURE_TABLE,
    FAILURE_EXAMPLES_TABLE,
    SCATTER_TABLE,
];

/// Every evaluation table for aligned metadata and metric columns.
/// Correlations that are undefined (a constant column) appear as `NaN`.
pub fn evaluate(meta: &[ExampleMeta], scores: &ScoreTable, cfg: &EvalConfig) -> Result<Tables> {
    if meta.len() != scores.context_ids.len() {
        return Err(Error::dim("score table rows", meta.len(), scores.context_ids.len()));
    }
    for (m, id) in meta.iter().zip(&scores.context_ids) {
        if &m.context_id != id {
            return Err(Error::InvalidArgument(format!(
                "score table context `{id}` does not match dataset context `{}`",
                m.context_id
            )));
        }
    }
    let human: Vec<f64> = meta.iter().map(|m| m.human_score).collect();
    let sources: Vec<SourceModel> = meta.iter().map(|m| m.source_model).collect();
    let delta_w: Vec<usize> = meta.iter().map(ExampleMeta::delta_w).collect();
    let normalized: Vec<(String, Option<Vec<f64>>)> = scores
        .columns
        .iter()
        .map(|(n, c)| (n.clone(), normalize_scores(c, &human).ok()))
        .collect();
    let mut tables = Tables::default();

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "spearman", "spearman_p", "pearson", "pearson_p", "n"])?;
    for (name, col) in &scores.columns {
        let row = match correlate(col, &human) {
            Ok(c) => [
                f(c.spearman.coefficient),
                f(c.spearman.p_value),
                f(c.pearson.coefficient),
                f(c.pearson.p_value),
            ],
            Err(_) => [f(f64::NAN), f(f64::NAN), f(f64::NAN), f(f64::NAN)],
        };
        let mut rec = vec![name.clone()];
        rec.extend(row);
        rec.push(col.len().to_string());
        w.write_record(&rec)?;
    }
    tables.files.push((UTTERANCE_TABLE.into(), finish(w)?));

    let mut sys = csv::Writer::from_writer(Vec::new());
    sys.write_record(["metric", "pearson", "p_value", "n_models"])?;
    let mut means = csv::Writer::from_writer(Vec::new());
    means.write_record(["metric", "source_model", "mean_human", "mean_metric", "count"])?;
    for (name, col) in &scores.columns {
        match system_level_correlation(&sources, &human, col) {
            Ok((c, summary)) => {
                sys.write_record([name.clone(), f(c.coefficient), f(c.p_value), c.n.to_string()])?;
                for r in summary.rows {
                    means.write_record([
                        name.clone(),
                        r.source_model.to_string(),
                        f(r.mean_human),
                        f(r.mean_metric),
                        r.count.to_string(),
                    ])?;
                }
            }
            Err(_) => {
                sys.write_record([name.clone(), f(f64::NAN), f(f64::NAN), "0".into()])?;
            }
        }
    }
    tables.files.push((SYSTEM_TABLE.into(), finish(sys)?));
    tables.files.push((SYSTEM_MEANS_TABLE.into(), finish(means)?));

    let mut lb = csv::Writer::from_writer(Vec::new());
    lb.write_record([
        "metric",
        "threshold",
        "n_similar",
        "mean_similar",
        "n_different",
        "mean_different",
        "t",
        "p_value",
        "length_biased",
    ])?;
    let mut bias_cols: Vec<(&str, &[f64])> = vec![("human", &human)];
    for (name, col) in &normalized {
        if let Some(c) = col {
            bias_cols.push((name, c));
        }
    }
    for (name, col) in bias_cols {
        if let Ok(r) = length_bias_report(col, &delta_w, cfg.delta_w_threshold) {
            lb.write_record([
                name.to_string(),
                r.threshold.to_string(),
                r.similar.n.to_string(),
                f(r.similar.mean),
                r.different.n.to_string(),
                f(r.different.mean),
                f(r.t),
                f(r.p_value),
                r.length_biased.to_string(),
            ])?;
        }
    }
    tables.files.push((LENGTH_BIAS_TABLE.into(), finish(lb)?));

    let norm_col = |name: &str| -> Option<&Vec<f64>> {
        normalized
            .iter()
            .find(|(n, _)| n == name)
            .and_then(|(_, c)| c.as_ref())
    };
    if let (Some(a), Some(b), Some(adem)) = (
        norm_col(&cfg.failure_overlap[0]),
        norm_col(&cfg.failure_overlap[1]),
        norm_col(&cfg.adem_column),
    ) {
        let th = FailureThresholds {
            high: cfg.failure_high,
            low: cfg.failure_low,
        };
        let slices = failure_slice(&human, a, b, adem, th)?;
        let mut t = csv::Writer::from_writer(Vec::new());
        t.write_record(["slice", "count", "total"])?;
        for (name, count) in slices.named_counts() {
            t.write_record([name.to_string(), count.to_string(), meta.len().to_string()])?;
        }
        tables.files.push((FAILURE_TABLE.into(), finish(t)?));
        tables.files.push((
            FAILURE_EXAMPLES_TABLE.into(),
            failure_examples_csv(&slices, meta, [a, b, adem], cfg)?,
        ));
    }

    let mut sc = csv::Writer::from_writer(Vec::new());
    let jitter = cfg.jitter_sd > 0.0;
    let mut head = vec!["metric", "example", "human", "normalized"];
    if jitter {
        head.push("jitter");
    }
    sc.write_record(&head)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.jitter_sd.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidArgument(format!("jitter: {e}")))?;
    for (name, col) in &normalized {
        let Some(col) = col else { continue };
        for (i, (h, s)) in human.iter().zip(col).enumerate() {
            let mut rec = vec![name.clone(), i.to_string(), f(*h), f(*s)];
            if jitter {
                rec.push(f(noise.sample(&mut rng)));
            }
            sc.write_record(&rec)?;
        }
    }
    tables.files.push((SCATTER_TABLE.into(), finish(sc)?));
    Ok(tables)
}

fn failure_examples_csv(
    slices: &FailureSlices,
    meta: &[ExampleMeta],
    cols: [&Vec<f64>; 3],
    cfg: &EvalConfig,
) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "slice",
        "example",
        "context_id",
        "source_model",
        "human",
        cfg.failure_overlap[0].as_str(),
        cfg.failure_overlap[1].as_str(),
        cfg.adem_column.as_str(),
    ])?;
    let named = [
        ("human_high_overlap_low_adem_high", &slices.overlap_low_adem_high),
        ("human_high_adem_low_overlap_high", &slices.adem_low_overlap_high),
    ];
    for (name, idx) in named {
        for &i in idx {
            w.write_record([
                name.to_string(),
                i.to_string(),
                meta[i].context_id.clone(),
                meta[i].source_model.to_string(),
                f(meta[i].human_score),
                f(cols[0][i]),
                f(cols[1][i]),
                f(cols[2][i]),
            ])?;
        }
    }
    finish(w)
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "fraction",
        "n_contexts",
        "n_train",
        "spearman",
        "spearman_p",
        "pearson",
        "pearson_p",
    ])?;
    for r in rows {
        w.write_record([
            f(r.fraction),
            r.n_contexts.to_string(),
            r.n_train.to_string(),
            f(r.test.spearman.coefficient),
            f(r.test.spearman.p_value),
            f(r.test.pearson.coefficient),
            f(r.test.pearson.p_value),
        ])?;
    }
    finish(w)
}

pub fn loo_csv(report: &LooReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "held_out",
        "n_train",
        "full_spearman",
        "full_spearman_p",
        "full_pearson",
        "full_pearson_p",
        "held_out_spearman",
        "held_out_spearman_p",
        "held_out_pearson",
        "held_out_pearson_p",
    ])?;
    for r in &report.rows {
        let label = r
            .held_out
            .map_or_else(|| "random_control".to_string(), |s| s.to_string());
        let mut rec = vec![
            label,
            r.n_train.to_string(),
            f(r.full_test.spearman.coefficient),
            f(r.full_test.spearman.p_value),
            f(r.full_test.pearson.coefficient),
            f(r.full_test.pearson.p_value),
        ];
        match &r.held_out_test {
            Some(c) => rec.extend([
                f(c.spearman.coefficient),
                f(c.spearman.p_value),
                f(c.pearson.coefficient),
                f(c.pearson.p_value),
            ]),
            None => rec.extend(std::iter::repeat_n(String::new(), 4)),
        }
        w.write_record(&rec)?;
    }
    finish(w)
}
