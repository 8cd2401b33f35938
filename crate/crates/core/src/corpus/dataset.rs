use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Which system produced a model response.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SourceModel {
    Tfidf,
    De,
    Hred,
    Human,
    Other,
}

impl SourceModel {
    pub const ALL: [SourceModel; 5] = [
        SourceModel::Tfidf,
        SourceModel::De,
        SourceModel::Hred,
        SourceModel::Human,
        SourceModel::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceModel::Tfidf => "TFIDF",
            SourceModel::De => "DE",
            SourceModel::Hred => "HRED",
            SourceModel::Human => "HUMAN",
            SourceModel::Other => "OTHER",
        }
    }
}

impl fmt::Display for SourceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<SourceModel> for String {
    fn from(m: SourceModel) -> String {
        m.as_str().to_string()
    }
}

impl TryFrom<String> for SourceModel {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for SourceModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TFIDF" => Ok(SourceModel::Tfidf),
            "DE" => Ok(SourceModel::De),
            "HRED" => Ok(SourceModel::Hred),
            "HUMAN" => Ok(SourceModel::Human),
            "OTHER" => Ok(SourceModel::Other),
            other => Err(Error::InvalidArgument(format!(
                "unknown source model `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub text: String,
    /// Filled in by [`super::Tokenizer::annotate`].
    pub tokens: Option<Vec<u32>>,
}

impl Utterance {
    pub fn new(text: impl Into<String>) -> Self {
        Utterance {
            text: text.into(),
            tokens: None,
        }
    }

    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Context {
    pub context_id: String,
    pub utterances: Vec<Utterance>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalExample {
    pub context: Context,
    pub model_response: Utterance,
    pub reference_response: Utterance,
    pub human_score: f64,
    pub source_model: SourceModel,
}

/// Wire form of one dataset line.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    context_id: String,
    context: Vec<String>,
    model_response: String,
    reference_response: String,
    human_score: f64,
    source_model: String,
}

impl Record {
    fn into_example(self, line: usize) -> Result<EvalExample> {
        let invalid = |field: &str, message: String| Error::Parse {
            line,
            field: field.to_string(),
            message,
        };
        if self.context_id.trim().is_empty() {
            return Err(invalid("context_id", "empty identifier".into()));
        }
        if self.context.is_empty() {
            return Err(invalid("context", "needs at least one utterance".into()));
        }
        for (i, u) in self.context.iter().enumerate() {
            if u.trim().is_empty() {
                return Err(invalid("context", format!("utterance {i} is empty")));
            }
        }
        if self.model_response.trim().is_empty() {
            return Err(invalid("model_response", "empty utterance".into()));
        }
        if self.reference_response.trim().is_empty() {
            return Err(invalid("reference_response", "empty utterance".into()));
        }
        if !(1.0..=5.0).contains(&self.human_score) {
            return Err(Error::Validation {
                line,
                message: format!(
                    "human_score {} outside [1, 5]",
                    self.human_score
                ),
            });
        }
        let source_model = self
            .source_model
            .parse()
            .map_err(|e: Error| invalid("source_model", e.to_string()))?;
        Ok(EvalExample {
            context: Context {
                context_id: self.context_id,
                utterances: self.context.into_iter().map(Utterance::new).collect(),
            },
            model_response: Utterance::new(self.model_response),
            reference_response: Utterance::new(self.reference_response),
            human_score: self.human_score,
            source_model,
        })
    }

    fn from_example(ex: &EvalExample) -> Self {
        Record {
            context_id: ex.context.context_id.clone(),
            context: ex.context.utterances.iter().map(|u| u.text.clone()).collect(),
            model_response: ex.model_response.text.clone(),
            reference_response: ex.reference_response.text.clone(),
            human_score: ex.human_score,
            source_model: ex.source_model.as_str().to_string(),
        }
    }
}

/// Parses JSONL dataset text. Blank lines are skipped; line numbers are
/// 1-based.
pub fn parse_dataset(text: &str) -> Result<Vec<EvalExample>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(raw).map_err(|e| Error::Parse {
            line,
            field: field_hint(&e.to_string()),
            message: e.to_string(),
        })?;
        out.push(record.into_example(line)?);
    }
    Ok(out)
}

// serde_json names the offending field in messages like "missing field `x`".
fn field_hint(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "<record>".to_string())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<EvalExample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

/// JSONL text of `examples`, one record per line, as read by
/// [`parse_dataset`].
pub fn format_dataset(examples: &[EvalExample]) -> String {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&serde_json::to_string(&Record::from_example(ex)).expect("records always serialize"));
        out.push('\n');
    }
    out
}

pub fn write_dataset(path: impl AsRef<Path>, examples: &[EvalExample]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_dataset(examples)).map_err(|e| Error::io(path, e))
}
