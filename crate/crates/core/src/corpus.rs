//! Task-format datasets and prediction files.
//!
//! Datasets are line-delimited JSON with one document per line:
//!
//! ```text
//! {"id": "17", "text": "...", "label": 1, "model": "gpt-4", "source": "wikihow"}
//! ```
//!
//! `id` may be a string or an integer (normalized to a string). `label` is
//! `0` for human and `1` for machine text; it may be omitted only when
//! loading with [`Schema::Unlabeled`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// On-disk integer code for human-written text.
pub const HUMAN_CODE: u8 = 0;
/// On-disk integer code for machine-generated text.
pub const MACHINE_CODE: u8 = 1;

/// Default decision threshold on the machine probability.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Human,
    Machine,
}

impl Label {
    pub fn code(self) -> u8 {
        match self {
            Label::Human => HUMAN_CODE,
            Label::Machine => MACHINE_CODE,
        }
    }

    pub fn from_code(code: u8) -> Option<Label> {
        match code {
            HUMAN_CODE => Some(Label::Human),
            MACHINE_CODE => Some(Label::Machine),
            _ => None,
        }
    }

    /// Label for a machine probability under an inclusive threshold.
    pub fn from_score(score: f64, threshold: f64) -> Label {
        if score >= threshold {
            Label::Machine
        } else {
            Label::Human
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Human => f.write_str("human"),
            Label::Machine => f.write_str("machine"),
        }
    }
}

/// One text instance. `label` is `None` only for records loaded with
/// [`Schema::Unlabeled`]; such documents can be predicted on but never
/// trained or evaluated on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub label: Option<Label>,
    pub generator: Option<String>,
    pub source: Option<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Label) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            label: Some(label),
            generator: None,
            source: None,
        }
    }

    pub fn gold(&self) -> Result<Label> {
        self.label.ok_or_else(|| Error::MissingLabel {
            id: self.id.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub label: Label,
    /// Probability that the text is machine-generated.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Train,
    Unlabeled,
}

/// Loads a dataset file. See [`parse_dataset`].
pub fn load_dataset(path: impl AsRef<Path>, schema: Schema) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(BufReader::new(file), schema).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses line-delimited JSON documents, preserving order. Blank lines are
/// skipped but still counted for line numbers (which are 1-based).
pub fn parse_dataset<R: Read>(reader: R, schema: Schema) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<dataset>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = parse_record(&line, line_no, schema)?;
        if let Some(&first) = seen.get(&doc.id) {
            return Err(Error::DuplicateId {
                id: doc.id,
                first,
                second: line_no,
            });
        }
        seen.insert(doc.id.clone(), line_no);
        docs.push(doc);
    }
    Ok(docs)
}

fn parse_record(line: &str, line_no: usize, schema: Schema) -> Result<Document> {
    let malformed = |message: String| Error::MalformedRecord {
        line: line_no,
        message,
    };
    let value: Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| malformed("record is not a JSON object".into()))?;

    let id = match obj.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) if n.is_i64() || n.is_u64() => n.to_string(),
        Some(other) => return Err(malformed(format!("id must be a string or integer, got {other}"))),
        None => return Err(malformed("missing field `id`".into())),
    };
    if id.is_empty() {
        return Err(malformed("id is empty".into()));
    }

    let text = match obj.get("text") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(malformed("text must be a string".into())),
        None => return Err(malformed("missing field `text`".into())),
    };
    if text.trim().is_empty() {
        return Err(malformed(format!("document {id:?} has empty text")));
    }

    let label = match obj.get("label") {
        None | Some(Value::Null) => match schema {
            Schema::Unlabeled => None,
            Schema::Train => return Err(malformed("missing field `label`".into())),
        },
        Some(v) => {
            let code = v.as_u64().and_then(|c| u8::try_from(c).ok());
            match code.and_then(Label::from_code) {
                Some(label) => Some(label),
                None => {
                    return Err(Error::UnknownLabel {
                        line: line_no,
                        value: v.to_string(),
                    })
                }
            }
        }
    };

    let optional_str = |key: &str| -> Result<Option<String>> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(malformed(format!("`{key}` must be a string"))),
        }
    };

    Ok(Document {
        generator: optional_str("model")?,
        source: optional_str("source")?,
        id,
        text,
        label,
    })
}

/// Writes documents back in dataset format (used for synthetic corpora and
/// splits).
pub fn write_dataset(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for doc in docs {
        let mut obj = serde_json::Map::new();
        obj.insert("id".into(), Value::String(doc.id.clone()));
        obj.insert("text".into(), Value::String(doc.text.clone()));
        if let Some(label) = doc.label {
            obj.insert("label".into(), Value::from(label.code()));
        }
        if let Some(g) = &doc.generator {
            obj.insert("model".into(), Value::String(g.clone()));
        }
        if let Some(s) = &doc.source {
            obj.insert("source".into(), Value::String(s.clone()));
        }
        writeln!(out, "{}", Value::Object(obj)).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Renders one prediction line exactly as written to disk.
pub fn prediction_line(pred: &Prediction) -> String {
    let id = Value::String(pred.id.clone());
    format!("{{\"id\": {id}, \"label\": {}}}", pred.label.code())
}

pub fn write_predictions(path: impl AsRef<Path>, preds: &[Prediction]) -> Result<()> {
    let path = path.as_ref();
    let mut seen = HashSet::with_capacity(preds.len());
    for p in preds {
        if !seen.insert(p.id.as_str()) {
            return Err(Error::DuplicatePrediction(p.id.clone()));
        }
    }
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for p in preds {
        writeln!(out, "{}", prediction_line(p)).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a prediction file back. Scores are not stored on disk, so the
/// returned predictions carry the label code as their score.
pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    #[derive(Deserialize)]
    struct Line {
        id: Value,
        label: u8,
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut preds = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Line = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: idx + 1,
            message: e.to_string(),
        })?;
        let id = match rec.id {
            Value::String(s) => s,
            other => other.to_string(),
        };
        let label = Label::from_code(rec.label).ok_or_else(|| Error::UnknownLabel {
            line: idx + 1,
            value: rec.label.to_string(),
        })?;
        preds.push(Prediction {
            id,
            label,
            score: f64::from(label.code()),
        });
    }
    Ok(preds)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CountSummary {
    pub total: usize,
    pub human: usize,
    pub machine: usize,
    pub unlabeled: usize,
    /// Documents without a `model` field are counted under `"unknown"`.
    pub per_generator: BTreeMap<String, usize>,
}

pub fn split_stats(docs: &[Document]) -> CountSummary {
    let mut summary = CountSummary {
        total: docs.len(),
        ..Default::default()
    };
    for doc in docs {
        match doc.label {
            Some(Label::Human) => summary.human += 1,
            Some(Label::Machine) => summary.machine += 1,
            None => summary.unlabeled += 1,
        }
        let generator = doc.generator.as_deref().unwrap_or("unknown");
        *summary.per_generator.entry(generator.to_string()).or_default() += 1;
    }
    summary
}
