//! Paraphrase-based pair construction.
//!
//! Each document is split into sentences with the exact whitespace between
//! them retained, every sentence is paraphrased on its own, and the
//! paraphrases are stitched back together with the original separators. The
//! original text and its paraphrase form one contrastive instance whose pair
//! label is `+1` when the original is machine-generated (both members are
//! machine text, a soft positive) and `-1` when it is human-written (the
//! original is a hard negative for its machine paraphrase).
//!
//! The pairing figure this method is usually drawn with labels the pairs the
//! other way around (`+1` for human). The prose definition, "+1 for
//! positive-positive pairs", is the one implemented; flipping
//! [`MACHINE_PAIR_LABEL`] flips the convention everywhere.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::corpus::{Document, Label};
use crate::error::{Error, Result};
use crate::seed::stream_rng;
use crate::transport::{reply_array, Transport};

/// Pair label assigned when the anchor is machine-generated.
pub const MACHINE_PAIR_LABEL: i8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub struct PairLabel(i8);

impl PairLabel {
    pub const POSITIVE: PairLabel = PairLabel(1);
    pub const NEGATIVE: PairLabel = PairLabel(-1);

    pub fn for_anchor(label: Label) -> PairLabel {
        match label {
            Label::Machine => PairLabel(MACHINE_PAIR_LABEL),
            Label::Human => PairLabel(-MACHINE_PAIR_LABEL),
        }
    }

    pub fn value(self) -> i8 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0)
    }
}

impl TryFrom<i8> for PairLabel {
    type Error = Error;

    fn try_from(v: i8) -> Result<Self> {
        match v {
            1 | -1 => Ok(PairLabel(v)),
            other => Err(Error::InvalidPairLabel(other)),
        }
    }
}

impl From<PairLabel> for i8 {
    fn from(y: PairLabel) -> i8 {
        y.0
    }
}

/// Sentences plus the exact separators around them:
/// `separators[0] + sentences[0] + separators[1] + ... + sentences[n-1] + separators[n]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentedDocument {
    pub sentences: Vec<String>,
    pub separators: Vec<String>,
}

fn is_line_break(c: char) -> bool {
    c == '\n' || c == '\r'
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Splits `text` into sentences.
///
/// A boundary is a maximal whitespace run that contains a line break, or
/// that directly follows `.`, `!` or `?`. The whole run becomes the
/// separator, so sentences never start or end with whitespace. Leading and
/// trailing whitespace of the text become the first and last separators.
/// Whitespace-only input yields no sentences and a single separator.
pub fn segment(text: &str) -> SegmentedDocument {
    let start = text
        .char_indices()
        .find(|(_, c)| !c.is_whitespace())
        .map(|(i, _)| i);
    let Some(start) = start else {
        return SegmentedDocument {
            sentences: Vec::new(),
            separators: vec![text.to_string()],
        };
    };
    let end = text
        .char_indices()
        .rev()
        .find(|(_, c)| !c.is_whitespace())
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(text.len());

    let mut sentences = Vec::new();
    let mut separators = vec![text[..start].to_string()];
    let mut sentence_start = start;
    let mut prev: Option<char> = None;
    let mut chars = text[start..end].char_indices().peekable();

    while let Some((off, c)) = chars.next() {
        if !c.is_whitespace() {
            prev = Some(c);
            continue;
        }
        let run_start = start + off;
        let mut run_end = run_start + c.len_utf8();
        let mut has_break = is_line_break(c);
        while let Some(&(o, w)) = chars.peek() {
            if !w.is_whitespace() {
                break;
            }
            has_break |= is_line_break(w);
            run_end = start + o + w.len_utf8();
            chars.next();
        }
        if has_break || prev.is_some_and(is_terminal) {
            sentences.push(text[sentence_start..run_start].to_string());
            separators.push(text[run_start..run_end].to_string());
            sentence_start = run_end;
        }
        prev = None;
    }
    sentences.push(text[sentence_start..end].to_string());
    separators.push(text[end..].to_string());
    SegmentedDocument {
        sentences,
        separators,
    }
}

pub fn rejoin(seg: &SegmentedDocument) -> Result<String> {
    if seg.separators.len() != seg.sentences.len() + 1 {
        return Err(Error::SeparatorMismatch {
            sentences: seg.sentences.len(),
            separators: seg.separators.len(),
        });
    }
    let cap = seg.sentences.iter().chain(&seg.separators).map(String::len).sum();
    let mut out = String::with_capacity(cap);
    out.push_str(&seg.separators[0]);
    for (sentence, sep) in seg.sentences.iter().zip(&seg.separators[1..]) {
        out.push_str(sentence);
        out.push_str(sep);
    }
    Ok(out)
}

/// Sentence-level paraphrase model.
///
/// `doc_id` lets seeded implementations derive per-document randomness so
/// results do not depend on processing order.
pub trait Paraphraser: Send + Sync {
    fn name(&self) -> &str;

    fn deterministic(&self) -> bool;

    /// Must return exactly one paraphrase per input sentence.
    fn paraphrase(&self, doc_id: &str, sentences: &[String]) -> Result<Vec<String>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityParaphraser;

impl Paraphraser for IdentityParaphraser {
    fn name(&self) -> &str {
        "identity"
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn paraphrase(&self, _doc_id: &str, sentences: &[String]) -> Result<Vec<String>> {
        Ok(sentences.to_vec())
    }
}

const SYNONYMS: &[&[&str]] = &[
    &["big", "large", "huge"],
    &["small", "little", "tiny"],
    &["good", "fine", "great"],
    &["bad", "poor", "awful"],
    &["fast", "quick", "rapid"],
    &["slow", "sluggish", "unhurried"],
    &["important", "significant", "crucial"],
    &["use", "employ", "utilize"],
    &["help", "assist", "aid"],
    &["show", "demonstrate", "reveal"],
    &["make", "create", "produce"],
    &["get", "obtain", "acquire"],
    &["start", "begin", "commence"],
    &["end", "finish", "conclude"],
    &["often", "frequently", "regularly"],
    &["also", "additionally", "moreover"],
    &["however", "nevertheless", "yet"],
    &["many", "numerous", "several"],
    &["very", "extremely", "highly"],
    &["people", "individuals", "persons"],
    &["think", "believe", "consider"],
    &["need", "require", "demand"],
    &["easy", "simple", "straightforward"],
    &["hard", "difficult", "tough"],
    &["new", "novel", "fresh"],
    &["old", "aged", "ancient"],
    &["change", "alter", "modify"],
    &["buy", "purchase", "acquire"],
    &["answer", "reply", "response"],
    &["problem", "issue", "difficulty"],
    &["result", "outcome", "consequence"],
    &["method", "approach", "technique"],
    &["improve", "enhance", "boost"],
    &["provide", "offer", "supply"],
    &["ensure", "guarantee", "secure"],
    &["various", "diverse", "assorted"],
    &["overall", "generally", "broadly"],
    &["essential", "vital", "necessary"],
    &["discuss", "examine", "explore"],
    &["benefit", "advantage", "gain"],
];

/// Seeded rewriter: synonym substitution, word dropout and adjacent-word
/// swaps. A stand-in for a neural paraphrase model at desk scale.
#[derive(Debug, Clone)]
pub struct NoiseParaphraser {
    seed: u64,
    pub synonym_p: f64,
    pub dropout_p: f64,
    pub swap_p: f64,
    table: HashMap<&'static str, &'static [&'static str]>,
}

impl NoiseParaphraser {
    pub fn new(seed: u64) -> Self {
        let mut table = HashMap::new();
        for group in SYNONYMS {
            for &w in group.iter() {
                table.insert(w, *group);
            }
        }
        NoiseParaphraser {
            seed,
            synonym_p: 0.5,
            dropout_p: 0.1,
            swap_p: 0.1,
            table,
        }
    }

    fn rewrite_word<R: Rng>(&self, word: &str, rng: &mut R) -> String {
        let core_end = word
            .char_indices()
            .rev()
            .find(|(_, c)| c.is_alphanumeric())
            .map(|(i, c)| i + c.len_utf8());
        let Some(core_end) = core_end else {
            return word.to_string();
        };
        let (core, tail) = word.split_at(core_end);
        let lower = core.to_lowercase();
        let Some(group) = self.table.get(lower.as_str()) else {
            return word.to_string();
        };
        if !rng.random_bool(self.synonym_p) {
            return word.to_string();
        }
        let choices: Vec<&str> = group.iter().copied().filter(|w| *w != lower).collect();
        let Some(&pick) = choices.choose(rng) else {
            return word.to_string();
        };
        let capitalized = core.chars().next().is_some_and(char::is_uppercase);
        let mut out = String::with_capacity(pick.len() + tail.len());
        if capitalized {
            let mut cs = pick.chars();
            if let Some(first) = cs.next() {
                out.extend(first.to_uppercase());
                out.push_str(cs.as_str());
            }
        } else {
            out.push_str(pick);
        }
        out.push_str(tail);
        out
    }

    fn rewrite_sentence<R: Rng>(&self, sentence: &str, rng: &mut R) -> String {
        let mut words: Vec<String> = sentence
            .split_whitespace()
            .map(|w| self.rewrite_word(w, rng))
            .collect();
        if words.is_empty() {
            return sentence.to_string();
        }
        // The final word carries the sentence punctuation; keep it in place.
        let last = words.len() - 1;
        if words.len() >= 4 {
            let mut kept = Vec::with_capacity(words.len());
            for (i, w) in words.into_iter().enumerate() {
                if i == last || !rng.random_bool(self.dropout_p) {
                    kept.push(w);
                }
            }
            words = kept;
        }
        let last = words.len() - 1;
        let mut i = 0;
        while i + 1 < last {
            if rng.random_bool(self.swap_p) {
                words.swap(i, i + 1);
                i += 2;
            } else {
                i += 1;
            }
        }
        words.join(" ")
    }
}

impl Paraphraser for NoiseParaphraser {
    fn name(&self) -> &str {
        "noise"
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn paraphrase(&self, doc_id: &str, sentences: &[String]) -> Result<Vec<String>> {
        let mut rng = stream_rng(self.seed, &format!("paraphrase/{doc_id}"), 0);
        Ok(sentences
            .iter()
            .map(|s| self.rewrite_sentence(s, &mut rng))
            .collect())
    }
}

/// Adapter to an out-of-process sentence paraphraser speaking
/// `{"sentences": [...]}` -> `{"paraphrases": [...]}`.
pub struct ExternalParaphraser {
    transport: Transport,
    name: String,
}

impl ExternalParaphraser {
    pub fn connect(endpoint: &str) -> Result<Self> {
        let transport = Transport::connect(endpoint)?;
        let name = format!("external ({})", transport.describe());
        Ok(ExternalParaphraser { transport, name })
    }
}

impl Paraphraser for ExternalParaphraser {
    fn name(&self) -> &str {
        &self.name
    }

    fn deterministic(&self) -> bool {
        false
    }

    fn paraphrase(&self, _doc_id: &str, sentences: &[String]) -> Result<Vec<String>> {
        if sentences.is_empty() {
            return Ok(Vec::new());
        }
        let reply = self.transport.call(&json!({ "sentences": sentences }))?;
        reply_array(&reply, "paraphrases")?
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| Error::Adapter(format!("non-string paraphrase {v}")))
            })
            .collect()
    }
}

/// Paraphrases every sentence of `doc` and rejoins with the original
/// separators.
pub fn paraphrase_document(doc: &Document, p: &dyn Paraphraser) -> Result<String> {
    let mut seg = segment(&doc.text);
    let out = p.paraphrase(&doc.id, &seg.sentences)?;
    if out.len() != seg.sentences.len() {
        return Err(Error::ParaphraseLength {
            name: p.name().to_string(),
            expected: seg.sentences.len(),
            got: out.len(),
        });
    }
    seg.sentences = out;
    rejoin(&seg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveInstance {
    pub anchor: Document,
    pub paraphrase_text: String,
    pub y: PairLabel,
}

impl ContrastiveInstance {
    pub fn anchor_label(&self) -> Label {
        // Construction guarantees a labeled anchor.
        self.anchor.label.expect("instance anchors are labeled")
    }
}

pub fn build_instance(doc: &Document, paraphrase_text: String) -> Result<ContrastiveInstance> {
    let label = doc.gold()?;
    if paraphrase_text.trim().is_empty() {
        return Err(Error::Augment {
            id: doc.id.clone(),
            source: Box::new(Error::Adapter("empty paraphrase".into())),
        });
    }
    Ok(ContrastiveInstance {
        anchor: doc.clone(),
        paraphrase_text,
        y: PairLabel::for_anchor(label),
    })
}

fn augment_one(doc: &Document, p: &dyn Paraphraser) -> Result<ContrastiveInstance> {
    let wrap = |e: Error| match e {
        e @ Error::Augment { .. } => e,
        e => Error::Augment {
            id: doc.id.clone(),
            source: Box::new(e),
        },
    };
    let text = paraphrase_document(doc, p).map_err(wrap)?;
    build_instance(doc, text).map_err(wrap)
}

/// One instance per document, in input order.
pub fn augment_corpus(docs: &[Document], p: &dyn Paraphraser) -> Result<Vec<ContrastiveInstance>> {
    docs.iter().map(|d| augment_one(d, p)).collect()
}

/// Same result as [`augment_corpus`], computed on `workers` threads.
pub fn augment_corpus_parallel(
    docs: &[Document],
    p: &dyn Paraphraser,
    workers: usize,
) -> Result<Vec<ContrastiveInstance>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| docs.par_iter().map(|d| augment_one(d, p)).collect())
}

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    id: String,
    anchor_text: String,
    anchor_label: u8,
    paraphrase_text: String,
    y: i8,
}

fn instance_line(inst: &ContrastiveInstance) -> Result<String> {
    let rec = InstanceRecord {
        id: inst.anchor.id.clone(),
        anchor_text: inst.anchor.text.clone(),
        anchor_label: inst.anchor_label().code(),
        paraphrase_text: inst.paraphrase_text.clone(),
        y: inst.y.value(),
    };
    Ok(serde_json::to_string(&rec)?)
}

fn parse_instance(line: &str, line_no: usize) -> Result<ContrastiveInstance> {
    let malformed = |message: String| Error::MalformedRecord {
        line: line_no,
        message,
    };
    let rec: InstanceRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    let label = Label::from_code(rec.anchor_label).ok_or_else(|| Error::UnknownLabel {
        line: line_no,
        value: rec.anchor_label.to_string(),
    })?;
    let y = PairLabel::try_from(rec.y)?;
    if y != PairLabel::for_anchor(label) {
        return Err(malformed(format!(
            "pair label {} inconsistent with anchor label {label}",
            rec.y
        )));
    }
    Ok(ContrastiveInstance {
        anchor: Document::new(rec.id, rec.anchor_text, label),
        paraphrase_text: rec.paraphrase_text,
        y,
    })
}

pub fn write_instances(path: impl AsRef<Path>, instances: &[ContrastiveInstance]) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for inst in instances {
        writeln!(out, "{}", instance_line(inst)?).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_instances(path: impl AsRef<Path>) -> Result<Vec<ContrastiveInstance>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_instance(&line, idx + 1)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentReport {
    pub reused: usize,
    pub generated: usize,
}

/// Number of documents flushed to disk per batch when augmenting to a file.
const FLUSH_EVERY: usize = 64;

/// Augments `docs` into the instance file at `path`, resuming after any
/// complete, matching prefix already present there. A torn trailing line or
/// a record that does not match the next input document ends the reusable
/// prefix; everything after it is discarded and regenerated.
pub fn augment_to_file(
    docs: &[Document],
    p: &dyn Paraphraser,
    path: impl AsRef<Path>,
    workers: usize,
) -> Result<AugmentReport> {
    let path = path.as_ref();
    let (reused, valid_bytes) = if path.exists() {
        reusable_prefix(docs, path)?
    } else {
        (0, 0)
    };

    let mut file = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(false)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    file.set_len(valid_bytes).map_err(|e| Error::io(path, e))?;
    file.seek(SeekFrom::End(0)).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);

    for chunk in docs[reused..].chunks(FLUSH_EVERY) {
        let instances = augment_corpus_parallel(chunk, p, workers)?;
        for inst in &instances {
            writeln!(out, "{}", instance_line(inst)?).map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))?;
    }
    Ok(AugmentReport {
        reused,
        generated: docs.len() - reused,
    })
}

fn reusable_prefix(docs: &[Document], path: &Path) -> Result<(usize, u64)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut count = 0;
    let mut offset = 0usize;
    for (line_no, raw) in bytes.split_inclusive(|&b| b == b'\n').enumerate() {
        if count == docs.len() || raw.last() != Some(&b'\n') {
            break;
        }
        let Ok(line) = std::str::from_utf8(&raw[..raw.len() - 1]) else {
            break;
        };
        let Ok(inst) = parse_instance(line, line_no + 1) else {
            break;
        };
        let doc = &docs[count];
        if inst.anchor.id != doc.id || inst.anchor.text != doc.text || inst.anchor.label != doc.label {
            break;
        }
        count += 1;
        offset += raw.len();
    }
    Ok((count, offset as u64))
}

/// Summary values for a finished augmentation, used by the CLI and tests.
pub fn sentence_count(docs: &[Document]) -> usize {
    docs.iter().map(|d| segment(&d.text).sentences.len()).sum()
}

/// Serializes an instance the way [`write_instances`] does; exposed for
/// tooling that streams instances elsewhere.
pub fn instance_json(inst: &ContrastiveInstance) -> Result<Value> {
    Ok(serde_json::from_str(&instance_line(inst)?)?)
}
