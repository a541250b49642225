//! Shared document encoder and classifier head.
//!
//! Both texts of a contrastive instance pass through the same encoder and
//! the same head; [`Params`] holds exactly one copy of each, so weight
//! sharing holds by construction.
//!
//! The built-in reference encoder is a hashed bag of tokens:
//!
//! ```text
//! tokens -> embedding rows -> mean pool -> affine (d -> d) -> tanh
//! ```
//!
//! and the head is
//!
//! ```text
//! embedding -> linear (d -> hidden) -> tanh -> dropout -> linear (hidden -> 1) -> sigmoid
//! ```
//!
//! Parameters are kept in `f64` for arithmetic but always hold values that
//! are exactly representable as `f32`, which is what checkpoints store.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::augment::ContrastiveInstance;
use crate::error::{Error, Result};
use crate::seed::{fnv1a64, stream_rng};
use crate::transport::{reply_array, Transport};

pub const DEFAULT_DIM: usize = 64;
pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_VOCAB_BUCKETS: usize = 32_768;
pub const DEFAULT_MAX_TOKENS: usize = 4096;
pub const DEFAULT_DROPOUT: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EncoderKind {
    Reference,
    /// Frozen text -> embedding service; only the head is trained.
    ExternalAdapter { endpoint: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub dim: usize,
    pub max_tokens: usize,
    pub vocab_buckets: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            kind: EncoderKind::Reference,
            dim: DEFAULT_DIM,
            max_tokens: DEFAULT_MAX_TOKENS,
            vocab_buckets: DEFAULT_VOCAB_BUCKETS,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("embedding dimension must be >= 1".into()));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be >= 1".into()));
        }
        if self.vocab_buckets == 0 {
            return Err(Error::Config("vocab_buckets must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub hidden_dim: usize,
    pub dropout_p: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            hidden_dim: DEFAULT_HIDDEN,
            dropout_p: DEFAULT_DROPOUT,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!(
                "dropout_p must be in [0, 1), got {}",
                self.dropout_p
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub head: HeadConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.head.validate()
    }
}

/// Lowercased tokens: maximal alphanumeric runs, and every other
/// non-whitespace character on its own.
pub fn token_strings(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            tokens.push(c.to_lowercase().collect());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

pub fn token_bucket(token: &str, vocab_buckets: usize) -> usize {
    (fnv1a64(token.as_bytes()) % vocab_buckets as u64) as usize
}

/// Hashed token ids, truncated to `max_tokens`.
pub fn tokenize(text: &str, max_tokens: usize, vocab_buckets: usize) -> Vec<usize> {
    token_strings(text)
        .iter()
        .take(max_tokens)
        .map(|t| token_bucket(t, vocab_buckets))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Forward-pass mode. Dropout draws its masks from the supplied generator
/// in training mode only.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut dyn rand::RngCore),
}

impl Mode<'_> {
    pub fn reborrow(&mut self) -> Mode<'_> {
        match self {
            Mode::Eval => Mode::Eval,
            Mode::Train(rng) => Mode::Train(&mut **rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// `[vocab_buckets, dim]`
    pub embedding: Vec<f64>,
    /// `[dim, dim]`, output-major
    pub proj_w: Vec<f64>,
    pub proj_b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// `[hidden, dim]`, output-major
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `[hidden]`
    pub w2: Vec<f64>,
    /// `[1]`
    pub b2: Vec<f64>,
}

/// The single parameter set of a model. Also used as the gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub encoder: Option<EncoderParams>,
    pub head: HeadParams,
}

/// A named, shaped view of one parameter tensor.
pub struct TensorRef<'a> {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

impl Params {
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.encoder.dim;
        let h = config.head.hidden_dim;
        let encoder = match config.encoder.kind {
            EncoderKind::Reference => Some(EncoderParams {
                embedding: vec![0.0; config.encoder.vocab_buckets * d],
                proj_w: vec![0.0; d * d],
                proj_b: vec![0.0; d],
            }),
            EncoderKind::ExternalAdapter { .. } => None,
        };
        Params {
            encoder,
            head: HeadParams {
                w1: vec![0.0; h * d],
                b1: vec![0.0; h],
                w2: vec![0.0; h],
                b2: vec![0.0; 1],
            },
        }
    }

    /// Seeded initialization: embedding rows ~ N(0, 1); linear weights and
    /// biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut p = Params::zeros(config);
        let d = config.encoder.dim;
        let h = config.head.hidden_dim;
        let mut rng = stream_rng(seed, "init", 0);
        let uniform = |buf: &mut [f64], fan_in: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new(-bound, bound).expect("finite bound");
            for x in buf {
                *x = dist.sample(rng);
            }
        };
        if let Some(enc) = p.encoder.as_mut() {
            for x in &mut enc.embedding {
                *x = StandardNormal.sample(&mut rng);
            }
            uniform(&mut enc.proj_w, d, &mut rng);
            uniform(&mut enc.proj_b, d, &mut rng);
        }
        uniform(&mut p.head.w1, d, &mut rng);
        uniform(&mut p.head.b1, d, &mut rng);
        uniform(&mut p.head.w2, h, &mut rng);
        uniform(&mut p.head.b2, h, &mut rng);
        p.round_to_f32();
        p
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    pub fn fill(&mut self, value: f64) {
        for t in self.slices_mut() {
            t.fill(value);
        }
    }

    /// Snaps every value to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for t in self.slices_mut() {
            for x in t.iter_mut() {
                *x = f64::from(*x as f32);
            }
        }
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let d = self.head.w1.len() / self.head.b1.len().max(1);
        let h = self.head.b1.len();
        let mut out = Vec::with_capacity(7);
        if let Some(enc) = &self.encoder {
            let dim = enc.proj_b.len();
            out.push(TensorRef {
                name: "encoder.embedding",
                shape: vec![enc.embedding.len() / dim.max(1), dim],
                data: &enc.embedding,
            });
            out.push(TensorRef {
                name: "encoder.proj.weight",
                shape: vec![dim, dim],
                data: &enc.proj_w,
            });
            out.push(TensorRef {
                name: "encoder.proj.bias",
                shape: vec![dim],
                data: &enc.proj_b,
            });
        }
        out.push(TensorRef {
            name: "head.dense.weight",
            shape: vec![h, d],
            data: &self.head.w1,
        });
        out.push(TensorRef {
            name: "head.dense.bias",
            shape: vec![h],
            data: &self.head.b1,
        });
        out.push(TensorRef {
            name: "head.out.weight",
            shape: vec![1, h],
            data: &self.head.w2,
        });
        out.push(TensorRef {
            name: "head.out.bias",
            shape: vec![1],
            data: &self.head.b2,
        });
        out
    }

    /// Mutable tensors in the same order as [`Params::tensors`].
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(7);
        if let Some(enc) = self.encoder.as_mut() {
            out.push(&mut enc.embedding);
            out.push(&mut enc.proj_w);
            out.push(&mut enc.proj_b);
        }
        out.push(&mut self.head.w1);
        out.push(&mut self.head.b1);
        out.push(&mut self.head.w2);
        out.push(&mut self.head.b2);
        out
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.tensors().into_iter().map(|t| t.data).collect()
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adds `scale * other` into `self`.
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }
}

/// Intermediate values of one reference-encoder forward pass.
#[derive(Debug, Clone)]
pub struct EncodeTrace {
    pub tokens: Vec<usize>,
    pub pooled: Vec<f64>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct HeadTrace {
    pub input: Vec<f64>,
    pub hidden: Vec<f64>,
    /// Inverted-dropout multipliers (`0` or `1/(1-p)`); `None` in eval mode.
    pub mask: Option<Vec<f64>>,
    pub prob: f64,
}

pub fn encode_traced(params: &EncoderParams, vocab_buckets: usize, tokens: &[usize]) -> Result<EncodeTrace> {
    if tokens.is_empty() {
        return Err(Error::EmptyTokens);
    }
    let d = params.proj_b.len();
    let mut pooled = vec![0.0; d];
    for &t in tokens {
        if t >= vocab_buckets {
            return Err(Error::TokenOutOfRange {
                id: t,
                buckets: vocab_buckets,
            });
        }
        let row = &params.embedding[t * d..(t + 1) * d];
        for (p, r) in pooled.iter_mut().zip(row) {
            *p += r;
        }
    }
    let inv_n = 1.0 / tokens.len() as f64;
    for p in &mut pooled {
        *p *= inv_n;
    }
    let output = params
        .proj_w
        .chunks_exact(d)
        .zip(&params.proj_b)
        .map(|(row, b)| (b + dot(row, &pooled)).tanh())
        .collect();
    Ok(EncodeTrace {
        tokens: tokens.to_vec(),
        pooled,
        output,
    })
}

pub fn encode(params: &EncoderParams, vocab_buckets: usize, tokens: &[usize]) -> Result<Embedding> {
    encode_traced(params, vocab_buckets, tokens).map(|t| Embedding(t.output))
}

/// Accumulates the encoder gradient for `grad_output = dL/d(embedding)`.
pub fn encode_backward(params: &EncoderParams, trace: &EncodeTrace, grad_output: &[f64], grads: &mut EncoderParams) {
    let d = params.proj_b.len();
    let mut grad_pooled = vec![0.0; d];
    for i in 0..d {
        let out = trace.output[i];
        let dz = grad_output[i] * (1.0 - out * out);
        if dz == 0.0 {
            continue;
        }
        grads.proj_b[i] += dz;
        let w_row = &params.proj_w[i * d..(i + 1) * d];
        let g_row = &mut grads.proj_w[i * d..(i + 1) * d];
        for j in 0..d {
            g_row[j] += dz * trace.pooled[j];
            grad_pooled[j] += dz * w_row[j];
        }
    }
    let inv_n = 1.0 / trace.tokens.len() as f64;
    for &t in &trace.tokens {
        let row = &mut grads.embedding[t * d..(t + 1) * d];
        for (g, gp) in row.iter_mut().zip(&grad_pooled) {
            *g += gp * inv_n;
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

pub fn classify_traced(head: &HeadParams, dropout_p: f64, emb: &[f64], mode: Mode<'_>) -> Result<HeadTrace> {
    let h = head.b1.len();
    let d = head.w1.len() / h;
    if emb.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: emb.len(),
        });
    }
    let hidden: Vec<f64> = head
        .w1
        .chunks_exact(d)
        .zip(&head.b1)
        .map(|(row, b)| (b + dot(row, emb)).tanh())
        .collect();
    let mask = match mode {
        Mode::Train(rng) if dropout_p > 0.0 => {
            let keep = 1.0 - dropout_p;
            let scale = 1.0 / keep;
            Some(
                (0..h)
                    .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
                    .collect::<Vec<_>>(),
            )
        }
        _ => None,
    };
    let logit = head.b2[0]
        + match &mask {
            Some(m) => hidden.iter().zip(m).zip(&head.w2).map(|((a, m), w)| a * m * w).sum(),
            None => dot(&hidden, &head.w2),
        };
    Ok(HeadTrace {
        input: emb.to_vec(),
        hidden,
        mask,
        prob: sigmoid(logit),
    })
}

pub fn classify(head: &HeadParams, dropout_p: f64, emb: &Embedding, mode: Mode<'_>) -> Result<f64> {
    classify_traced(head, dropout_p, &emb.0, mode).map(|t| t.prob)
}

/// Accumulates head gradients for `grad_prob = dL/dp` and returns
/// dL/d(embedding).
pub fn classify_backward(head: &HeadParams, trace: &HeadTrace, grad_prob: f64, grads: &mut HeadParams) -> Vec<f64> {
    let h = head.b1.len();
    let d = trace.input.len();
    let p = trace.prob;
    let dz2 = grad_prob * p * (1.0 - p);
    grads.b2[0] += dz2;
    let mut grad_input = vec![0.0; d];
    for k in 0..h {
        let m = trace.mask.as_ref().map_or(1.0, |m| m[k]);
        let a = trace.hidden[k];
        grads.w2[k] += dz2 * a * m;
        let dz1 = dz2 * head.w2[k] * m * (1.0 - a * a);
        if dz1 == 0.0 {
            continue;
        }
        grads.b1[k] += dz1;
        let w_row = &head.w1[k * d..(k + 1) * d];
        let g_row = &mut grads.w1[k * d..(k + 1) * d];
        for j in 0..d {
            g_row[j] += dz1 * trace.input[j];
            grad_input[j] += dz1 * w_row[j];
        }
    }
    grad_input
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Client for an out-of-process encoder speaking
/// `{"texts": [...]}` -> `{"embeddings": [[...], ...]}`. Replies are cached
/// per text, which also makes repeated lookups deterministic.
pub struct ExternalEncoder {
    transport: Transport,
    dim: usize,
    cache: Mutex<HashMap<String, Vec<f64>>>,
}

impl ExternalEncoder {
    pub fn connect(endpoint: &str, dim: usize) -> Result<Self> {
        Ok(ExternalEncoder {
            transport: Transport::connect(endpoint)?,
            dim,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        let missing: Vec<&str> = {
            let cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
            let mut seen = std::collections::HashSet::new();
            texts
                .iter()
                .copied()
                .filter(|t| !cache.contains_key(*t) && seen.insert(*t))
                .collect()
        };
        if !missing.is_empty() {
            let reply = self.transport.call(&json!({ "texts": missing }))?;
            let rows = reply_array(&reply, "embeddings")?;
            if rows.len() != missing.len() {
                return Err(Error::Adapter(format!(
                    "encoder returned {} embeddings for {} texts",
                    rows.len(),
                    missing.len()
                )));
            }
            let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
            for (text, row) in missing.iter().zip(rows) {
                let values: Vec<f64> = row
                    .as_array()
                    .ok_or_else(|| Error::Adapter(format!("embedding is not an array: {row}")))?
                    .iter()
                    .map(|v| v.as_f64().filter(|x| x.is_finite()))
                    .collect::<Option<_>>()
                    .ok_or_else(|| Error::Adapter("embedding has non-finite or non-numeric entries".into()))?;
                if values.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        got: values.len(),
                    });
                }
                cache.insert(text.to_string(), values);
            }
        }
        let cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        Ok(texts.iter().map(|t| Embedding(cache[*t].clone())).collect())
    }
}

/// Encoder + head with their configuration. Parameters are read-only during
/// forward passes, so a `&Model` can be shared across evaluation threads.
pub struct Model {
    pub config: ModelConfig,
    pub params: Params,
    external: Option<ExternalEncoder>,
}

/// Everything needed to backpropagate one text through the model.
#[derive(Debug, Clone)]
pub struct TextTrace {
    pub encoder: Option<EncodeTrace>,
    pub head: HeadTrace,
}

impl TextTrace {
    pub fn embedding(&self) -> &[f64] {
        &self.head.input
    }

    pub fn prob(&self) -> f64 {
        self.head.prob
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairOutput {
    pub emb_anchor: Embedding,
    pub emb_para: Embedding,
    pub prob_anchor: f64,
    pub prob_para: f64,
}

#[derive(Debug, Clone)]
pub struct PairTrace {
    pub anchor: TextTrace,
    pub para: TextTrace,
}

impl PairTrace {
    pub fn output(&self) -> PairOutput {
        PairOutput {
            emb_anchor: Embedding(self.anchor.embedding().to_vec()),
            emb_para: Embedding(self.para.embedding().to_vec()),
            prob_anchor: self.anchor.prob(),
            prob_para: self.para.prob(),
        }
    }
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = Params::init(&config, seed);
        Model::from_params(config, params)
    }

    pub fn from_params(config: ModelConfig, params: Params) -> Result<Self> {
        config.validate()?;
        let expected = Params::zeros(&config);
        let shapes = |p: &Params| p.tensors().into_iter().map(|t| (t.name, t.shape)).collect::<Vec<_>>();
        if shapes(&expected) != shapes(&params) {
            return Err(Error::Config("parameter shapes do not match model configuration".into()));
        }
        let external = match &config.encoder.kind {
            EncoderKind::Reference => None,
            EncoderKind::ExternalAdapter { endpoint } => {
                Some(ExternalEncoder::connect(endpoint, config.encoder.dim)?)
            }
        };
        Ok(Model {
            config,
            params,
            external,
        })
    }

    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        tokenize(text, self.config.encoder.max_tokens, self.config.encoder.vocab_buckets)
    }

    pub fn encode_text(&self, text: &str) -> Result<(Option<EncodeTrace>, Vec<f64>)> {
        match (&self.params.encoder, &self.external) {
            (Some(enc), _) => {
                let trace = encode_traced(enc, self.config.encoder.vocab_buckets, &self.tokenize(text))?;
                let out = trace.output.clone();
                Ok((Some(trace), out))
            }
            (None, Some(ext)) => Ok((None, ext.embed(&[text])?.remove(0).0)),
            (None, None) => Err(Error::Config("model has no encoder".into())),
        }
    }

    pub fn embed(&self, text: &str) -> Result<Embedding> {
        self.encode_text(text).map(|(_, e)| Embedding(e))
    }

    pub fn forward_text(&self, text: &str, mode: Mode<'_>) -> Result<TextTrace> {
        let (encoder, emb) = self.encode_text(text)?;
        let head = classify_traced(&self.params.head, self.config.head.dropout_p, &emb, mode)?;
        Ok(TextTrace { encoder, head })
    }

    /// Machine probability for `text` in eval mode.
    pub fn score(&self, text: &str) -> Result<f64> {
        self.forward_text(text, Mode::Eval).map(|t| t.prob())
    }

    pub fn forward_pair_traced(&self, inst: &ContrastiveInstance, mut mode: Mode<'_>) -> Result<PairTrace> {
        let anchor = self.forward_text(&inst.anchor.text, mode.reborrow())?;
        let para = self.forward_text(&inst.paraphrase_text, mode)?;
        Ok(PairTrace { anchor, para })
    }

    pub fn forward_pair(&self, inst: &ContrastiveInstance, mode: Mode<'_>) -> Result<PairOutput> {
        self.forward_pair_traced(inst, mode).map(|t| t.output())
    }

    /// Accumulates parameter gradients for one text given dL/d(embedding)
    /// from the loss and dL/dp from its classification term.
    pub fn backward_text(&self, trace: &TextTrace, grad_emb: &[f64], grad_prob: f64, grads: &mut Params) {
        let mut g = classify_backward(&self.params.head, &trace.head, grad_prob, &mut grads.head);
        for (a, b) in g.iter_mut().zip(grad_emb) {
            *a += b;
        }
        if let (Some(enc), Some(etrace), Some(genc)) =
            (&self.params.encoder, &trace.encoder, grads.encoder.as_mut())
        {
            encode_backward(enc, etrace, &g, genc);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Label};
    use crate::augment::build_instance;
    use rand::SeedableRng;

    fn small_config(d: usize, h: usize, v: usize) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                kind: EncoderKind::Reference,
                dim: d,
                max_tokens: 16,
                vocab_buckets: v,
            },
            head: HeadConfig {
                hidden_dim: h,
                dropout_p: 0.5,
            },
        }
    }

    #[test]
    fn tokenizer_rule() {
        assert_eq!(token_strings("Hello, world"), vec!["hello", ",", "world"]);
        assert_eq!(tokenize("Hello, world", 4096, 100).len(), 3);
        assert_eq!(tokenize("a b c d", 1, 100).len(), 1);
        assert_eq!(tokenize("Same text.", 10, 97), tokenize("Same text.", 10, 97));
        assert_eq!(token_strings("Don't stop!!"), vec!["don", "'", "t", "stop", "!", "!"]);
        // Published FNV-1a 64 vectors: "a" -> 0xaf63dc4c8601ec8c, "foobar" -> 0x85944171f73967e8.
        assert_eq!(tokenize("A FOOBAR", 4096, 1000), vec![996, 968]);
    }

    #[test]
    fn zero_params_give_zero_embedding_and_half_probability() {
        let cfg = small_config(4, 3, 10);
        let p = Params::zeros(&cfg);
        let e = encode(p.encoder.as_ref().unwrap(), 10, &[1, 2, 3]).unwrap();
        assert_eq!(e.0, vec![0.0; 4]);
        let prob = classify(&p.head, 0.0, &e, Mode::Eval).unwrap();
        assert_eq!(prob, 0.5);
    }

    #[test]
    fn encode_is_order_invariant_and_shaped() {
        let cfg = small_config(5, 3, 11);
        let p = Params::init(&cfg, 1);
        let enc = p.encoder.as_ref().unwrap();
        let a = encode(enc, 11, &[1, 7, 3, 3]).unwrap();
        let b = encode(enc, 11, &[3, 1, 3, 7]).unwrap();
        assert_eq!(a.dim(), 5);
        for (x, y) in a.0.iter().zip(&b.0) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(matches!(encode(enc, 11, &[11]), Err(Error::TokenOutOfRange { .. })));
        assert!(matches!(encode(enc, 11, &[]), Err(Error::EmptyTokens)));
    }

    #[test]
    fn dropout_only_in_train_mode() {
        let mut cfg = small_config(4, 6, 10);
        let p = Params::init(&cfg, 2);
        let e = Embedding(vec![0.3, -0.2, 0.9, 0.1]);
        let eval1 = classify(&p.head, 0.6, &e, Mode::Eval).unwrap();
        let eval2 = classify(&p.head, 0.6, &e, Mode::Eval).unwrap();
        assert_eq!(eval1, eval2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let no_drop = classify(&p.head, 0.0, &e, Mode::Train(&mut rng)).unwrap();
        assert_eq!(no_drop, eval1);
        assert!(matches!(
            classify(&p.head, 0.6, &Embedding(vec![1.0; 3]), Mode::Eval),
            Err(Error::DimensionMismatch { expected: 4, got: 3 })
        ));
        cfg.head.dropout_p = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn classify_stays_inside_unit_interval() {
        let cfg = small_config(2, 2, 4);
        let mut p = Params::zeros(&cfg);
        p.head.b2[0] = 1e6;
        let hi = classify(&p.head, 0.0, &Embedding(vec![0.0; 2]), Mode::Eval).unwrap();
        p.head.b2[0] = -1e6;
        let lo = classify(&p.head, 0.0, &Embedding(vec![0.0; 2]), Mode::Eval).unwrap();
        assert!(hi < 1.0 && lo > 0.0);
    }

    #[test]
    fn identical_texts_share_outputs() {
        let cfg = small_config(6, 4, 50);
        let model = Model::new(cfg, 9).unwrap();
        let doc = Document::new("x", "the same words", Label::Human);
        let inst = build_instance(&doc, doc.text.clone()).unwrap();
        let out = model.forward_pair(&inst, Mode::Eval).unwrap();
        assert_eq!(out.emb_anchor, out.emb_para);
        assert_eq!(out.prob_anchor, out.prob_para);
    }

    #[test]
    fn init_depends_on_seed_and_is_f32_exact() {
        let cfg = small_config(4, 4, 8);
        let a = Params::init(&cfg, 1);
        assert_eq!(a, Params::init(&cfg, 1));
        assert_ne!(a, Params::init(&cfg, 2));
        for s in a.slices() {
            assert!(s.iter().all(|x| f64::from(*x as f32) == *x));
        }
    }

    #[test]
    fn one_encoder_and_one_head_tensor_set() {
        let p = Params::zeros(&small_config(4, 4, 8));
        let names: Vec<_> = p.tensors().iter().map(|t| t.name).collect();
        let mut dedup = names.clone();
        dedup.dedup();
        assert_eq!(names, dedup);
        assert_eq!(names.iter().filter(|n| n.starts_with("encoder.embedding")).count(), 1);
        assert_eq!(names.iter().filter(|n| n.starts_with("head.dense.weight")).count(), 1);
    }
}
