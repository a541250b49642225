//! Training configuration and its flat `key = value` file format.
//!
//! ```text
//! # comments and blank lines are ignored
//! learning_rate = 1e-5
//! micro_batch = 2
//! accumulation_steps = 8
//! contrastive_mode = standard-cosine
//! ```
//!
//! Every key is optional; unknown keys are an error.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{
    EncoderConfig, EncoderKind, HeadConfig, ModelConfig, DEFAULT_DIM, DEFAULT_DROPOUT, DEFAULT_HIDDEN,
    DEFAULT_MAX_TOKENS, DEFAULT_VOCAB_BUCKETS,
};
use crate::objective::{ContrastiveMode, LossWeights, Objective};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    /// Validation accuracy, ties broken by lower validation loss.
    ValAccuracy,
    ValLoss,
}

impl FromStr for Monitor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "val_accuracy" => Ok(Monitor::ValAccuracy),
            "val_loss" => Ok(Monitor::ValLoss),
            other => Err(Error::Config(format!("unknown monitor {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub micro_batch: usize,
    pub accumulation_steps: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub max_tokens: usize,
    pub dropout_p: f64,
    pub weights: LossWeights,
    pub mode: ContrastiveMode,
    pub swap_cls: bool,
    pub seed: u64,
    pub monitor: Monitor,
    /// Reshuffle training instances every epoch.
    pub shuffle: bool,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub vocab_buckets: usize,
    pub encoder: EncoderKind,
    pub threshold: f64,
    /// Threads for validation scoring. Results do not depend on it.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            weight_decay: 0.01,
            micro_batch: 2,
            accumulation_steps: 8,
            patience: 10,
            max_epochs: 100,
            max_tokens: DEFAULT_MAX_TOKENS,
            dropout_p: DEFAULT_DROPOUT,
            weights: LossWeights::default(),
            mode: ContrastiveMode::PaperEq1,
            swap_cls: false,
            seed: 0,
            monitor: Monitor::ValAccuracy,
            shuffle: true,
            embed_dim: DEFAULT_DIM,
            hidden_dim: DEFAULT_HIDDEN,
            vocab_buckets: DEFAULT_VOCAB_BUCKETS,
            encoder: EncoderKind::Reference,
            threshold: 0.5,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn effective_batch(&self) -> usize {
        self.micro_batch * self.accumulation_steps
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                kind: self.encoder.clone(),
                dim: self.embed_dim,
                max_tokens: self.max_tokens,
                vocab_buckets: self.vocab_buckets,
            },
            head: HeadConfig {
                hidden_dim: self.hidden_dim,
                dropout_p: self.dropout_p,
            },
        }
    }

    pub fn objective(&self) -> Objective {
        Objective {
            weights: self.weights,
            mode: self.mode,
            swap_cls: self.swap_cls,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("micro_batch", self.micro_batch),
            ("accumulation_steps", self.accumulation_steps),
            ("patience", self.patience),
            ("max_epochs", self.max_epochs),
            ("workers", self.workers),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config("learning_rate must be finite and >= 0".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be finite and >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config("threshold must be in [0, 1]".into()));
        }
        self.objective().validate()?;
        self.model_config().validate()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses `key = value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut margin: Option<f64> = None;
        let mut mode_name: Option<String> = None;
        let mut endpoint: Option<String> = None;
        let mut encoder_name: Option<String> = None;

        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", idx + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: String| Error::Config(format!("line {}: {key}: {e}", idx + 1));
            macro_rules! num {
                ($t:ty) => {
                    value.parse::<$t>().map_err(|e| bad(e.to_string()))?
                };
            }
            match key {
                "learning_rate" => cfg.learning_rate = num!(f64),
                "weight_decay" => cfg.weight_decay = num!(f64),
                "micro_batch" => cfg.micro_batch = num!(usize),
                "accumulation_steps" => cfg.accumulation_steps = num!(usize),
                "patience" => cfg.patience = num!(usize),
                "max_epochs" => cfg.max_epochs = num!(usize),
                "max_tokens" => cfg.max_tokens = num!(usize),
                "dropout_p" => cfg.dropout_p = num!(f64),
                "alpha" => cfg.weights.alpha = num!(f64),
                "beta" => cfg.weights.beta = num!(f64),
                "gamma" => cfg.weights.gamma = num!(f64),
                "contrastive_mode" => mode_name = Some(value.to_string()),
                "margin" => margin = Some(num!(f64)),
                "swap_cls" => cfg.swap_cls = num!(bool),
                "seed" => cfg.seed = num!(u64),
                "monitor" => cfg.monitor = value.parse().map_err(|e: Error| bad(e.to_string()))?,
                "shuffle" => cfg.shuffle = num!(bool),
                "embed_dim" => cfg.embed_dim = num!(usize),
                "hidden_dim" => cfg.hidden_dim = num!(usize),
                "vocab_buckets" => cfg.vocab_buckets = num!(usize),
                "encoder" => encoder_name = Some(value.to_string()),
                "encoder_endpoint" => endpoint = Some(value.to_string()),
                "threshold" => cfg.threshold = num!(f64),
                "workers" => cfg.workers = num!(usize),
                other => return Err(Error::Config(format!("line {}: unknown key {other:?}", idx + 1))),
            }
        }

        cfg.mode = match (mode_name.as_deref(), margin) {
            (None | Some("paper-eq1"), None) => ContrastiveMode::PaperEq1,
            (None | Some("paper-eq1"), Some(_)) => {
                return Err(Error::Config("margin applies only to contrastive_mode = standard-cosine".into()))
            }
            (Some("standard-cosine"), m) => ContrastiveMode::StandardCosine {
                margin: m.unwrap_or(0.0),
            },
            (Some(other), _) => return Err(Error::Config(format!("unknown contrastive_mode {other:?}"))),
        };
        cfg.encoder = match (encoder_name.as_deref(), endpoint) {
            (None | Some("reference"), None) => EncoderKind::Reference,
            (Some("external"), Some(endpoint)) => EncoderKind::ExternalAdapter { endpoint },
            (Some("external"), None) => {
                return Err(Error::Config("encoder = external requires encoder_endpoint".into()))
            }
            (None | Some("reference"), Some(_)) => {
                return Err(Error::Config("encoder_endpoint requires encoder = external".into()))
            }
            (Some(other), _) => return Err(Error::Config(format!("unknown encoder {other:?}"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Renders the configuration in the file format accepted by [`TrainConfig::parse`].
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("learning_rate", format!("{:e}", self.learning_rate));
        kv("weight_decay", self.weight_decay.to_string());
        kv("micro_batch", self.micro_batch.to_string());
        kv("accumulation_steps", self.accumulation_steps.to_string());
        kv("patience", self.patience.to_string());
        kv("max_epochs", self.max_epochs.to_string());
        kv("max_tokens", self.max_tokens.to_string());
        kv("dropout_p", self.dropout_p.to_string());
        kv("alpha", self.weights.alpha.to_string());
        kv("beta", self.weights.beta.to_string());
        kv("gamma", self.weights.gamma.to_string());
        kv("contrastive_mode", self.mode.name().to_string());
        if let ContrastiveMode::StandardCosine { margin } = self.mode {
            kv("margin", margin.to_string());
        }
        kv("swap_cls", self.swap_cls.to_string());
        kv("seed", self.seed.to_string());
        kv(
            "monitor",
            match self.monitor {
                Monitor::ValAccuracy => "val_accuracy",
                Monitor::ValLoss => "val_loss",
            }
            .to_string(),
        );
        kv("shuffle", self.shuffle.to_string());
        kv("embed_dim", self.embed_dim.to_string());
        kv("hidden_dim", self.hidden_dim.to_string());
        kv("vocab_buckets", self.vocab_buckets.to_string());
        match &self.encoder {
            EncoderKind::Reference => kv("encoder", "reference".into()),
            EncoderKind::ExternalAdapter { endpoint } => {
                kv("encoder", "external".into());
                kv("encoder_endpoint", endpoint.clone());
            }
        }
        kv("threshold", self.threshold.to_string());
        kv("workers", self.workers.to_string());
        s
    }
}
