//! Losses: pair contrastive loss, binary cross-entropy, and their weighted
//! sum.
//!
//! The composite loss of one instance is
//!
//! ```text
//! L = alpha * L_con(anchor, paraphrase, y)
//!   + beta  * BCE(p_anchor, gold label of the anchor)
//!   + gamma * BCE(p_paraphrase, machine)
//! ```
//!
//! Paraphrases are machine-produced, hence the fixed machine target for the
//! last term. `swap_cls` exchanges which of the two BCE terms `beta` and
//! `gamma` weight.
//!
//! Embeddings are normalized only inside the cosine.

use serde::{Deserialize, Serialize};

use crate::augment::{ContrastiveInstance, PairLabel};
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::model::{Embedding, PairOutput};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-7;

const MIN_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.7,
            beta: 0.8,
            gamma: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ContrastiveMode {
    /// `(1 - y) * cos + y * max(0, cos)`, taken literally.
    ///
    /// Note that this pushes pairs apart for both labels: with `y = +1` it is
    /// minimized by any `cos <= 0`, and with `y = -1` it becomes
    /// `2 cos - max(0, cos)`, minimized at `cos = -1`.
    #[default]
    PaperEq1,
    /// `1 - cos` for `y = +1`, `max(0, cos - margin)` for `y = -1`.
    StandardCosine { margin: f64 },
}

impl ContrastiveMode {
    pub fn name(&self) -> &'static str {
        match self {
            ContrastiveMode::PaperEq1 => "paper-eq1",
            ContrastiveMode::StandardCosine { .. } => "standard-cosine",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ContrastiveMode::StandardCosine { margin } = self {
            if !(0.0..=1.0).contains(margin) {
                return Err(Error::Config(format!("margin must be in [0, 1], got {margin}")));
            }
        }
        Ok(())
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_pair(x1: &[f64], x2: &[f64]) -> Result<(f64, f64)> {
    if x1.len() != x2.len() {
        return Err(Error::DimensionMismatch {
            expected: x1.len(),
            got: x2.len(),
        });
    }
    let (n1, n2) = (norm(x1), norm(x2));
    for n in [n1, n2] {
        if n.is_nan() || n < MIN_NORM {
            return Err(Error::DegenerateEmbedding(n));
        }
    }
    Ok((n1, n2))
}

pub fn cosine(x1: &Embedding, x2: &Embedding) -> Result<f64> {
    cosine_slices(&x1.0, &x2.0)
}

pub fn cosine_slices(x1: &[f64], x2: &[f64]) -> Result<f64> {
    let (n1, n2) = check_pair(x1, x2)?;
    let dot: f64 = x1.iter().zip(x2).map(|(a, b)| a * b).sum();
    Ok((dot / (n1 * n2)).clamp(-1.0, 1.0))
}

/// Cosine and its gradients with respect to both inputs.
pub fn cosine_with_grad(x1: &[f64], x2: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (n1, n2) = check_pair(x1, x2)?;
    let dot: f64 = x1.iter().zip(x2).map(|(a, b)| a * b).sum();
    let c = dot / (n1 * n2);
    let g1 = x1
        .iter()
        .zip(x2)
        .map(|(a, b)| b / (n1 * n2) - c * a / (n1 * n1))
        .collect();
    let g2 = x1
        .iter()
        .zip(x2)
        .map(|(a, b)| a / (n1 * n2) - c * b / (n2 * n2))
        .collect();
    Ok((c.clamp(-1.0, 1.0), g1, g2))
}

/// Contrastive loss as a function of the cosine value.
pub fn contrastive_from_cos(c: f64, y: PairLabel, mode: ContrastiveMode) -> f64 {
    let y = y.as_f64();
    match mode {
        ContrastiveMode::PaperEq1 => (1.0 - y) * c + y * c.max(0.0),
        ContrastiveMode::StandardCosine { margin } => {
            if y > 0.0 {
                1.0 - c
            } else {
                (c - margin).max(0.0)
            }
        }
    }
}

/// d(contrastive)/d(cos). At the hinge points the right-hand derivative is
/// used, except that `max(0, .)` at exactly zero contributes nothing.
pub fn contrastive_dcos(c: f64, y: PairLabel, mode: ContrastiveMode) -> f64 {
    let y = y.as_f64();
    match mode {
        ContrastiveMode::PaperEq1 => (1.0 - y) + if c > 0.0 { y } else { 0.0 },
        ContrastiveMode::StandardCosine { margin } => {
            if y > 0.0 {
                -1.0
            } else if c > margin {
                1.0
            } else {
                0.0
            }
        }
    }
}

pub fn contrastive_loss(x1: &Embedding, x2: &Embedding, y: PairLabel, mode: ContrastiveMode) -> Result<f64> {
    Ok(contrastive_from_cos(cosine(x1, x2)?, y, mode))
}

fn target(gold: Label) -> f64 {
    match gold {
        Label::Machine => 1.0,
        Label::Human => 0.0,
    }
}

pub fn classification_loss(prob: f64, gold: Label) -> f64 {
    let p = prob.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let g = target(gold);
    -(g * p.ln() + (1.0 - g) * (1.0 - p).ln())
}

/// dBCE/dp; zero where the clamp is active.
pub fn classification_dprob(prob: f64, gold: Label) -> f64 {
    if !(PROB_EPS..=1.0 - PROB_EPS).contains(&prob) {
        return 0.0;
    }
    let g = target(gold);
    -g / prob + (1.0 - g) / (1.0 - prob)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    #[serde(rename = "L_total")]
    pub total: f64,
    #[serde(rename = "L_con")]
    pub con: f64,
    #[serde(rename = "L_cls_pos")]
    pub cls_pos: f64,
    #[serde(rename = "L_cls_neg")]
    pub cls_neg: f64,
}

impl LossBreakdown {
    /// Weighted sum of already-computed components.
    pub fn compose(con: f64, cls_pos: f64, cls_neg: f64, w: &LossWeights) -> Self {
        LossBreakdown {
            total: w.alpha * con + w.beta * cls_pos + w.gamma * cls_neg,
            con,
            cls_pos,
            cls_neg,
        }
    }

    pub fn add_scaled(&mut self, other: &LossBreakdown, scale: f64) {
        self.total += scale * other.total;
        self.con += scale * other.con;
        self.cls_pos += scale * other.cls_pos;
        self.cls_neg += scale * other.cls_neg;
    }
}

/// Gradients of the composite loss with respect to the forward outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGrads {
    pub emb_anchor: Vec<f64>,
    pub emb_para: Vec<f64>,
    pub prob_anchor: f64,
    pub prob_para: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Objective {
    pub weights: LossWeights,
    pub mode: ContrastiveMode,
    /// Weight the paraphrase BCE with `beta` and the anchor BCE with `gamma`.
    pub swap_cls: bool,
}

impl Objective {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.mode.validate()
    }

    pub fn loss(&self, out: &PairOutput, inst: &ContrastiveInstance) -> Result<LossBreakdown> {
        self.loss_with_grad(out, inst).map(|(l, _)| l)
    }

    pub fn loss_with_grad(&self, out: &PairOutput, inst: &ContrastiveInstance) -> Result<(LossBreakdown, PairGrads)> {
        let w = &self.weights;
        let (c, dc1, dc2) = cosine_with_grad(&out.emb_anchor.0, &out.emb_para.0)?;
        let con = contrastive_from_cos(c, inst.y, self.mode);
        let dcon = w.alpha * contrastive_dcos(c, inst.y, self.mode);

        let anchor_gold = inst.anchor_label();
        let bce_anchor = classification_loss(out.prob_anchor, anchor_gold);
        let bce_para = classification_loss(out.prob_para, Label::Machine);
        let (w_anchor, w_para) = if self.swap_cls {
            (w.gamma, w.beta)
        } else {
            (w.beta, w.gamma)
        };
        let (cls_pos, cls_neg) = if self.swap_cls {
            (bce_para, bce_anchor)
        } else {
            (bce_anchor, bce_para)
        };
        let breakdown = LossBreakdown::compose(con, cls_pos, cls_neg, w);
        let grads = PairGrads {
            emb_anchor: dc1.iter().map(|g| dcon * g).collect(),
            emb_para: dc2.iter().map(|g| dcon * g).collect(),
            prob_anchor: w_anchor * classification_dprob(out.prob_anchor, anchor_gold),
            prob_para: w_para * classification_dprob(out.prob_para, Label::Machine),
        };
        Ok((breakdown, grads))
    }
}

/// Composite loss with the default BCE assignment.
pub fn total_loss(
    out: &PairOutput,
    inst: &ContrastiveInstance,
    weights: LossWeights,
    mode: ContrastiveMode,
) -> Result<LossBreakdown> {
    Objective {
        weights,
        mode,
        swap_cls: false,
    }
    .loss(out, inst)
}
