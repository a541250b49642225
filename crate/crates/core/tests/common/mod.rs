//! Test-only oracles. Nothing here calls the analytic backward pass.
#![allow(dead_code)]

use mgtd::augment::{build_instance, ContrastiveInstance};
use mgtd::config::TrainConfig;
use mgtd::corpus::{Document, Label};
use mgtd::model::{EncoderConfig, EncoderKind, HeadConfig, Mode, Model, ModelConfig, Params};
use mgtd::objective::{ContrastiveMode, LossWeights, Objective};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-4;

/// Composite loss of one instance as a plain function of the parameters.
/// Dropout masks are reproduced by reseeding the generator on every call.
pub fn loss_at(model_cfg: &ModelConfig, params: &Params, inst: &ContrastiveInstance, obj: &Objective, mask_seed: Option<u64>) -> f64 {
    let model = Model::from_params(model_cfg.clone(), params.clone()).unwrap();
    let out = match mask_seed {
        Some(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            model.forward_pair(inst, Mode::Train(&mut rng)).unwrap()
        }
        None => model.forward_pair(inst, Mode::Eval).unwrap(),
    };
    obj.loss(&out, inst).unwrap().total
}

/// Central differences over every parameter.
pub fn numeric_gradient(model_cfg: &ModelConfig, params: &Params, inst: &ContrastiveInstance, obj: &Objective, mask_seed: Option<u64>) -> Vec<Vec<f64>> {
    let n_tensors = params.slices().len();
    let mut out = Vec::with_capacity(n_tensors);
    for t in 0..n_tensors {
        let len = params.slices()[t].len();
        let mut g = vec![0.0; len];
        for i in 0..len {
            let mut plus = params.clone();
            plus.slices_mut()[t][i] += FD_STEP;
            let mut minus = params.clone();
            minus.slices_mut()[t][i] -= FD_STEP;
            let lp = loss_at(model_cfg, &plus, inst, obj, mask_seed);
            let lm = loss_at(model_cfg, &minus, inst, obj, mask_seed);
            g[i] = (lp - lm) / (2.0 * FD_STEP);
        }
        out.push(g);
    }
    out
}

pub fn random_word<R: Rng>(rng: &mut R) -> String {
    let len = rng.random_range(1..=6);
    (0..len).map(|_| (b'a' + rng.random_range(0..26u8)) as char).collect()
}

pub fn random_text<R: Rng>(rng: &mut R, max_words: usize) -> String {
    let n = rng.random_range(1..=max_words);
    (0..n).map(|_| random_word(rng)).collect::<Vec<_>>().join(" ")
}

pub struct GradCase {
    pub model_cfg: ModelConfig,
    pub params: Params,
    pub inst: ContrastiveInstance,
    pub mask_seed: Option<u64>,
}

/// Random small instance: d <= 8, hidden <= 6, <= 5 tokens per text.
pub fn random_grad_case(seed: u64) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(2..=8);
    let model_cfg = ModelConfig {
        encoder: EncoderConfig {
            kind: EncoderKind::Reference,
            dim,
            max_tokens: 5,
            vocab_buckets: rng.random_range(4..=12),
        },
        head: HeadConfig {
            hidden_dim: rng.random_range(2..=6),
            dropout_p: if rng.random_bool(0.5) { 0.3 } else { 0.0 },
        },
    };
    let params = Params::init(&model_cfg, rng.random());
    let label = if rng.random_bool(0.5) { Label::Machine } else { Label::Human };
    let doc = Document::new(format!("g{seed}"), random_text(&mut rng, 5), label);
    let inst = build_instance(&doc, random_text(&mut rng, 5)).unwrap();
    let mask_seed = (model_cfg.head.dropout_p > 0.0).then(|| rng.random());
    GradCase {
        model_cfg,
        params,
        inst,
        mask_seed,
    }
}

/// Analytic gradient through the library's backward pass.
pub fn analytic_gradient(case: &GradCase, obj: &Objective) -> Vec<Vec<f64>> {
    let model = Model::from_params(case.model_cfg.clone(), case.params.clone()).unwrap();
    let trace = match case.mask_seed {
        Some(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            model.forward_pair_traced(&case.inst, Mode::Train(&mut rng)).unwrap()
        }
        None => model.forward_pair_traced(&case.inst, Mode::Eval).unwrap(),
    };
    let (_, g) = obj.loss_with_grad(&trace.output(), &case.inst).unwrap();
    let mut grads = case.params.zeros_like();
    model.backward_text(&trace.anchor, &g.emb_anchor, g.prob_anchor, &mut grads);
    model.backward_text(&trace.para, &g.emb_para, g.prob_para, &mut grads);
    grads.slices().iter().map(|s| s.to_vec()).collect()
}

/// Relative error with a floor on the denominator so that two essentially
/// zero gradients compare equal.
pub fn relative_error(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < 1e-7 {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

pub fn objectives() -> Vec<Objective> {
    vec![
        Objective {
            weights: LossWeights::default(),
            mode: ContrastiveMode::PaperEq1,
            swap_cls: false,
        },
        Objective {
            weights: LossWeights::default(),
            mode: ContrastiveMode::StandardCosine { margin: 0.1 },
            swap_cls: false,
        },
    ]
}

/// Worst relative error over all parameters for one case.
pub fn worst_gradient_error(case: &GradCase, obj: &Objective) -> f64 {
    let a = analytic_gradient(case, obj);
    let n = numeric_gradient(&case.model_cfg, &case.params, &case.inst, obj, case.mask_seed);
    a.iter()
        .flatten()
        .zip(n.iter().flatten())
        .map(|(&x, &y)| relative_error(x, y))
        .fold(0.0, f64::max)
}

pub fn small_train_config() -> TrainConfig {
    TrainConfig {
        embed_dim: 8,
        hidden_dim: 8,
        vocab_buckets: 256,
        max_tokens: 64,
        ..Default::default()
    }
}

/// Plain AdamW over flat vectors, written out longhand.
pub struct RefAdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl RefAdamW {
    pub fn new(n: usize) -> Self {
        RefAdamW { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, p: &mut [f64], g: &[f64], lr: f64, wd: f64) {
        self.t += 1;
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        for i in 0..p.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g[i] * g[i];
            let mhat = self.m[i] / (1.0 - b1.powi(self.t));
            let vhat = self.v[i] / (1.0 - b2.powi(self.t));
            p[i] = p[i] * (1.0 - lr * wd) - lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

pub fn flat(p: &Params) -> Vec<f64> {
    p.slices().iter().flat_map(|s| s.iter().copied()).collect()
}

/// Gradient of one instance's loss, flattened.
pub fn per_instance_grad(model: &Model, inst: &ContrastiveInstance, cfg: &TrainConfig) -> Vec<f64> {
    let trace = model.forward_pair_traced(inst, Mode::Eval).unwrap();
    let (_, g) = cfg.objective().loss_with_grad(&trace.output(), inst).unwrap();
    let mut grads = model.params.zeros_like();
    model.backward_text(&trace.anchor, &g.emb_anchor, g.prob_anchor, &mut grads);
    model.backward_text(&trace.para, &g.emb_para, g.prob_para, &mut grads);
    flat(&grads)
}

