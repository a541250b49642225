//! Training loop: AdamW with decoupled weight decay, micro-batches with
//! gradient accumulation, per-epoch validation and early stopping.
//!
//! Randomness comes from three seeded streams (parameter init, per-epoch
//! shuffling, dropout masks), so a run is a pure function of
//! `(config, data)`.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::ContrastiveInstance;
use crate::config::{Monitor, TrainConfig, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
use crate::corpus::{Document, Label, Prediction};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, Metrics};
use crate::model::{Mode, Model, Params};
use crate::objective::{classification_loss, LossBreakdown, Objective};
use crate::seed::stream_rng;

/// Decoupled-weight-decay Adam.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Params,
    v: Params,
}

const PAR_CHUNK: usize = 1 << 14;

impl AdamW {
    pub fn new(params: &Params, lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            weight_decay,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// One update. Parameters are snapped back to `f32` precision afterwards.
    pub fn step(&mut self, params: &mut Params, grads: &Params) {
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        let lr = self.lr;
        let decay = 1.0 - lr * self.weight_decay;
        let update = |p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                let next = p[i] * decay - lr * m_hat / (v_hat.sqrt() + eps);
                p[i] = f64::from(next as f32);
            }
        };
        let tensors = params
            .slices_mut()
            .into_iter()
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut())
            .zip(grads.slices());
        for (((p, m), v), g) in tensors {
            if p.len() >= 4 * PAR_CHUNK {
                p.par_chunks_mut(PAR_CHUNK)
                    .zip(m.par_chunks_mut(PAR_CHUNK))
                    .zip(v.par_chunks_mut(PAR_CHUNK))
                    .zip(g.par_chunks(PAR_CHUNK))
                    .for_each(|(((p, m), v), g)| update(p, m, v, g));
            } else {
                update(p, m, v, g);
            }
        }
    }
}

/// Loss components averaged over the instances of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// Mean loss components over all instances of the epoch.
    pub loss: LossBreakdown,
    pub optimizer_steps: usize,
    pub steps: Vec<StepRecord>,
}

/// Owns the model and optimizer state of one training run.
pub struct Trainer {
    pub model: Model,
    pub optimizer: AdamW,
    config: TrainConfig,
    objective: Objective,
    dropout_rng: ChaCha8Rng,
    grads: Params,
    global_step: usize,
}

impl Trainer {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = Model::new(config.model_config(), config.seed)?;
        Ok(Trainer::with_model(config, model))
    }

    pub fn with_model(config: &TrainConfig, model: Model) -> Self {
        let optimizer = AdamW::new(&model.params, config.learning_rate, config.weight_decay);
        let grads = model.params.zeros_like();
        Trainer {
            model,
            optimizer,
            config: config.clone(),
            objective: config.objective(),
            dropout_rng: stream_rng(config.seed, "dropout", 0),
            grads,
            global_step: 0,
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn global_step(&self) -> usize {
        self.global_step
    }

    /// Training order for `epoch` (1-based).
    pub fn epoch_order(&self, n: usize, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        if self.config.shuffle {
            order.shuffle(&mut stream_rng(self.config.seed, "shuffle", epoch as u64));
        }
        order
    }

    /// One pass over `instances`. Each micro-batch's mean loss is scaled by
    /// `1 / accumulation_steps` (or by `1 / k` for a trailing group of
    /// `k < accumulation_steps` micro-batches) and accumulated; the optimizer
    /// steps once per group.
    pub fn train_epoch(&mut self, instances: &[ContrastiveInstance], epoch: usize) -> Result<EpochStats> {
        if instances.is_empty() {
            return Err(Error::Config("cannot train on an empty instance list".into()));
        }
        let order = self.epoch_order(instances.len(), epoch);
        let micro: Vec<&[usize]> = order.chunks(self.config.micro_batch).collect();
        let mut epoch_loss = LossBreakdown::default();
        let mut steps = Vec::new();

        for group in micro.chunks(self.config.accumulation_steps) {
            let group_scale = 1.0 / group.len() as f64;
            self.grads.fill(0.0);
            let mut step_loss = LossBreakdown::default();
            let group_size: usize = group.iter().map(|mb| mb.len()).sum();
            for mb in group {
                let scale = group_scale / mb.len() as f64;
                for &i in mb.iter() {
                    let loss = self.accumulate(&instances[i], scale).map_err(|e| match e {
                        Error::NonFiniteLoss { value, .. } => Error::NonFiniteLoss {
                            step: self.global_step + 1,
                            value,
                            ids: mb.iter().map(|&j| instances[j].anchor.id.clone()).collect(),
                        },
                        e => e,
                    })?;
                    step_loss.add_scaled(&loss, 1.0 / group_size as f64);
                    epoch_loss.add_scaled(&loss, 1.0 / instances.len() as f64);
                }
            }
            self.optimizer.step(&mut self.model.params, &self.grads);
            self.global_step += 1;
            steps.push(StepRecord {
                step: self.global_step,
                loss: step_loss,
            });
        }
        Ok(EpochStats {
            loss: epoch_loss,
            optimizer_steps: steps.len(),
            steps,
        })
    }

    fn accumulate(&mut self, inst: &ContrastiveInstance, scale: f64) -> Result<LossBreakdown> {
        // NaN parameters show up first as a NaN embedding norm.
        let nan_as_loss = |e| match e {
            Error::DegenerateEmbedding(n) if !n.is_finite() => Error::NonFiniteLoss {
                step: 0,
                value: n,
                ids: Vec::new(),
            },
            e => e,
        };
        let trace = self
            .model
            .forward_pair_traced(inst, Mode::Train(&mut self.dropout_rng))
            .map_err(nan_as_loss)?;
        let (loss, g) = self
            .objective
            .loss_with_grad(&trace.output(), inst)
            .map_err(nan_as_loss)?;
        if !loss.total.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: 0,
                value: loss.total,
                ids: Vec::new(),
            });
        }
        let scaled = |v: &[f64]| v.iter().map(|x| x * scale).collect::<Vec<_>>();
        self.model
            .backward_text(&trace.anchor, &scaled(&g.emb_anchor), g.prob_anchor * scale, &mut self.grads);
        self.model
            .backward_text(&trace.para, &scaled(&g.emb_para), g.prob_para * scale, &mut self.grads);
        Ok(loss)
    }
}

/// Number of optimizer steps in one epoch over `n` instances.
pub fn steps_per_epoch(n: usize, micro_batch: usize, accumulation_steps: usize) -> usize {
    n.div_ceil(micro_batch).div_ceil(accumulation_steps)
}

/// Scores, metrics and mean BCE of a model on labeled documents.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub loss: f64,
    pub scores: Vec<f64>,
}

pub fn score_documents(model: &Model, docs: &[Document]) -> Result<Vec<f64>> {
    docs.par_iter().map(|d| model.score(&d.text)).collect()
}

pub fn evaluate(model: &Model, docs: &[Document], threshold: f64) -> Result<Evaluation> {
    let gold: Vec<Label> = docs.iter().map(Document::gold).collect::<Result<_>>()?;
    let scores = score_documents(model, docs)?;
    let pred: Vec<Label> = scores.iter().map(|&s| Label::from_score(s, threshold)).collect();
    let metrics = compute_metrics(&gold, &pred)?;
    let loss = scores
        .iter()
        .zip(&gold)
        .map(|(&s, &g)| classification_loss(s, g))
        .sum::<f64>()
        / docs.len() as f64;
    Ok(Evaluation {
        metrics,
        loss,
        scores,
    })
}

/// Eval-mode predictions; `label == machine` iff `score >= threshold`.
pub fn predict(model: &Model, docs: &[Document], threshold: f64) -> Result<Vec<Prediction>> {
    let scores = score_documents(model, docs)?;
    Ok(docs
        .iter()
        .zip(scores)
        .map(|(d, score)| Prediction {
            id: d.id.clone(),
            label: Label::from_score(score, threshold),
            score,
        })
        .collect())
}

/// What the early-stopping monitor sees after an epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub accuracy: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStopState {
    pub best: Option<Observation>,
    pub best_epoch: usize,
    pub epochs_since_improvement: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Waiting,
    Stop,
}

#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    monitor: Monitor,
    state: EarlyStopState,
}

impl EarlyStopping {
    pub fn new(patience: usize, monitor: Monitor) -> Self {
        EarlyStopping {
            patience,
            monitor,
            state: EarlyStopState {
                best: None,
                best_epoch: 0,
                epochs_since_improvement: 0,
            },
        }
    }

    pub fn state(&self) -> EarlyStopState {
        self.state
    }

    fn improves(&self, obs: &Observation) -> bool {
        let Some(best) = self.state.best else {
            return true;
        };
        match self.monitor {
            Monitor::ValAccuracy => {
                obs.accuracy > best.accuracy || (obs.accuracy == best.accuracy && obs.loss < best.loss)
            }
            Monitor::ValLoss => obs.loss < best.loss,
        }
    }

    pub fn observe(&mut self, epoch: usize, obs: Observation) -> Verdict {
        if self.improves(&obs) {
            self.state.best = Some(obs);
            self.state.best_epoch = epoch;
            self.state.epochs_since_improvement = 0;
            Verdict::Improved
        } else {
            self.state.epochs_since_improvement += 1;
            if self.state.epochs_since_improvement >= self.patience {
                Verdict::Stop
            } else {
                Verdict::Waiting
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct EarlyStopOutcome<S> {
    pub best: S,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub history: Vec<Observation>,
}

/// Runs `epoch_fn` for epochs `1..=max_epochs` until the monitor runs out of
/// patience, keeping the snapshot returned by the best epoch.
pub fn run_with_early_stopping<S>(
    max_epochs: usize,
    patience: usize,
    monitor: Monitor,
    mut epoch_fn: impl FnMut(usize) -> Result<(Observation, S)>,
) -> Result<EarlyStopOutcome<S>> {
    let mut stopper = EarlyStopping::new(patience, monitor);
    let mut best = None;
    let mut history = Vec::new();
    let mut stopped_epoch = 0;
    for epoch in 1..=max_epochs {
        let (obs, snapshot) = epoch_fn(epoch)?;
        history.push(obs);
        stopped_epoch = epoch;
        match stopper.observe(epoch, obs) {
            Verdict::Improved => best = Some(snapshot),
            Verdict::Waiting => {}
            Verdict::Stop => break,
        }
    }
    let best = best.ok_or_else(|| Error::Config("max_epochs must be >= 1".into()))?;
    Ok(EarlyStopOutcome {
        best,
        best_epoch: stopper.state().best_epoch,
        stopped_epoch,
        history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(rename = "L_con")]
    pub con: f64,
    #[serde(rename = "L_cls_pos")]
    pub cls_pos: f64,
    #[serde(rename = "L_cls_neg")]
    pub cls_neg: f64,
    pub val_accuracy: f64,
    pub val_macro_f1: f64,
    pub val_micro_f1: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub test: Option<Metrics>,
    pub wall_clock_secs: f64,
}

impl RunRecord {
    /// Equality ignoring wall-clock time.
    pub fn same_outcome(&self, other: &RunRecord) -> bool {
        RunRecord {
            wall_clock_secs: 0.0,
            ..self.clone()
        } == RunRecord {
            wall_clock_secs: 0.0,
            ..other.clone()
        }
    }
}

pub struct FitOutcome {
    /// The best-epoch model, not the last one.
    pub model: Model,
    pub record: RunRecord,
    pub steps: Vec<StepRecord>,
}

pub fn fit(train: &[ContrastiveInstance], val: &[Document], config: &TrainConfig) -> Result<FitOutcome> {
    if val.is_empty() {
        return Err(Error::Config("validation set is empty".into()));
    }
    let mut trainer = Trainer::new(config)?;
    fit_with(&mut trainer, train, val)
}

pub fn fit_with(trainer: &mut Trainer, train: &[ContrastiveInstance], val: &[Document]) -> Result<FitOutcome> {
    let config = trainer.config().clone();
    let started = Instant::now();
    let mut epochs = Vec::new();
    let mut steps = Vec::new();
    let outcome = run_with_early_stopping(config.max_epochs, config.patience, config.monitor, |epoch| {
        let stats = trainer.train_epoch(train, epoch)?;
        let eval = evaluate(&trainer.model, val, config.threshold)?;
        steps.extend(stats.steps);
        epochs.push(EpochRecord {
            epoch,
            train_loss: stats.loss.total,
            con: stats.loss.con,
            cls_pos: stats.loss.cls_pos,
            cls_neg: stats.loss.cls_neg,
            val_accuracy: eval.metrics.accuracy,
            val_macro_f1: eval.metrics.macro_f1,
            val_micro_f1: eval.metrics.micro_f1,
            val_loss: eval.loss,
        });
        let obs = Observation {
            accuracy: eval.metrics.accuracy,
            loss: eval.loss,
        };
        Ok((obs, trainer.model.params.clone()))
    })?;
    let model = Model::from_params(trainer.model.config.clone(), outcome.best)?;
    Ok(FitOutcome {
        model,
        record: RunRecord {
            config_hash: config.hash(),
            seed: config.seed,
            epochs,
            best_epoch: outcome.best_epoch,
            stopped_epoch: outcome.stopped_epoch,
            test: None,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
        steps,
    })
}
