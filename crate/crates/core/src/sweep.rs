//! One-axis hyperparameter sweeps with multi-seed averaging.
//!
//! Every (value, seed) cell trains from scratch with its own seed and is
//! evaluated on the held-out test set; rows report the mean (and population
//! standard deviation) over seeds. Cells are independent, so they can run
//! in parallel and in any order without changing the table.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::ContrastiveInstance;
use crate::config::TrainConfig;
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::metrics::{aggregate_seeds, Metrics, SeedSummary};
use crate::trainer::{evaluate, fit, RunRecord};

/// Micro-batch size held fixed when sweeping the effective batch size.
pub const SWEEP_MICRO_BATCH: usize = 2;

pub const DEFAULT_SEEDS: [u64; 3] = [0, 1, 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    MaxTokens,
    DropoutP,
    EffectiveBatch,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::MaxTokens => "max_tokens",
            SweepAxis::DropoutP => "dropout_p",
            SweepAxis::EffectiveBatch => "effective_batch",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            SweepAxis::MaxTokens => "Max Sen Length",
            SweepAxis::DropoutP => "CLS Dropout",
            SweepAxis::EffectiveBatch => "Effective Batch Size",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepAxis::MaxTokens => vec![128.0, 256.0, 512.0, 1024.0, 2048.0, 4096.0],
            SweepAxis::DropoutP => vec![0.0, 0.2, 0.4, 0.6, 0.9],
            SweepAxis::EffectiveBatch => vec![2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0],
        }
    }

    pub fn format_value(self, v: f64) -> String {
        match self {
            SweepAxis::DropoutP => format!("{v}"),
            _ => format!("{}", v as u64),
        }
    }

    fn integer(self, v: f64) -> Result<usize> {
        if v.fract() != 0.0 || v < 1.0 {
            return Err(Error::Config(format!("{} value must be a positive integer, got {v}", self.name())));
        }
        Ok(v as usize)
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &TrainConfig, value: f64) -> Result<TrainConfig> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::MaxTokens => cfg.max_tokens = self.integer(value)?,
            SweepAxis::DropoutP => cfg.dropout_p = value,
            SweepAxis::EffectiveBatch => {
                let eff = self.integer(value)?;
                if eff % SWEEP_MICRO_BATCH != 0 {
                    return Err(Error::Config(format!(
                        "effective batch {eff} is not a multiple of the micro-batch {SWEEP_MICRO_BATCH}"
                    )));
                }
                cfg.micro_batch = SWEEP_MICRO_BATCH;
                cfg.accumulation_steps = eff / SWEEP_MICRO_BATCH;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max_tokens" | "max-tokens" => Ok(SweepAxis::MaxTokens),
            "dropout_p" | "dropout" => Ok(SweepAxis::DropoutP),
            "effective_batch" | "effective-batch" | "batch" => Ok(SweepAxis::EffectiveBatch),
            other => Err(Error::Config(format!("unknown sweep axis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub base: TrainConfig,
    pub seeds: Vec<u64>,
    /// Cells trained concurrently.
    pub workers: usize,
}

impl SweepSpec {
    pub fn new(axis: SweepAxis, base: TrainConfig) -> Self {
        SweepSpec {
            axis,
            values: axis.default_values(),
            base,
            seeds: DEFAULT_SEEDS.to_vec(),
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("sweep needs at least one seed".into()));
        }
        self.base.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub value: f64,
    pub seed: u64,
    pub metrics: Option<Metrics>,
    pub record: Option<RunRecord>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub summary: Option<SeedSummary>,
    pub cells: Vec<CellResult>,
    pub error: Option<String>,
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub seeds: Vec<u64>,
    pub rows: Vec<SweepRow>,
}

fn run_cell(
    axis: SweepAxis,
    base: &TrainConfig,
    value: f64,
    seed: u64,
    train: &[ContrastiveInstance],
    val: &[Document],
    test: &[Document],
) -> CellResult {
    let outcome = (|| {
        let mut cfg = axis.apply(base, value)?;
        cfg.seed = seed;
        let fitted = fit(train, val, &cfg)?;
        let eval = evaluate(&fitted.model, test, cfg.threshold)?;
        let mut record = fitted.record;
        record.test = Some(eval.metrics);
        Ok::<_, Error>((eval.metrics, record))
    })();
    match outcome {
        Ok((metrics, record)) => CellResult {
            value,
            seed,
            metrics: Some(metrics),
            record: Some(record),
            error: None,
        },
        Err(e) => CellResult {
            value,
            seed,
            metrics: None,
            record: None,
            error: Some(e.to_string()),
        },
    }
}

pub fn run_sweep(
    spec: &SweepSpec,
    train: &[ContrastiveInstance],
    val: &[Document],
    test: &[Document],
) -> Result<SweepTable> {
    spec.validate()?;
    let cells: Vec<(f64, u64)> = spec
        .values
        .iter()
        .flat_map(|&v| spec.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<CellResult> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(v, s)| run_cell(spec.axis, &spec.base, v, s, train, val, test))
            .collect()
    });

    let mut rows: Vec<SweepRow> = results
        .chunks(spec.seeds.len())
        .zip(&spec.values)
        .map(|(cells, &value)| {
            let ok: Vec<Metrics> = cells.iter().filter_map(|c| c.metrics).collect();
            let errors: Vec<String> = cells
                .iter()
                .filter_map(|c| c.error.as_ref().map(|e| format!("seed {}: {e}", c.seed)))
                .collect();
            SweepRow {
                value,
                summary: aggregate_seeds(&ok).ok(),
                cells: cells.to_vec(),
                error: (!errors.is_empty()).then(|| errors.join("; ")),
                best: false,
            }
        })
        .collect();

    let best = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.error.is_none())
        .filter_map(|(i, r)| r.summary.map(|s| (i, s.accuracy.mean)))
        .fold(None::<(usize, f64)>, |acc, (i, a)| match acc {
            Some((_, best)) if best >= a => acc,
            _ => Some((i, a)),
        });
    if let Some((i, _)) = best {
        rows[i].best = true;
    }
    Ok(SweepTable {
        axis: spec.axis,
        seeds: spec.seeds.clone(),
        rows,
    })
}

pub const TABLE_COLUMNS: [&str; 3] = ["Macro-f1", "Micro-f1", "Accuracy"];

impl SweepTable {
    /// Aligned plain-text table with scores in percent; the best row is
    /// marked with `*`.
    pub fn to_text(&self) -> String {
        let header = [self.axis.title(), TABLE_COLUMNS[0], TABLE_COLUMNS[1], TABLE_COLUMNS[2]];
        let mut lines: Vec<[String; 4]> = vec![header.map(str::to_string)];
        for row in &self.rows {
            let value = format!("{}{}", self.axis.format_value(row.value), if row.best { " *" } else { "" });
            let cells = match (&row.summary, &row.error) {
                (Some(s), None) => [s.macro_f1, s.micro_f1, s.accuracy]
                    .map(|m| format!("{:.2} ± {:.2}", 100.0 * m.mean, 100.0 * m.std)),
                (_, Some(e)) => [format!("error: {e}"), String::new(), String::new()],
                (None, None) => [String::from("-"), String::from("-"), String::from("-")],
            };
            lines.push([value, cells[0].clone(), cells[1].clone(), cells[2].clone()]);
        }
        let widths: Vec<usize> = (0..4)
            .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, line) in lines.iter().enumerate() {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .map(|(cell, &w)| format!("{cell:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
            if i == 0 {
                let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 6));
            }
        }
        out
    }

    /// One JSON object per row.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let stat = |f: fn(&SeedSummary) -> f64| row.summary.as_ref().map(f);
            let obj = serde_json::json!({
                "axis": self.axis.name(),
                "value": row.value,
                "macro_f1": stat(|s| s.macro_f1.mean),
                "micro_f1": stat(|s| s.micro_f1.mean),
                "accuracy": stat(|s| s.accuracy.mean),
                "macro_f1_std": stat(|s| s.macro_f1.std),
                "micro_f1_std": stat(|s| s.micro_f1.std),
                "accuracy_std": stat(|s| s.accuracy.std),
                "seeds": self.seeds,
                "best": row.best,
                "error": row.error,
            });
            let _ = writeln!(out, "{obj}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_batch_maps_to_accumulation() {
        let base = TrainConfig::default();
        let accum: Vec<usize> = SweepAxis::EffectiveBatch
            .default_values()
            .into_iter()
            .map(|v| SweepAxis::EffectiveBatch.apply(&base, v).unwrap())
            .inspect(|c| assert_eq!(c.micro_batch, 2))
            .map(|c| c.accumulation_steps)
            .collect();
        assert_eq!(accum, vec![1, 2, 4, 8, 16, 32, 64]);
        assert!(SweepAxis::EffectiveBatch.apply(&base, 3.0).is_err());
    }

    #[test]
    fn axis_values_and_parsing() {
        assert_eq!(SweepAxis::DropoutP.default_values().len(), 5);
        assert_eq!(SweepAxis::MaxTokens.default_values().len(), 6);
        assert_eq!("dropout".parse::<SweepAxis>().unwrap(), SweepAxis::DropoutP);
        assert!("lr".parse::<SweepAxis>().is_err());
        assert_eq!(SweepAxis::MaxTokens.apply(&TrainConfig::default(), 256.0).unwrap().max_tokens, 256);
        assert!(SweepAxis::DropoutP.apply(&TrainConfig::default(), 1.0).is_err());
        assert!(SweepAxis::MaxTokens.apply(&TrainConfig::default(), 12.5).is_err());
    }
}
