//! Binary classification metrics and multi-seed aggregation.

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct ClassCounts {
    tp: usize,
    fp: usize,
    fn_: usize,
}

/// F1 from counts; a class with no gold and no predicted members scores 0.
fn f1(c: ClassCounts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * c.tp) as f64 / denom as f64
    }
}

pub fn compute_metrics(gold: &[Label], pred: &[Label]) -> Result<Metrics> {
    if gold.len() != pred.len() {
        return Err(Error::Metrics(format!(
            "{} gold labels but {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::Metrics("no labels to score".into()));
    }
    let mut per_class = [ClassCounts::default(); 2];
    let mut correct = 0usize;
    for (&g, &p) in gold.iter().zip(pred) {
        let (gi, pi) = (usize::from(g.code()), usize::from(p.code()));
        if gi == pi {
            correct += 1;
            per_class[gi].tp += 1;
        } else {
            per_class[pi].fp += 1;
            per_class[gi].fn_ += 1;
        }
    }
    let pooled = per_class.iter().fold(ClassCounts::default(), |acc, c| ClassCounts {
        tp: acc.tp + c.tp,
        fp: acc.fp + c.fp,
        fn_: acc.fn_ + c.fn_,
    });
    Ok(Metrics {
        accuracy: correct as f64 / gold.len() as f64,
        macro_f1: (f1(per_class[0]) + f1(per_class[1])) / 2.0,
        micro_f1: f1(pooled),
        n: gold.len(),
    })
}

/// Convenience wrapper over 0/1 codes.
pub fn compute_metrics_codes(gold: &[u8], pred: &[u8]) -> Result<Metrics> {
    let conv = |v: &[u8]| -> Result<Vec<Label>> {
        v.iter()
            .map(|&c| Label::from_code(c).ok_or_else(|| Error::Metrics(format!("label code {c} is not 0 or 1"))))
            .collect()
    };
    compute_metrics(&conv(gold)?, &conv(pred)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SeedSummary {
    pub accuracy: MetricStats,
    pub macro_f1: MetricStats,
    pub micro_f1: MetricStats,
    pub runs: usize,
}

fn stats(values: impl Iterator<Item = f64> + Clone) -> MetricStats {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MetricStats { mean, std: var.sqrt() }
}

pub fn aggregate_seeds(runs: &[Metrics]) -> Result<SeedSummary> {
    if runs.is_empty() {
        return Err(Error::Metrics("cannot aggregate zero runs".into()));
    }
    Ok(SeedSummary {
        accuracy: stats(runs.iter().map(|m| m.accuracy)),
        macro_f1: stats(runs.iter().map(|m| m.macro_f1)),
        micro_f1: stats(runs.iter().map(|m| m.micro_f1)),
        runs: runs.len(),
    })
}
