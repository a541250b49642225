//! `mgtd` command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use mgtd::augment::{augment_to_file, load_instances, ExternalParaphraser, IdentityParaphraser, NoiseParaphraser};
use mgtd::checkpoint::{self, CheckpointHeader};
use mgtd::corpus::{load_dataset, split_stats, write_dataset, write_predictions, Schema};
use mgtd::sweep::{run_sweep, SweepAxis, SweepSpec, DEFAULT_SEEDS};
use mgtd::trainer::{evaluate, fit, predict};
use mgtd::{synthetic, ContrastiveInstance, Error, Paraphraser, Result, TrainConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "mgtd", version, about = "Contrastive machine-generated text detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParaphraserKind {
    Identity,
    Noise,
    External,
}

#[derive(Subcommand)]
enum Command {
    /// Pair every document with a sentence-level paraphrase.
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        paraphraser: ParaphraserKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Command line or http(s) URL of an external paraphraser.
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Train on an augmented instance file with early stopping on a labeled validation set.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a prediction file for a (possibly unlabeled) dataset.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print metrics for a labeled dataset as JSON.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Train one model per (axis value, seed) and tabulate test metrics.
    Sweep {
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated axis values; defaults to the standard grid for the axis.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        out: PathBuf,
        /// Augmented training instances.
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Generate a synthetic two-source corpus split into train/val/test files.
    Synth {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label and generator counts of a dataset.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn jsonl<T: serde::Serialize>(rows: &[T]) -> Result<String> {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}

/// Writes to stdout; a closed pipe (`mgtd ... | head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Config(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<TrainConfig> {
    let mut cfg = match path {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_training_instances(path: &Path) -> Result<Vec<ContrastiveInstance>> {
    load_instances(path).map_err(|e| match e {
        Error::MalformedRecord { line, message } if message.contains("anchor_text") => Error::MalformedRecord {
            line,
            message: format!("{message} (expected an augmented instance file; run `mgtd augment` first)"),
        },
        e => e,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Augment {
            input,
            out,
            paraphraser,
            seed,
            endpoint,
            workers,
        } => {
            let docs = load_dataset(&input, Schema::Train)?;
            let p: Box<dyn Paraphraser> = match (paraphraser, endpoint) {
                (ParaphraserKind::Identity, _) => Box::new(IdentityParaphraser),
                (ParaphraserKind::Noise, _) => Box::new(NoiseParaphraser::new(seed)),
                (ParaphraserKind::External, Some(ep)) => Box::new(ExternalParaphraser::connect(&ep)?),
                (ParaphraserKind::External, None) => {
                    return Err(Error::Config("--paraphraser external requires --endpoint".into()))
                }
            };
            let report = augment_to_file(&docs, p.as_ref(), &out, workers)?;
            eprintln!(
                "augmented {} documents ({} reused, {} generated) -> {}",
                docs.len(),
                report.reused,
                report.generated,
                out.display()
            );
        }
        Command::Train {
            train,
            val,
            config,
            out,
            seed,
        } => {
            let cfg = load_config(config.as_deref(), seed)?;
            let instances = load_training_instances(&train)?;
            let val_docs = load_dataset(&val, Schema::Train)?;
            create_dir(&out)?;
            let fitted = fit(&instances, &val_docs, &cfg)?;
            let rec = &fitted.record;
            write_file(&out.join("metrics.jsonl"), &jsonl(&rec.epochs)?)?;
            write_file(&out.join("steps.jsonl"), &jsonl(&fitted.steps)?)?;
            write_file(&out.join("config.txt"), &cfg.to_file_string())?;
            write_file(&out.join("run.json"), &serde_json::to_string_pretty(rec)?)?;
            checkpoint::save(
                out.join("model.safetensors"),
                &fitted.model,
                &CheckpointHeader::new(&cfg, Some(rec.clone())),
            )?;
            let best = &rec.epochs[rec.best_epoch - 1];
            eprintln!(
                "best epoch {} of {}: val accuracy {:.4}, macro-f1 {:.4} ({:.1}s)",
                rec.best_epoch, rec.stopped_epoch, best.val_accuracy, best.val_macro_f1, rec.wall_clock_secs
            );
        }
        Command::Predict { ckpt, input, out } => {
            let (model, header) = checkpoint::load(&ckpt)?;
            let docs = load_dataset(&input, Schema::Unlabeled)?;
            let preds = predict(&model, &docs, header.config.threshold)?;
            write_predictions(&out, &preds)?;
            let machine = preds.iter().filter(|p| p.label == mgtd::Label::Machine).count();
            eprintln!("{} predictions ({machine} machine) -> {}", preds.len(), out.display());
        }
        Command::Evaluate { ckpt, input } => {
            let (model, header) = checkpoint::load(&ckpt)?;
            let docs = load_dataset(&input, Schema::Train)?;
            let eval = evaluate(&model, &docs, header.config.threshold)?;
            let m = eval.metrics;
            let out = json!({
                "accuracy": m.accuracy,
                "macro_f1": m.macro_f1,
                "micro_f1": m.micro_f1,
                "n": m.n,
                "loss": eval.loss,
            });
            emit(&format!("{out}\n"))?;
        }
        Command::Sweep {
            axis,
            values,
            config,
            seeds,
            out,
            train,
            val,
            test,
            workers,
        } => {
            let base = load_config(config.as_deref(), None)?;
            let spec = SweepSpec {
                values: values.unwrap_or_else(|| axis.default_values()),
                seeds: seeds.unwrap_or_else(|| DEFAULT_SEEDS.to_vec()),
                workers,
                ..SweepSpec::new(axis, base)
            };
            let instances = load_training_instances(&train)?;
            let val_docs = load_dataset(&val, Schema::Train)?;
            let test_docs = load_dataset(&test, Schema::Train)?;
            create_dir(&out)?;
            let started = Instant::now();
            let table = run_sweep(&spec, &instances, &val_docs, &test_docs)?;
            let text = table.to_text();
            write_file(&out.join(format!("sweep_{}.txt", axis.name())), &text)?;
            write_file(&out.join(format!("sweep_{}.jsonl", axis.name())), &table.to_jsonl())?;
            emit(&text)?;
            let failed: Vec<&str> = table.rows.iter().filter_map(|r| r.error.as_deref()).collect();
            eprintln!(
                "{} rows x {} seeds in {:.1}s -> {}",
                table.rows.len(),
                table.seeds.len(),
                started.elapsed().as_secs_f64(),
                out.display()
            );
            if !failed.is_empty() {
                return Err(Error::Metrics(format!("{} sweep rows failed: {}", failed.len(), failed.join(" | "))));
            }
        }
        Command::Synth { n, seed, out } => {
            let docs = synthetic::generate(n, seed);
            let (train, rest) = synthetic::split_holdout(&docs, 0.2, seed);
            let (val, test) = rest.split_at(rest.len() / 2);
            create_dir(&out)?;
            for (name, part) in [("train", &train[..]), ("val", val), ("test", test)] {
                write_dataset(out.join(format!("{name}.jsonl")), part)?;
            }
            eprintln!(
                "{} train, {} val, {} test documents -> {}",
                train.len(),
                val.len(),
                test.len(),
                out.display()
            );
        }
        Command::Stats { input } => {
            let docs = load_dataset(&input, Schema::Unlabeled)?;
            emit(&format!("{}\n", serde_json::to_string_pretty(&split_stats(&docs))?))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "mgtd: error: {e}");
            ExitCode::FAILURE
        }
    }
}
