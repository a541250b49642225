//! Contrastive machine-generated text detection.
//!
//! The pipeline has four stages:
//!
//! 1. [`augment`]: split each training document into sentences, paraphrase
//!    them one by one and rejoin them with the original separators, giving
//!    one (original, paraphrase) pair per document.
//! 2. [`model`]: a single encoder and classifier head shared by both texts
//!    of a pair.
//! 3. [`objective`]: a cosine contrastive loss on the pair embeddings plus
//!    weighted binary cross-entropy on both texts.
//! 4. [`trainer`]: AdamW with gradient accumulation and early stopping on
//!    validation accuracy; [`metrics`] and [`sweep`] report results.

pub mod augment;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod seed;
pub mod sweep;
pub mod synthetic;
pub mod trainer;
pub mod transport;

pub use augment::{
    augment_corpus, build_instance, paraphrase_document, rejoin, segment, ContrastiveInstance, ExternalParaphraser,
    IdentityParaphraser, NoiseParaphraser, PairLabel, Paraphraser, SegmentedDocument,
};
pub use checkpoint::CheckpointHeader;
pub use config::{Monitor, TrainConfig};
pub use corpus::{load_dataset, write_predictions, Document, Label, Prediction, Schema};
pub use error::{Error, Result};
pub use metrics::{aggregate_seeds, compute_metrics, Metrics, SeedSummary};
pub use model::{Embedding, Mode, Model, ModelConfig, PairOutput, Params};
pub use objective::{contrastive_loss, cosine, total_loss, ContrastiveMode, LossBreakdown, LossWeights, Objective};
pub use sweep::{run_sweep, SweepAxis, SweepSpec, SweepTable};
pub use trainer::{evaluate, fit, predict, FitOutcome, RunRecord, Trainer};
