//! Arabic poetry language-model pipeline.
//!
//! ```text
//! corpus (TSV) → preprocess → WordPiece → encoder (MLM pretraining)
//!                                       → classification heads → evaluation
//! ```
//!
//! Everything runs in 64-bit floats on a small tape-based reverse-mode
//! differentiation engine. Batch work (per-example gradients, evaluation)
//! is spread over rayon when the `parallel` feature is enabled and falls
//! back to a plain loop otherwise; both paths reduce in example order and
//! produce bit-identical results.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod model;
pub mod numerics;
pub mod preprocess;
pub mod tokenizer;
pub mod training;

pub use corpus::{CorpusStore, LabelTaxonomy, TaskId, VerseRecord};
pub use error::{Error, Result};
pub use evaluation::EvalReport;
pub use exec::Exec;
pub use model::{ModelConfig, ModelParams, PositionalMode};
pub use numerics::{Tape, Tensor, Var};
pub use preprocess::PreprocessedVerse;
pub use tokenizer::{TokenSequence, Vocab};
pub use training::{Checkpoint, TrainConfig};
