//! Semi-supervised sentiment classification with LLM-generated strong views.
//!
//! The crate is organized around the stages of an experiment:
//!
//! - [`corpus`]: loading labeled corpora, stratified splits, labeled regimes
//!   and alternating labeled/unlabeled batches.
//! - [`augmentor`]: weak synonym augmentation, entity- and concept-based
//!   prompts, an OpenAI-compatible client, the candidate cache and an offline
//!   mock.
//! - [`encoder`]: tokenizer, vocabulary and a compact embedding-bag classifier
//!   with analytic gradients and a binary checkpoint format.
//! - [`objectives`]: supervised, thresholded consistency and class re-assembly
//!   losses.
//! - [`trainer`]: AdamW, epochs, early stopping and evaluation.
//! - [`metrics`]: accuracy, macro-F1, confusion matrices and token reports.
//! - [`cli`]: config files, manifests and the batch commands behind the `scr`
//!   binary.
//!
//! [`synthetic`] generates template corpora used by the examples and tests.

pub mod augmentor;
pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod metrics;
pub mod objectives;
pub mod seed;
pub mod synthetic;
pub mod trainer;

pub use corpus::{Batch, Dataset, Example, LabelSpace, RegimeSpec};
pub use encoder::{ModelDims, ModelParams, Vocab};
pub use objectives::{LossKind, MaskStats};
pub use trainer::{EpochLog, TrainConfig, TrainStrategy};
