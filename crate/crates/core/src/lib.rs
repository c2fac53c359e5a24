//! Fast-weight LSTM and baselines for associative retrieval.
//!
//! - [`tape`]: dense `f64` tensors with a reverse-mode tape.
//! - [`cells`]: fast-weight LSTM, LN-LSTM and fast-weight RNN step functions.
//! - [`tasks`]: seeded ART / mART generators and the dataset text format.
//! - [`model`]: embedding → cell rollout → ReLU readout → softmax classifier.
//! - [`trainer`]: Adam with clipping and step annealing, evaluation, grid search.

pub mod cells;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod rng;
pub mod tape;
pub mod tasks;
pub mod tensor;
pub mod trainer;

pub use cells::{CellKind, CellParams, CellState, FwConfig, LnScope};
pub use error::{Error, Result};
pub use model::{ModelConfig, ModelParams, Prediction};
pub use tape::{NodeId, Op, Tape};
pub use tasks::{Dataset, Example, TaskKind, Vocabulary};
pub use tensor::Tensor;
pub use trainer::{MetricsRow, TrainConfig};
