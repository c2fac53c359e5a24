//! Training harness: Adam with global-norm clipping and step annealing,
//! evaluation, and the hyperparameter grid.

mod eval;
mod grid;
mod metrics;
mod optim;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cells::{CellKind, FwConfig, LnScope};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::tasks::{check_k, SplitSizes, TaskKind};

pub use eval::{evaluate, evaluate_predictor, EncodedExample, EvalResult, Predictor};
pub use grid::{appendix_grid, grid_search, rank_trials, trial_config, write_grid_csv, GridPoint, TrialResult, TrialStatus, GRID_CSV_HEADER};
pub use metrics::{read_metrics, MetricsRow, MetricsWriter, METRICS_HEADER};
pub use optim::{anneal_lr, clip_gradients, global_norm, Adam, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use train::{encode_split, train, train_with_observer, TrainOutcome, BEST_CHECKPOINT, FINAL_CHECKPOINT, METRICS_FILE};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub kind: TaskKind,
    pub k: usize,
    pub sizes: SplitSizes,
}

fn default_batch_size() -> usize {
    128
}

fn default_inner_steps() -> usize {
    1
}

/// Every knob of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub eta: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    /// Epochs between learning-rate halvings.
    pub anneal_rate: usize,
    /// Maximum global L2 norm of the gradient.
    pub grad_clip: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Observers may stop a run early, but never before this many epochs.
    pub min_epochs: usize,
    pub seed: u64,
    pub cell_kind: CellKind,
    pub hidden: usize,
    pub task: TaskConfig,
    #[serde(default = "default_inner_steps")]
    pub inner_steps: usize,
    #[serde(default)]
    pub ln_scope: LnScope,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub forget_bias: f64,
}

impl TrainConfig {
    /// Tuned values for the simple retrieval tasks: η=1, λ=0.99, clip 5,
    /// lr 1e-4 halved every 100 epochs.
    pub fn tuned(cell_kind: CellKind, hidden: usize, task: TaskKind, k: usize, sizes: SplitSizes) -> Self {
        Self {
            eta: 1.0,
            lambda: 0.99,
            learning_rate: 1e-4,
            anneal_rate: 100,
            grad_clip: 5.0,
            batch_size: default_batch_size(),
            max_epochs: 300,
            min_epochs: 300,
            seed: 0,
            cell_kind,
            hidden,
            task: TaskConfig { kind: task, k, sizes },
            inner_steps: 1,
            ln_scope: LnScope::Joint,
            optimizer: OptimizerKind::Adam,
            forget_bias: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eta", self.eta >= 0.0),
            ("learning_rate", self.learning_rate > 0.0),
            ("grad_clip", self.grad_clip > 0.0),
            ("anneal_rate", self.anneal_rate > 0),
            ("batch_size", self.batch_size > 0),
            ("max_epochs", self.max_epochs > 0),
            ("hidden", self.hidden >= 2),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, ok)| !ok) {
            return Err(Error::Config(format!("{name} out of range")));
        }
        if self.min_epochs > self.max_epochs {
            return Err(Error::Config(format!(
                "min_epochs {} exceeds max_epochs {}",
                self.min_epochs, self.max_epochs
            )));
        }
        check_k(self.task.k)?;
        self.model_config().fw.validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        let fw = FwConfig {
            lambda: self.lambda,
            eta: self.eta,
            inner_steps: self.inner_steps,
            fast_weights_enabled: true,
            ln_scope: self.ln_scope,
        };
        let mut cfg = ModelConfig::new(self.cell_kind, self.hidden, fw);
        cfg.forget_bias = self.forget_bias;
        cfg
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
