use std::ops::ControlFlow;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::checkpoint::save_model;
use crate::error::{Error, Result};
use crate::model::{batch_gradients, ModelParams};
use crate::rng;
use crate::tasks::{Dataset, Example, Vocabulary};

use super::eval::{evaluate, EncodedExample};
use super::metrics::{MetricsRow, MetricsWriter};
use super::optim::{anneal_lr, clip_gradients, OptimizerState};
use super::{OptimizerKind, TrainConfig};

pub const METRICS_FILE: &str = "metrics.csv";
pub const BEST_CHECKPOINT: &str = "checkpoint_best.json";
pub const FINAL_CHECKPOINT: &str = "checkpoint_final.json";

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub final_params: ModelParams,
    /// Parameters at the epoch with the highest validation accuracy
    /// (earliest such epoch).
    pub best_params: ModelParams,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub metrics: Vec<MetricsRow>,
    pub stopped_early: bool,
}

pub fn encode_split(examples: &[Example]) -> Result<Vec<EncodedExample>> {
    let vocab = Vocabulary;
    examples.iter().map(|e| e.encode(&vocab)).collect()
}

/// Train for `cfg.max_epochs` epochs. With `out_dir`, metrics are streamed
/// to `metrics.csv` and the best and final checkpoints are written there.
pub fn train(cfg: &TrainConfig, data: &Dataset, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    train_with_observer(cfg, data, out_dir, |_| ControlFlow::Continue(()))
}

/// [`train`] with a per-epoch callback. A `Break` from the observer ends the
/// run once at least `cfg.min_epochs` epochs have completed.
pub fn train_with_observer<F>(cfg: &TrainConfig, data: &Dataset, out_dir: Option<&Path>, mut observer: F) -> Result<TrainOutcome>
where
    F: FnMut(&MetricsRow) -> ControlFlow<()>,
{
    cfg.validate()?;
    let train_set = encode_split(&data.train)?;
    let val_set = encode_split(&data.validation)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Config("train and validation splits must be non-empty".into()));
    }

    let mut params = ModelParams::init(cfg.model_config(), rng::derive_seed(cfg.seed, "init"))?;
    let mut optimizer = match cfg.optimizer {
        OptimizerKind::Adam => OptimizerState::adam_for(&params),
        OptimizerKind::Sgd => OptimizerState::Sgd,
    };
    let mut shuffle_rng = rng::stream(cfg.seed, "shuffle");

    let mut writer = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            Some(MetricsWriter::create(&dir.join(METRICS_FILE))?)
        }
        None => None,
    };

    let start = Instant::now();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut metrics = Vec::new();
    let mut best_params = params.clone();
    let mut best_epoch = 0;
    let mut best_val_acc = f64::NEG_INFINITY;
    let mut stopped_early = false;

    for epoch in 0..cfg.max_epochs {
        let lr = anneal_lr(cfg.learning_rate, epoch, cfg.anneal_rate);
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        let mut correct = 0;
        let mut norm_sum = 0.0;
        let mut batches = 0;
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_set[i].clone()));
            let mut out = match batch_gradients(&params, &batch) {
                Ok(out) => out,
                Err(Error::NonFinite { .. }) => return Err(Error::Diverged { epoch: epoch + 1 }),
                Err(e) => return Err(e),
            };
            if !out.loss_sum.is_finite() {
                return Err(Error::Diverged { epoch: epoch + 1 });
            }
            let norm = {
                let mut named = out.grads.tensors_mut();
                match clip_gradients(&mut named, cfg.grad_clip) {
                    Ok(norm) => norm,
                    Err(Error::NonFinite { .. }) => return Err(Error::Diverged { epoch: epoch + 1 }),
                    Err(e) => return Err(e),
                }
            };
            match optimizer.step(&mut params, &out.grads, lr) {
                Ok(()) => {}
                Err(Error::NonFinite { .. }) => return Err(Error::Diverged { epoch: epoch + 1 }),
                Err(e) => return Err(e),
            }
            loss_sum += out.loss_sum;
            correct += out.correct;
            norm_sum += norm;
            batches += 1;
        }

        let val = match evaluate(&params, &val_set) {
            Ok(val) => val,
            Err(Error::NonFinite { .. }) => return Err(Error::Diverged { epoch: epoch + 1 }),
            Err(e) => return Err(e),
        };
        if !val.loss.is_finite() {
            return Err(Error::Diverged { epoch: epoch + 1 });
        }
        let row = MetricsRow {
            epoch: epoch + 1,
            train_loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            val_loss: val.loss,
            val_acc: val.accuracy,
            lr,
            grad_norm_mean: norm_sum / batches as f64,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        if let Some(w) = writer.as_mut() {
            w.append(&row)?;
        }
        if val.accuracy > best_val_acc {
            best_val_acc = val.accuracy;
            best_epoch = row.epoch;
            best_params = params.clone();
            if let Some(dir) = out_dir {
                save_model(&best_params, &dir.join(BEST_CHECKPOINT))?;
            }
        }
        let flow = observer(&row);
        metrics.push(row);
        if flow.is_break() && epoch + 1 >= cfg.min_epochs {
            stopped_early = true;
            break;
        }
    }

    if let Some(dir) = out_dir {
        save_model(&params, &dir.join(FINAL_CHECKPOINT))?;
    }
    Ok(TrainOutcome {
        final_params: params,
        best_params,
        best_epoch,
        best_val_acc,
        metrics,
        stopped_early,
    })
}
