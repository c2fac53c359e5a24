use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::cells::CellKind;
use crate::error::{Error, Result};
use crate::rng;
use crate::tasks::Dataset;

use super::train::train;
use super::TrainConfig;

const ETAS: [f64; 5] = [1.0, 0.75, 0.5, 0.25, 0.1];
const LAMBDAS: [f64; 2] = [0.99, 0.9];
const GRAD_CLIPS: [f64; 2] = [1.0, 5.0];
const LEARNING_RATES: [f64; 2] = [1e-4, 1e-5];
const ANNEAL_RATES: [usize; 2] = [100, 10];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub eta: f64,
    pub lambda: f64,
    pub grad_clip: f64,
    pub learning_rate: f64,
    pub anneal_rate: usize,
}

/// The tuning grid in enumeration order (η outermost, anneal rate
/// innermost). Cells without fast weights collapse the η axis to its first
/// value, giving 16 trials. λ is kept: it is inert there too, but each trial
/// gets its own seed, so the two λ rows act as seed replicates.
pub fn appendix_grid(kind: CellKind) -> Vec<GridPoint> {
    let etas: &[f64] = if kind.uses_fast_weights() { &ETAS } else { &ETAS[..1] };
    let lambdas: &[f64] = &LAMBDAS;
    let mut points = Vec::new();
    for &eta in etas {
        for &lambda in lambdas {
            for &grad_clip in &GRAD_CLIPS {
                for &learning_rate in &LEARNING_RATES {
                    for &anneal_rate in &ANNEAL_RATES {
                        points.push(GridPoint {
                            eta,
                            lambda,
                            grad_clip,
                            learning_rate,
                            anneal_rate,
                        });
                    }
                }
            }
        }
    }
    points
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "status", content = "message")]
pub enum TrialStatus {
    Completed,
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    /// Position in enumeration order.
    pub index: usize,
    pub point: GridPoint,
    pub seed: u64,
    pub status: TrialStatus,
    pub best_val_acc: f64,
    pub best_epoch: usize,
    pub final_val_acc: f64,
}

impl TrialResult {
    fn score(&self) -> f64 {
        match self.status {
            TrialStatus::Completed => self.best_val_acc,
            TrialStatus::Failed(_) => f64::NEG_INFINITY,
        }
    }
}

/// Sort by best validation accuracy, highest first. The sort is stable, so
/// ties keep enumeration order; failed trials sink to the bottom.
pub fn rank_trials(trials: &mut [TrialResult]) {
    trials.sort_by_key(|t| t.index);
    trials.sort_by(|a, b| b.score().total_cmp(&a.score()));
}

pub fn trial_config(base: &TrainConfig, index: usize, point: &GridPoint, budget: usize) -> TrainConfig {
    TrainConfig {
        eta: point.eta,
        lambda: point.lambda,
        grad_clip: point.grad_clip,
        learning_rate: point.learning_rate,
        anneal_rate: point.anneal_rate,
        max_epochs: budget,
        min_epochs: base.min_epochs.min(budget),
        seed: rng::derive_seed(base.seed, &format!("trial/{index}")),
        ..base.clone()
    }
}

/// Run every grid point for `budget` epochs on the shared `data`, using up
/// to `parallel` worker threads. Trial `i` writes into `out_dir/trial_<i>`.
/// Failures are recorded per trial and do not stop the sweep.
pub fn grid_search(
    base: &TrainConfig,
    data: &Dataset,
    budget: usize,
    parallel: usize,
    out_dir: Option<&Path>,
) -> Result<Vec<TrialResult>> {
    if budget == 0 {
        return Err(Error::Config("grid budget must be at least one epoch".into()));
    }
    let points = appendix_grid(base.cell_kind);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<TrialResult>>> = Mutex::new(vec![None; points.len()]);

    let run_one = |index: usize| -> TrialResult {
        let point = points[index];
        let cfg = trial_config(base, index, &point, budget);
        let dir = out_dir.map(|d| d.join(format!("trial_{index:03}")));
        let outcome = dir
            .as_deref()
            .map(|d| {
                fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
                let text = serde_json::to_string_pretty(&cfg).expect("config serializes");
                fs::write(d.join("config.json"), text).map_err(|e| Error::io(d, e))
            })
            .transpose()
            .and_then(|_| train(&cfg, data, dir.as_deref()));
        match outcome {
            Ok(o) => TrialResult {
                index,
                point,
                seed: cfg.seed,
                status: TrialStatus::Completed,
                best_val_acc: o.best_val_acc,
                best_epoch: o.best_epoch,
                final_val_acc: o.metrics.last().map_or(f64::NAN, |m| m.val_acc),
            },
            Err(e) => TrialResult {
                index,
                point,
                seed: cfg.seed,
                status: TrialStatus::Failed(e.to_string()),
                best_val_acc: f64::NAN,
                best_epoch: 0,
                final_val_acc: f64::NAN,
            },
        }
    };

    let workers = parallel.clamp(1, points.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= points.len() {
                    break;
                }
                let r = run_one(index);
                results.lock().expect("no poisoned workers")[index] = Some(r);
            });
        }
    });

    let mut trials: Vec<TrialResult> = results
        .into_inner()
        .expect("no poisoned workers")
        .into_iter()
        .map(|r| r.expect("every trial ran"))
        .collect();
    rank_trials(&mut trials);
    Ok(trials)
}

pub const GRID_CSV_HEADER: &str =
    "rank,trial,eta,lambda,grad_clip,learning_rate,anneal_rate,seed,status,best_val_acc,best_epoch,final_val_acc";

pub fn write_grid_csv(trials: &[TrialResult], path: &Path) -> Result<()> {
    let mut out = String::from(GRID_CSV_HEADER);
    out.push('\n');
    for (rank, t) in trials.iter().enumerate() {
        let status = match &t.status {
            TrialStatus::Completed => "completed",
            TrialStatus::Failed(_) => "failed",
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            rank + 1,
            t.index,
            t.point.eta,
            t.point.lambda,
            t.point.grad_clip,
            t.point.learning_rate,
            t.point.anneal_rate,
            t.seed,
            status,
            t.best_val_acc,
            t.best_epoch,
            t.final_val_acc
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_cardinality() {
        assert_eq!(appendix_grid(CellKind::FwLstm).len(), 80);
        assert_eq!(appendix_grid(CellKind::FwRnn).len(), 80);
        assert_eq!(appendix_grid(CellKind::LnLstm).len(), 16);
        let g = appendix_grid(CellKind::FwLstm);
        assert_eq!(
            g[0],
            GridPoint {
                eta: 1.0,
                lambda: 0.99,
                grad_clip: 1.0,
                learning_rate: 1e-4,
                anneal_rate: 100
            }
        );
        assert_eq!(g[79].eta, 0.1);
        assert_eq!(g[79].anneal_rate, 10);
        let mut distinct = g.clone();
        distinct.dedup();
        assert_eq!(distinct.len(), 80);
    }

    fn trial(index: usize, acc: f64) -> TrialResult {
        TrialResult {
            index,
            point: appendix_grid(CellKind::FwLstm)[index],
            seed: 0,
            status: TrialStatus::Completed,
            best_val_acc: acc,
            best_epoch: 1,
            final_val_acc: acc,
        }
    }

    #[test]
    fn ranking_breaks_ties_by_enumeration_order() {
        let mut trials = vec![trial(3, 0.5), trial(1, 0.9), trial(2, 0.5), trial(0, 0.9)];
        trials.push(TrialResult {
            status: TrialStatus::Failed("diverged".into()),
            ..trial(4, f64::NAN)
        });
        rank_trials(&mut trials);
        let order: Vec<usize> = trials.iter().map(|t| t.index).collect();
        assert_eq!(order, vec![0, 1, 2, 3, 4]);
    }
}
