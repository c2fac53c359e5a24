use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use fwlstm::tasks::SplitSizes;
use fwlstm::{Dataset, TaskKind, TrainConfig};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

/// Identifies the exact data a run saw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub task: TaskKind,
    pub k: usize,
    pub sizes: SplitSizes,
    pub seed: u64,
    pub sha256: String,
}

impl DatasetFingerprint {
    pub fn of(data: &Dataset) -> Self {
        Self {
            task: data.kind,
            k: data.k,
            sizes: data.sizes(),
            seed: data.seed,
            sha256: data.content_hash(),
        }
    }
}

/// Paths relative to the run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub data_dir: PathBuf,
    pub metrics: PathBuf,
    pub best_checkpoint: PathBuf,
    pub final_checkpoint: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub epochs_completed: usize,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    /// Best-validation checkpoint evaluated on the test split.
    pub test_loss: f64,
    pub test_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub status: RunStatus,
    pub code_version: String,
    pub config: TrainConfig,
    pub batch_size: usize,
    pub dataset: DatasetFingerprint,
    pub artifacts: Artifacts,
    pub started_at: f64,
    pub finished_at: Option<f64>,
    pub results: Option<RunResults>,
    pub error: Option<String>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl RunManifest {
    pub fn start(config: &TrainConfig, dataset: DatasetFingerprint, artifacts: Artifacts) -> Self {
        Self {
            status: RunStatus::Running,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            batch_size: config.batch_size,
            dataset,
            artifacts,
            started_at: unix_now(),
            finished_at: None,
            results: None,
            error: None,
        }
    }

    pub fn complete(&mut self, results: RunResults) {
        self.status = RunStatus::Completed;
        self.results = Some(results);
        self.finished_at = Some(unix_now());
    }

    pub fn fail(&mut self, message: String) {
        self.status = RunStatus::Failed;
        self.error = Some(message);
        self.finished_at = Some(unix_now());
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
