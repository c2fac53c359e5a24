use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc,lr,grad_norm_mean,wall_seconds";

/// One row per completed epoch; epochs count from 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub lr: f64,
    pub grad_norm_mean: f64,
    pub wall_seconds: f64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            self.train_loss,
            self.train_acc,
            self.val_loss,
            self.val_acc,
            self.lr,
            self.grad_norm_mean,
            self.wall_seconds
        )
    }

    pub fn parse(line: &str) -> std::result::Result<Self, String> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(format!("expected 8 fields, got {}", fields.len()));
        }
        let f = |i: usize| fields[i].parse::<f64>().map_err(|e| format!("field {i}: {e}"));
        Ok(Self {
            epoch: fields[0].parse().map_err(|e| format!("epoch: {e}"))?,
            train_loss: f(1)?,
            train_acc: f(2)?,
            val_loss: f(3)?,
            val_acc: f(4)?,
            lr: f(5)?,
            grad_norm_mean: f(6)?,
            wall_seconds: f(7)?,
        })
    }

    /// Everything except wall-clock time, for reproducibility comparisons.
    pub fn same_numbers(&self, other: &MetricsRow) -> bool {
        self.epoch == other.epoch
            && self.train_loss.to_bits() == other.train_loss.to_bits()
            && self.train_acc.to_bits() == other.train_acc.to_bits()
            && self.val_loss.to_bits() == other.val_loss.to_bits()
            && self.val_acc.to_bits() == other.val_acc.to_bits()
            && self.lr.to_bits() == other.lr.to_bits()
            && self.grad_norm_mean.to_bits() == other.grad_norm_mean.to_bits()
    }
}

/// Appends rows to a CSV file, flushing after each one.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        w.line(METRICS_HEADER)?;
        Ok(w)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<()> {
        self.line(&row.to_csv())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "missing metrics header".into(),
        });
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            MetricsRow::parse(l).map_err(|message| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message,
            })
        })
        .collect()
}
