//! JSON checkpoints: a map from canonical parameter names (`cell.W_i`,
//! `embedding`, `readout_out.weight`, ...) to shape plus row-major data.
//! Keys are sorted and floats are written in shortest round-trip form, so
//! identical parameters always produce identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cells::CellParams;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::tensor::Tensor;

pub const FORMAT: &str = "fwlstm-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

pub type ParamMap = BTreeMap<String, ParamEntry>;

impl From<&Tensor> for ParamEntry {
    fn from(t: &Tensor) -> Self {
        Self {
            shape: [t.rows(), t.cols()],
            data: t.data().to_vec(),
        }
    }
}

/// Cell tensors under `cell.<name>`.
pub fn cell_param_map(cell: &CellParams) -> ParamMap {
    cell.tensors()
        .into_iter()
        .map(|(n, t)| (format!("cell.{n}"), ParamEntry::from(t)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub config: ModelConfig,
    pub params: ParamMap,
}

impl Checkpoint {
    pub fn from_model(model: &ModelParams) -> Self {
        Self {
            format: FORMAT.to_string(),
            config: model.config.clone(),
            params: model
                .tensors()
                .into_iter()
                .map(|(n, t)| (n, ParamEntry::from(t)))
                .collect(),
        }
    }

    /// Rebuild the model; every expected name must be present with the
    /// right shape and nothing else may be.
    pub fn to_model(&self) -> Result<ModelParams> {
        if self.format != FORMAT {
            return Err(Error::Config(format!("unsupported checkpoint format {:?}", self.format)));
        }
        let mut model = ModelParams::init(self.config.clone(), 0)?;
        let mut seen = 0;
        for (name, slot) in model.tensors_mut() {
            let entry = self.params.get(&name).ok_or_else(|| Error::MissingParam(name.clone()))?;
            if entry.shape != [slot.rows(), slot.cols()] {
                return Err(Error::Shape {
                    op: "checkpoint",
                    lhs: slot.shape(),
                    rhs: (entry.shape[0], entry.shape[1]),
                });
            }
            *slot = Tensor::new(entry.shape[0], entry.shape[1], entry.data.clone())?;
            seen += 1;
        }
        if seen != self.params.len() {
            let known: Vec<String> = model.tensors().into_iter().map(|(n, _)| n).collect();
            let extra = self.params.keys().find(|k| !known.contains(k)).cloned().unwrap_or_default();
            return Err(Error::Config(format!("unexpected checkpoint entry {extra:?}")));
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec(self).expect("checkpoint serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
    }
}

pub fn save_model(model: &ModelParams, path: &Path) -> Result<()> {
    Checkpoint::from_model(model).save(path)
}

pub fn load_model(path: &Path) -> Result<ModelParams> {
    Checkpoint::load(path)?.to_model()
}
