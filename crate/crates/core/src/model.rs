//! Sequence classifier: a learned 100-d symbol embedding feeds the recurrent
//! cell; the final hidden state goes through a 100-unit ReLU layer and a
//! 37-way softmax over the whole vocabulary.
//!
//! Two equivalent input routes exist. [`forward_sequence`] looks up the
//! embedding row and multiplies it by the cell input weights at every step.
//! [`batch_gradients`] instead forms the table `E Uᵀ` once per mini-batch
//! (rows indexed by symbol) and gathers rows from it; the table gradient is
//! pushed back into `E` and `U` once per batch.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cells::{
    self, fwlstm_step, fwrnn_step, lnlstm_step, lstm_step_projected, rnn_step_projected, CellKind, CellNodes, CellParams,
    CellState, FwConfig, StateNodes,
};
use crate::error::{Error, Result};
use crate::rng;
use crate::tape::{NodeId, Tape};
use crate::tasks::Vocabulary;
use crate::tensor::{argmax, Tensor};

pub const EMBEDDING_DIM: usize = 100;
pub const READOUT_UNITS: usize = 100;
pub const VOCAB_SIZE: usize = Vocabulary::SIZE;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub cell_kind: CellKind,
    pub hidden: usize,
    pub fw: FwConfig,
    #[serde(default)]
    pub forget_bias: f64,
}

impl ModelConfig {
    /// Fast weights are switched on exactly for the fast-weight cells.
    pub fn new(cell_kind: CellKind, hidden: usize, mut fw: FwConfig) -> Self {
        fw.fast_weights_enabled = cell_kind.uses_fast_weights();
        Self {
            cell_kind,
            hidden,
            fw,
            forget_bias: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// `37 × 100`, one row per symbol.
    pub embedding: Tensor,
    pub cell: CellParams,
    /// `100 × h`.
    pub readout_hidden_w: Tensor,
    pub readout_hidden_b: Tensor,
    /// `37 × 100`.
    pub readout_out_w: Tensor,
    pub readout_out_b: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub argmax: usize,
    pub symbol: char,
}

impl Prediction {
    pub fn from_logits(logits: Vec<f64>, probabilities: Vec<f64>) -> Self {
        let best = argmax(&logits);
        Self {
            logits,
            probabilities,
            argmax: best,
            symbol: Vocabulary.symbol(best).unwrap_or('?'),
        }
    }
}

/// Tape handles for a registered model. `leaves` is aligned with
/// [`ModelParams::tensors`]; `None` marks tensors not recorded.
#[derive(Clone, Debug)]
pub struct ModelNodes {
    pub embedding: Option<NodeId>,
    pub cell: CellNodes,
    pub readout_hidden_w: NodeId,
    pub readout_hidden_b: NodeId,
    pub readout_out_w: NodeId,
    pub readout_out_b: NodeId,
    pub leaves: Vec<Option<NodeId>>,
}

impl ModelParams {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.fw.validate()?;
        let (cell, _) = cells::initialize_with(
            config.cell_kind,
            config.hidden,
            EMBEDDING_DIM,
            rng::derive_seed(seed, "cell"),
            config.forget_bias,
        )?;
        let mut r = rng::stream(seed, "model-init");
        let mut glorot = |rows: usize, cols: usize| {
            let bound = cells::glorot_bound(rows, cols);
            let data = (0..rows * cols).map(|_| r.random_range(-bound..bound)).collect();
            Tensor::new(rows, cols, data).expect("sized")
        };
        let embedding = glorot(VOCAB_SIZE, EMBEDDING_DIM);
        let readout_hidden_w = glorot(READOUT_UNITS, config.hidden);
        let readout_out_w = glorot(VOCAB_SIZE, READOUT_UNITS);
        Ok(Self {
            config,
            embedding,
            cell,
            readout_hidden_w,
            readout_hidden_b: Tensor::zeros(READOUT_UNITS, 1),
            readout_out_w,
            readout_out_b: Tensor::zeros(VOCAB_SIZE, 1),
        })
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    /// `(canonical name, tensor)` in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("embedding".to_string(), &self.embedding)];
        out.extend(self.cell.tensors().into_iter().map(|(n, t)| (format!("cell.{n}"), t)));
        out.push(("readout_hidden.weight".into(), &self.readout_hidden_w));
        out.push(("readout_hidden.bias".into(), &self.readout_hidden_b));
        out.push(("readout_out.weight".into(), &self.readout_out_w));
        out.push(("readout_out.bias".into(), &self.readout_out_b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = vec![("embedding".to_string(), &mut self.embedding)];
        out.extend(self.cell.tensors_mut().into_iter().map(|(n, t)| (format!("cell.{n}"), t)));
        out.push(("readout_hidden.weight".into(), &mut self.readout_hidden_w));
        out.push(("readout_hidden.bias".into(), &mut self.readout_hidden_b));
        out.push(("readout_out.weight".into(), &mut self.readout_out_w));
        out.push(("readout_out.bias".into(), &mut self.readout_out_b));
        out
    }

    /// Same structure with every tensor zeroed; used as a gradient container.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        z
    }

    /// Trainable scalar count, gains and biases included.
    pub fn count_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn register(&self, tape: &mut Tape, with_input_weights: bool) -> Result<ModelNodes> {
        let mut leaves = Vec::new();
        let embedding = with_input_weights.then(|| tape.leaf(self.embedding.clone()));
        leaves.push(embedding);
        let cell = match &self.cell {
            CellParams::Lstm(p) => CellNodes::Lstm(p.register(tape, with_input_weights, &mut leaves)?),
            CellParams::Rnn(p) => CellNodes::Rnn(p.register(tape, with_input_weights, &mut leaves)?),
        };
        let readout_hidden_w = tape.leaf(self.readout_hidden_w.clone());
        let readout_hidden_b = tape.leaf(self.readout_hidden_b.clone());
        let readout_out_w = tape.leaf(self.readout_out_w.clone());
        let readout_out_b = tape.leaf(self.readout_out_b.clone());
        leaves.extend([
            Some(readout_hidden_w),
            Some(readout_hidden_b),
            Some(readout_out_w),
            Some(readout_out_b),
        ]);
        Ok(ModelNodes {
            embedding,
            cell,
            readout_hidden_w,
            readout_hidden_b,
            readout_out_w,
            readout_out_b,
            leaves,
        })
    }

    /// `E Uᵀ`: row `s` is the cell input contribution of symbol `s`.
    pub fn input_table(&self) -> Tensor {
        let u = self.stacked_input_weights();
        self.embedding.matmul(&u.transpose())
    }

    fn stacked_input_weights(&self) -> Tensor {
        match &self.cell {
            CellParams::Lstm(p) => {
                let mut data = Vec::with_capacity(4 * p.u_i.len());
                for u in [&p.u_i, &p.u_f, &p.u_o, &p.u_g] {
                    data.extend_from_slice(u.data());
                }
                Tensor::new(4 * p.hidden(), p.input_size(), data).expect("sized")
            }
            CellParams::Rnn(p) => p.c.clone(),
        }
    }
}

/// Where each step's input contribution comes from.
#[derive(Clone, Copy, Debug)]
pub enum InputRoute {
    /// Gather the embedding row, multiply by the cell input weights.
    Embedding(NodeId),
    /// Gather a row of a precomputed `E Uᵀ` table.
    Table(NodeId),
}

fn check_indices(indices: &[usize]) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::Config("input sequence is empty".into()));
    }
    match indices.iter().find(|i| **i >= VOCAB_SIZE) {
        Some(i) => Err(Error::IndexOutOfRange(*i)),
        None => Ok(()),
    }
}

/// Run the cell over `indices` from a zero state; returns the final state.
pub fn rollout(
    tape: &mut Tape,
    nodes: &ModelNodes,
    config: &ModelConfig,
    indices: &[usize],
    route: InputRoute,
) -> Result<StateNodes> {
    check_indices(indices)?;
    let mut state = CellState::zeros(config.hidden).register(tape);
    for &symbol in indices {
        state = match route {
            InputRoute::Embedding(e) => {
                let x = tape.gather_row(e, symbol)?;
                match (&nodes.cell, config.cell_kind) {
                    (CellNodes::Lstm(p), CellKind::FwLstm) => fwlstm_step(tape, p, &config.fw, state, x)?,
                    (CellNodes::Lstm(p), CellKind::LnLstm) => lnlstm_step(tape, p, &config.fw, state, x)?,
                    (CellNodes::Rnn(p), CellKind::FwRnn) => fwrnn_step(tape, p, &config.fw, state, x)?,
                    _ => return Err(Error::Config("cell parameters do not match cell kind".into())),
                }
            }
            InputRoute::Table(table) => {
                let ux = tape.gather_row(table, symbol)?;
                match (&nodes.cell, config.cell_kind) {
                    (CellNodes::Lstm(p), CellKind::FwLstm) => lstm_step_projected(tape, p, &config.fw, state, ux, true)?,
                    (CellNodes::Lstm(p), CellKind::LnLstm) => lstm_step_projected(tape, p, &config.fw, state, ux, false)?,
                    (CellNodes::Rnn(p), CellKind::FwRnn) => rnn_step_projected(tape, p, &config.fw, state, ux)?,
                    _ => return Err(Error::Config("cell parameters do not match cell kind".into())),
                }
            }
        };
    }
    Ok(state)
}

/// `W_out ReLU(W_hid h + b_hid) + b_out`.
pub fn readout(tape: &mut Tape, nodes: &ModelNodes, h: NodeId) -> Result<NodeId> {
    let z = tape.matvec(nodes.readout_hidden_w, h)?;
    let z = tape.add(z, nodes.readout_hidden_b)?;
    let r = tape.relu(z)?;
    let logits = tape.matvec(nodes.readout_out_w, r)?;
    tape.add(logits, nodes.readout_out_b)
}

fn head(tape: &mut Tape, nodes: &ModelNodes, h: NodeId, target: usize) -> Result<(NodeId, Prediction)> {
    if target >= VOCAB_SIZE {
        return Err(Error::IndexOutOfRange(target));
    }
    let logits = readout(tape, nodes, h)?;
    let loss = tape.softmax_cross_entropy(logits, target)?;
    let probabilities = tape.probabilities(loss).expect("softmax saves probabilities").to_vec();
    let prediction = Prediction::from_logits(tape.value(logits).data().to_vec(), probabilities);
    Ok((loss, prediction))
}

/// Record the whole model on `tape` (embedding route) and return the
/// cross-entropy node of the final-step prediction against `target`.
pub fn forward_sequence(
    tape: &mut Tape,
    params: &ModelParams,
    indices: &[usize],
    target: usize,
) -> Result<(NodeId, Prediction, ModelNodes)> {
    let nodes = params.register(tape, true)?;
    let e = nodes.embedding.expect("registered with input weights");
    let state = rollout(tape, &nodes, &params.config, indices, InputRoute::Embedding(e))?;
    let (loss, prediction) = head(tape, &nodes, state.h, target)?;
    Ok((loss, prediction, nodes))
}

/// Loss and prediction for one sequence against a precomputed input table.
pub fn forward_with_table(params: &ModelParams, table: &Tensor, indices: &[usize], target: usize) -> Result<(f64, Prediction)> {
    let mut tape = Tape::new();
    let nodes = params.register(&mut tape, false)?;
    let t = tape.leaf(table.clone());
    let state = rollout(&mut tape, &nodes, &params.config, indices, InputRoute::Table(t))?;
    let (loss, prediction) = head(&mut tape, &nodes, state.h, target)?;
    Ok((tape.value(loss).item(), prediction))
}

/// Batch-averaged gradients plus summed loss and correct count.
#[derive(Clone, Debug)]
pub struct BatchOutput {
    pub grads: ModelParams,
    pub loss_sum: f64,
    pub correct: usize,
    pub count: usize,
}

/// Gradients of the mean cross-entropy over `batch` of `(indices, target)`.
/// Examples are processed and summed in order, so the result is
/// bit-reproducible.
pub fn batch_gradients(params: &ModelParams, batch: &[(Vec<usize>, usize)]) -> Result<BatchOutput> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let input_names = params.cell.input_weight_names();

    let mut table_tape = Tape::new();
    let e = table_tape.leaf(params.embedding.clone());
    let mut u_leaves = Vec::new();
    for (name, t) in params.cell.tensors() {
        if input_names.contains(&name) {
            u_leaves.push((format!("cell.{name}"), table_tape.leaf(t.clone())));
        }
    }
    let ids: Vec<NodeId> = u_leaves.iter().map(|(_, id)| *id).collect();
    let u = if ids.len() == 1 { ids[0] } else { table_tape.concat_rows(&ids)? };
    let ut = table_tape.transpose(u)?;
    let table = table_tape.matmul(e, ut)?;
    let table_value = table_tape.value(table).clone();

    // Parameters and the table are registered once; each example truncates
    // back to them and adds its gradients into `acc`.
    let mut tape = Tape::new();
    let nodes = params.register(&mut tape, false)?;
    let t = tape.leaf(table_value);
    let prefix = tape.len();
    let mut acc: Vec<Tensor> = tape.nodes().iter().map(|n| Tensor::zeros(n.value.rows(), n.value.cols())).collect();
    let mut loss_sum = 0.0;
    let mut correct = 0;
    for (indices, target) in batch {
        tape.truncate(prefix);
        let state = rollout(&mut tape, &nodes, &params.config, indices, InputRoute::Table(t))?;
        let (loss, prediction) = head(&mut tape, &nodes, state.h, *target)?;
        tape.backward_accumulate(loss, &mut acc)?;
        loss_sum += tape.value(loss).item();
        if prediction.argmax == *target {
            correct += 1;
        }
    }

    tape.propagate_prefix(&mut acc);
    let mut grads = params.zeros_like();
    for ((_, slot), id) in grads.tensors_mut().into_iter().zip(&nodes.leaves) {
        if let Some(id) = id {
            *slot = std::mem::replace(&mut acc[id.index()], Tensor::zeros(0, 0));
        }
    }
    let mut d_table = std::mem::replace(&mut acc[t.index()], Tensor::zeros(0, 0));

    let inv = 1.0 / batch.len() as f64;
    for (_, g) in grads.tensors_mut() {
        g.scale_in_place(inv);
    }
    d_table.scale_in_place(inv);

    let seed = table_tape.leaf(d_table);
    let weighted = table_tape.hadamard(table, seed)?;
    let total = table_tape.sum(weighted)?;
    table_tape.backward(total)?;
    grads.embedding = table_tape.grad(e).expect("backward ran").clone();
    for (name, slot) in grads.tensors_mut() {
        if let Some((_, id)) = u_leaves.iter().find(|(n, _)| *n == name) {
            *slot = table_tape.grad(*id).expect("backward ran").clone();
        }
    }
    Ok(BatchOutput {
        grads,
        loss_sum,
        correct,
        count: batch.len(),
    })
}
