//! Recurrent cells: fast-weight LSTM, layer-normalized LSTM and the
//! fast-weight RNN baseline.
//!
//! Step functions are pure: they read parameter nodes and a [`StateNodes`]
//! from a tape and append the next state. The fast-weight matrix `A` is part
//! of the state, reset to zero at every sequence start, and only receives
//! gradients through the unrolled recurrence.

mod lstm;
mod rnn;

use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

pub use lstm::{fwlstm_step, lnlstm_step, lstm_step_projected, FwLstmParams, LstmNodes};
pub use rnn::{fwrnn_step, rnn_step_projected, FwRnnParams, RnnNodes};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    FwLstm,
    LnLstm,
    FwRnn,
}

impl CellKind {
    pub const ALL: [CellKind; 3] = [CellKind::LnLstm, CellKind::FwRnn, CellKind::FwLstm];

    pub fn uses_fast_weights(self) -> bool {
        !matches!(self, CellKind::LnLstm)
    }

    pub fn label(self) -> &'static str {
        match self {
            CellKind::FwLstm => "FW-LSTM",
            CellKind::LnLstm => "LN-LSTM",
            CellKind::FwRnn => "FW-RNN",
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// How the stacked gate preactivation `[î; f̂; ô; ĝ]` is normalized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LnScope {
    /// One layer norm across the whole `4h` vector.
    #[default]
    Joint,
    /// An independent layer norm per `h`-sized gate block.
    PerGate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FwConfig {
    /// Decay λ of the fast-weight matrix.
    pub lambda: f64,
    /// Fast-weight learning rate η.
    pub eta: f64,
    /// Inner settling iterations of the fast-weight RNN.
    pub inner_steps: usize,
    pub fast_weights_enabled: bool,
    pub ln_scope: LnScope,
}

impl Default for FwConfig {
    fn default() -> Self {
        Self {
            lambda: 0.99,
            eta: 1.0,
            inner_steps: 1,
            fast_weights_enabled: true,
            ln_scope: LnScope::Joint,
        }
    }
}

impl FwConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta {} must be finite and >= 0", self.eta)));
        }
        if self.inner_steps == 0 {
            return Err(Error::Config("inner_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Concrete recurrent state of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct CellState {
    pub h: Tensor,
    pub c: Tensor,
    pub a: Tensor,
}

impl CellState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: Tensor::zeros(hidden, 1),
            c: Tensor::zeros(hidden, 1),
            a: Tensor::zeros(hidden, hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.h.rows()
    }

    pub fn check_finite(&self) -> Result<()> {
        self.h.check_finite("state.h")?;
        self.c.check_finite("state.c")?;
        self.a.check_finite("state.A")
    }

    pub fn register(&self, tape: &mut Tape) -> StateNodes {
        StateNodes {
            h: tape.leaf(self.h.clone()),
            c: tape.leaf(self.c.clone()),
            a: tape.leaf(self.a.clone()),
        }
    }

    pub fn read(tape: &Tape, nodes: StateNodes) -> Self {
        Self {
            h: tape.value(nodes.h).clone(),
            c: tape.value(nodes.c).clone(),
            a: tape.value(nodes.a).clone(),
        }
    }
}

/// State of one sequence as tape nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateNodes {
    pub h: NodeId,
    /// Cell vector; carried untouched by the fast-weight RNN.
    pub c: NodeId,
    pub a: NodeId,
}

/// Parameters of any of the three cells.
#[derive(Clone, Debug, PartialEq)]
pub enum CellParams {
    Lstm(FwLstmParams),
    Rnn(FwRnnParams),
}

/// Tape handles for [`CellParams`].
#[derive(Clone, Copy, Debug)]
pub enum CellNodes {
    Lstm(LstmNodes),
    Rnn(RnnNodes),
}

impl CellParams {
    pub fn hidden(&self) -> usize {
        match self {
            CellParams::Lstm(p) => p.hidden(),
            CellParams::Rnn(p) => p.hidden(),
        }
    }

    pub fn input_size(&self) -> usize {
        match self {
            CellParams::Lstm(p) => p.input_size(),
            CellParams::Rnn(p) => p.input_size(),
        }
    }

    /// `(name, tensor)` pairs in canonical order.
    pub fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        match self {
            CellParams::Lstm(p) => p.tensors(),
            CellParams::Rnn(p) => p.tensors(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        match self {
            CellParams::Lstm(p) => p.tensors_mut(),
            CellParams::Rnn(p) => p.tensors_mut(),
        }
    }

    /// Names of the tensors that multiply the cell input `x`.
    pub fn input_weight_names(&self) -> &'static [&'static str] {
        match self {
            CellParams::Lstm(_) => &lstm::INPUT_WEIGHTS,
            CellParams::Rnn(_) => &rnn::INPUT_WEIGHTS,
        }
    }
}

/// Glorot-uniform bound `sqrt(6 / (fan_in + fan_out))` for a `rows × cols` matrix.
pub fn glorot_bound(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

pub(crate) fn glorot(rows: usize, cols: usize, rng: &mut rng::Rng) -> Tensor {
    let bound = glorot_bound(rows, cols);
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::from_parts(rows, cols, data)
}

/// Fresh parameters and zero state. Weight matrices are Glorot-uniform,
/// biases zero, layer-norm gains one and biases zero.
pub fn initialize(kind: CellKind, hidden: usize, input: usize, seed: u64) -> Result<(CellParams, CellState)> {
    initialize_with(kind, hidden, input, seed, 0.0)
}

/// As [`initialize`], with a custom initial forget-gate bias for the LSTM cells.
pub fn initialize_with(
    kind: CellKind,
    hidden: usize,
    input: usize,
    seed: u64,
    forget_bias: f64,
) -> Result<(CellParams, CellState)> {
    if hidden < 2 {
        return Err(Error::Config(format!(
            "hidden size {hidden} < 2 makes layer normalization degenerate"
        )));
    }
    if input == 0 {
        return Err(Error::Config("input size must be >= 1".into()));
    }
    let mut rng = rng::stream(seed, "cell-init");
    let params = match kind {
        CellKind::FwLstm | CellKind::LnLstm => {
            CellParams::Lstm(FwLstmParams::init(hidden, input, forget_bias, &mut rng))
        }
        CellKind::FwRnn => CellParams::Rnn(FwRnnParams::init(hidden, input, &mut rng)),
    };
    Ok((params, CellState::zeros(hidden)))
}

/// `A_t = λ A_{t-1} + η v vᵀ`.
pub fn fast_weight_update(tape: &mut Tape, a: NodeId, v: NodeId, cfg: &FwConfig) -> Result<NodeId> {
    let decayed = tape.scale(a, cfg.lambda)?;
    let outer = tape.outer(v, v)?;
    let write = tape.scale(outer, cfg.eta)?;
    tape.add(decayed, write)
}

pub(crate) fn check_state(tape: &Tape, state: &StateNodes, hidden: usize) -> Result<()> {
    let h = tape.value(state.h);
    let c = tape.value(state.c);
    let a = tape.value(state.a);
    if h.shape() != (hidden, 1) {
        return Err(Error::Shape {
            op: "cell_step",
            lhs: (hidden, 1),
            rhs: h.shape(),
        });
    }
    if c.shape() != (hidden, 1) {
        return Err(Error::Shape {
            op: "cell_step",
            lhs: (hidden, 1),
            rhs: c.shape(),
        });
    }
    if a.shape() != (hidden, hidden) {
        return Err(Error::Shape {
            op: "cell_step",
            lhs: (hidden, hidden),
            rhs: a.shape(),
        });
    }
    h.check_finite("state.h")?;
    c.check_finite("state.c")?;
    a.check_finite("state.A")
}
