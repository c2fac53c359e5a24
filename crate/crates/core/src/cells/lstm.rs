use crate::error::{Error, Result};
use crate::rng;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

use super::{check_state, fast_weight_update, glorot, CellState, FwConfig, LnScope, StateNodes};

pub(super) const INPUT_WEIGHTS: [&str; 4] = ["U_i", "U_f", "U_o", "U_g"];

/// Parameters shared by the fast-weight LSTM and the LN-LSTM.
///
/// Gate blocks are ordered `i, f, o, g` everywhere, including inside the
/// `4h` layer-norm gain and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct FwLstmParams {
    pub w_i: Tensor,
    pub w_f: Tensor,
    pub w_o: Tensor,
    pub w_g: Tensor,
    pub u_i: Tensor,
    pub u_f: Tensor,
    pub u_o: Tensor,
    pub u_g: Tensor,
    pub b_i: Tensor,
    pub b_f: Tensor,
    pub b_o: Tensor,
    pub b_g: Tensor,
    pub ln_gate_gain: Tensor,
    pub ln_gate_bias: Tensor,
    pub ln_cell_gain: Tensor,
    pub ln_cell_bias: Tensor,
}

/// Tape handles for [`FwLstmParams`], with the gate blocks stacked.
#[derive(Clone, Copy, Debug)]
pub struct LstmNodes {
    pub hidden: usize,
    /// `[W_i; W_f; W_o; W_g]`, `4h × h`.
    pub w: NodeId,
    /// `[U_i; U_f; U_o; U_g]`, `4h × d`; absent when the input projection is
    /// supplied from outside.
    pub u: Option<NodeId>,
    pub b: NodeId,
    pub ln_gate_gain: NodeId,
    pub ln_gate_bias: NodeId,
    pub ln_cell_gain: NodeId,
    pub ln_cell_bias: NodeId,
}

impl FwLstmParams {
    pub(super) fn init(hidden: usize, input: usize, forget_bias: f64, rng: &mut rng::Rng) -> Self {
        let h = hidden;
        Self {
            w_i: glorot(h, h, rng),
            w_f: glorot(h, h, rng),
            w_o: glorot(h, h, rng),
            w_g: glorot(h, h, rng),
            u_i: glorot(h, input, rng),
            u_f: glorot(h, input, rng),
            u_o: glorot(h, input, rng),
            u_g: glorot(h, input, rng),
            b_i: Tensor::zeros(h, 1),
            b_f: Tensor::filled(h, 1, forget_bias),
            b_o: Tensor::zeros(h, 1),
            b_g: Tensor::zeros(h, 1),
            ln_gate_gain: Tensor::filled(4 * h, 1, 1.0),
            ln_gate_bias: Tensor::zeros(4 * h, 1),
            ln_cell_gain: Tensor::filled(h, 1, 1.0),
            ln_cell_bias: Tensor::zeros(h, 1),
        }
    }

    /// Every entry set to `value`, biases zero, layer-norm gains one.
    pub fn constant(hidden: usize, input: usize, value: f64) -> Self {
        let h = hidden;
        Self {
            w_i: Tensor::filled(h, h, value),
            w_f: Tensor::filled(h, h, value),
            w_o: Tensor::filled(h, h, value),
            w_g: Tensor::filled(h, h, value),
            u_i: Tensor::filled(h, input, value),
            u_f: Tensor::filled(h, input, value),
            u_o: Tensor::filled(h, input, value),
            u_g: Tensor::filled(h, input, value),
            b_i: Tensor::zeros(h, 1),
            b_f: Tensor::zeros(h, 1),
            b_o: Tensor::zeros(h, 1),
            b_g: Tensor::zeros(h, 1),
            ln_gate_gain: Tensor::filled(4 * h, 1, 1.0),
            ln_gate_bias: Tensor::zeros(4 * h, 1),
            ln_cell_gain: Tensor::filled(h, 1, 1.0),
            ln_cell_bias: Tensor::zeros(h, 1),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_i.rows()
    }

    pub fn input_size(&self) -> usize {
        self.u_i.cols()
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("W_i", &self.w_i),
            ("W_f", &self.w_f),
            ("W_o", &self.w_o),
            ("W_g", &self.w_g),
            ("U_i", &self.u_i),
            ("U_f", &self.u_f),
            ("U_o", &self.u_o),
            ("U_g", &self.u_g),
            ("b_i", &self.b_i),
            ("b_f", &self.b_f),
            ("b_o", &self.b_o),
            ("b_g", &self.b_g),
            ("ln_gate_gain", &self.ln_gate_gain),
            ("ln_gate_bias", &self.ln_gate_bias),
            ("ln_cell_gain", &self.ln_cell_gain),
            ("ln_cell_bias", &self.ln_cell_bias),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("W_i", &mut self.w_i),
            ("W_f", &mut self.w_f),
            ("W_o", &mut self.w_o),
            ("W_g", &mut self.w_g),
            ("U_i", &mut self.u_i),
            ("U_f", &mut self.u_f),
            ("U_o", &mut self.u_o),
            ("U_g", &mut self.u_g),
            ("b_i", &mut self.b_i),
            ("b_f", &mut self.b_f),
            ("b_o", &mut self.b_o),
            ("b_g", &mut self.b_g),
            ("ln_gate_gain", &mut self.ln_gate_gain),
            ("ln_gate_bias", &mut self.ln_gate_bias),
            ("ln_cell_gain", &mut self.ln_cell_gain),
            ("ln_cell_bias", &mut self.ln_cell_bias),
        ]
    }

    /// Record every tensor as a leaf. `leaves` receives one entry per tensor
    /// in [`tensors`](Self::tensors) order; the `U` blocks are skipped (and
    /// recorded as `None`) unless `with_input_weights` is set.
    pub fn register(&self, tape: &mut Tape, with_input_weights: bool, leaves: &mut Vec<Option<NodeId>>) -> Result<LstmNodes> {
        let mut ids = Vec::with_capacity(16);
        for (name, t) in self.tensors() {
            if !with_input_weights && INPUT_WEIGHTS.contains(&name) {
                ids.push(None);
            } else {
                ids.push(Some(tape.leaf(t.clone())));
            }
        }
        leaves.extend_from_slice(&ids);
        let id = |k: usize| ids[k].expect("registered");
        let w = tape.concat_rows(&[id(0), id(1), id(2), id(3)])?;
        let u = if with_input_weights {
            Some(tape.concat_rows(&[id(4), id(5), id(6), id(7)])?)
        } else {
            None
        };
        let b = tape.concat_rows(&[id(8), id(9), id(10), id(11)])?;
        Ok(LstmNodes {
            hidden: self.hidden(),
            w,
            u,
            b,
            ln_gate_gain: id(12),
            ln_gate_bias: id(13),
            ln_cell_gain: id(14),
            ln_cell_bias: id(15),
        })
    }

    /// One step evaluated on a throwaway tape.
    pub fn step(&self, cfg: &FwConfig, fast_weights: bool, state: &CellState, x: &Tensor) -> Result<CellState> {
        let mut tape = Tape::new();
        let mut leaves = Vec::new();
        let nodes = self.register(&mut tape, true, &mut leaves)?;
        let s = state.register(&mut tape);
        let xid = tape.leaf(x.clone());
        let next = if fast_weights {
            fwlstm_step(&mut tape, &nodes, cfg, s, xid)?
        } else {
            lnlstm_step(&mut tape, &nodes, cfg, s, xid)?
        };
        Ok(CellState::read(&tape, next))
    }
}

fn project_input(tape: &mut Tape, p: &LstmNodes, x: NodeId) -> Result<NodeId> {
    let u = p.u.ok_or(Error::MissingParam("cell.U (input weights not registered)".into()))?;
    tape.matvec(u, x)
}

/// Fast-weight LSTM step:
///
/// ```text
/// [î; f̂; ô; ĝ] = LN[W h + U x + b]
/// i, f, o = σ(î), σ(f̂), σ(ô);   g = ReLU(ĝ)
/// A_t = λ A + η g gᵀ
/// c_t = LN[f ⊙ c + i ⊙ ReLU(ĝ + A_t g)]
/// h_t = o ⊙ ReLU(c_t)
/// ```
pub fn fwlstm_step(tape: &mut Tape, p: &LstmNodes, cfg: &FwConfig, state: StateNodes, x: NodeId) -> Result<StateNodes> {
    let ux = project_input(tape, p, x)?;
    lstm_step_projected(tape, p, cfg, state, ux, true)
}

/// Layer-normalized LSTM step: the fast-weight step without `A`.
/// `state.a` passes through untouched.
pub fn lnlstm_step(tape: &mut Tape, p: &LstmNodes, cfg: &FwConfig, state: StateNodes, x: NodeId) -> Result<StateNodes> {
    let ux = project_input(tape, p, x)?;
    lstm_step_projected(tape, p, cfg, state, ux, false)
}

/// Shared LSTM step body taking the input contribution `U x` (a `4h`
/// vector) directly.
pub fn lstm_step_projected(
    tape: &mut Tape,
    p: &LstmNodes,
    cfg: &FwConfig,
    state: StateNodes,
    ux: NodeId,
    fast_weights: bool,
) -> Result<StateNodes> {
    let h = p.hidden;
    check_state(tape, &state, h)?;
    if tape.value(ux).shape() != (4 * h, 1) {
        return Err(Error::Shape {
            op: "lstm_step",
            lhs: (4 * h, 1),
            rhs: tape.value(ux).shape(),
        });
    }

    let wh = tape.matvec(p.w, state.h)?;
    let pre = tape.add(wh, ux)?;
    let pre = tape.add(pre, p.b)?;
    let hat = match cfg.ln_scope {
        LnScope::Joint => tape.layer_norm(pre, p.ln_gate_gain, p.ln_gate_bias)?,
        LnScope::PerGate => {
            let mut blocks = [pre; 4];
            for (k, block) in blocks.iter_mut().enumerate() {
                let x = tape.slice_rows(pre, k * h, h)?;
                let gain = tape.slice_rows(p.ln_gate_gain, k * h, h)?;
                let bias = tape.slice_rows(p.ln_gate_bias, k * h, h)?;
                *block = tape.layer_norm(x, gain, bias)?;
            }
            tape.concat_rows(&blocks)?
        }
    };

    let ifo_hat = tape.slice_rows(hat, 0, 3 * h)?;
    let ifo = tape.sigmoid(ifo_hat)?;
    let i = tape.slice_rows(ifo, 0, h)?;
    let f = tape.slice_rows(ifo, h, h)?;
    let o = tape.slice_rows(ifo, 2 * h, h)?;
    let g_hat = tape.slice_rows(hat, 3 * h, h)?;

    let (a, candidate) = if fast_weights {
        let g = tape.relu(g_hat)?;
        let a = fast_weight_update(tape, state.a, g, cfg)?;
        let query = tape.matvec(a, g)?;
        (a, tape.add(g_hat, query)?)
    } else {
        (state.a, g_hat)
    };
    let candidate = tape.relu(candidate)?;

    let keep = tape.hadamard(f, state.c)?;
    let write = tape.hadamard(i, candidate)?;
    let c_pre = tape.add(keep, write)?;
    let c = tape.layer_norm(c_pre, p.ln_cell_gain, p.ln_cell_bias)?;
    let c_act = tape.relu(c)?;
    let h_next = tape.hadamard(o, c_act)?;
    Ok(StateNodes { h: h_next, c, a })
}
