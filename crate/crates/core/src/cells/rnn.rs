use crate::error::{Error, Result};
use crate::rng;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

use super::{check_state, fast_weight_update, glorot, CellState, FwConfig, StateNodes};

pub(super) const INPUT_WEIGHTS: [&str; 1] = ["C"];

/// Parameters of the fast-weight RNN baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct FwRnnParams {
    pub w: Tensor,
    pub c: Tensor,
    pub b: Tensor,
    pub ln_gain: Tensor,
    pub ln_bias: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct RnnNodes {
    pub hidden: usize,
    pub w: NodeId,
    pub c: Option<NodeId>,
    pub b: NodeId,
    pub ln_gain: NodeId,
    pub ln_bias: NodeId,
}

impl FwRnnParams {
    pub(super) fn init(hidden: usize, input: usize, rng: &mut rng::Rng) -> Self {
        Self {
            w: glorot(hidden, hidden, rng),
            c: glorot(hidden, input, rng),
            b: Tensor::zeros(hidden, 1),
            ln_gain: Tensor::filled(hidden, 1, 1.0),
            ln_bias: Tensor::zeros(hidden, 1),
        }
    }

    pub fn constant(hidden: usize, input: usize, value: f64) -> Self {
        Self {
            w: Tensor::filled(hidden, hidden, value),
            c: Tensor::filled(hidden, input, value),
            b: Tensor::zeros(hidden, 1),
            ln_gain: Tensor::filled(hidden, 1, 1.0),
            ln_bias: Tensor::zeros(hidden, 1),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w.rows()
    }

    pub fn input_size(&self) -> usize {
        self.c.cols()
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("W", &self.w),
            ("C", &self.c),
            ("b", &self.b),
            ("ln_gain", &self.ln_gain),
            ("ln_bias", &self.ln_bias),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("W", &mut self.w),
            ("C", &mut self.c),
            ("b", &mut self.b),
            ("ln_gain", &mut self.ln_gain),
            ("ln_bias", &mut self.ln_bias),
        ]
    }

    pub fn register(&self, tape: &mut Tape, with_input_weights: bool, leaves: &mut Vec<Option<NodeId>>) -> Result<RnnNodes> {
        let w = tape.leaf(self.w.clone());
        let c = with_input_weights.then(|| tape.leaf(self.c.clone()));
        let b = tape.leaf(self.b.clone());
        let ln_gain = tape.leaf(self.ln_gain.clone());
        let ln_bias = tape.leaf(self.ln_bias.clone());
        leaves.extend_from_slice(&[Some(w), c, Some(b), Some(ln_gain), Some(ln_bias)]);
        Ok(RnnNodes {
            hidden: self.hidden(),
            w,
            c,
            b,
            ln_gain,
            ln_bias,
        })
    }

    pub fn step(&self, cfg: &FwConfig, state: &CellState, x: &Tensor) -> Result<CellState> {
        let mut tape = Tape::new();
        let mut leaves = Vec::new();
        let nodes = self.register(&mut tape, true, &mut leaves)?;
        let s = state.register(&mut tape);
        let xid = tape.leaf(x.clone());
        let next = fwrnn_step(&mut tape, &nodes, cfg, s, xid)?;
        Ok(CellState::read(&tape, next))
    }
}

/// Fast-weight RNN step with `S = cfg.inner_steps` settling iterations:
///
/// ```text
/// z    = W h + C x + b
/// A_t  = λ A + η h hᵀ
/// h⁰   = ReLU(LN[z])
/// hˢ   = ReLU(LN[z + A_t hˢ⁻¹])   for s = 1..S
/// ```
///
/// With fast weights disabled only `h⁰` is computed and `A` is untouched.
pub fn fwrnn_step(tape: &mut Tape, p: &RnnNodes, cfg: &FwConfig, state: StateNodes, x: NodeId) -> Result<StateNodes> {
    let c = p.c.ok_or(Error::MissingParam("cell.C (input weights not registered)".into()))?;
    let cx = tape.matvec(c, x)?;
    rnn_step_projected(tape, p, cfg, state, cx)
}

/// [`fwrnn_step`] taking the input contribution `C x` directly.
pub fn rnn_step_projected(tape: &mut Tape, p: &RnnNodes, cfg: &FwConfig, state: StateNodes, cx: NodeId) -> Result<StateNodes> {
    let h = p.hidden;
    check_state(tape, &state, h)?;
    if tape.value(cx).shape() != (h, 1) {
        return Err(Error::Shape {
            op: "rnn_step",
            lhs: (h, 1),
            rhs: tape.value(cx).shape(),
        });
    }
    let wh = tape.matvec(p.w, state.h)?;
    let z = tape.add(wh, cx)?;
    let z = tape.add(z, p.b)?;
    let norm = tape.layer_norm(z, p.ln_gain, p.ln_bias)?;
    let mut h_inner = tape.relu(norm)?;
    if !cfg.fast_weights_enabled {
        return Ok(StateNodes {
            h: h_inner,
            c: state.c,
            a: state.a,
        });
    }
    let a = fast_weight_update(tape, state.a, state.h, cfg)?;
    for _ in 0..cfg.inner_steps {
        let recall = tape.matvec(a, h_inner)?;
        let pre = tape.add(z, recall)?;
        let norm = tape.layer_norm(pre, p.ln_gain, p.ln_bias)?;
        h_inner = tape.relu(norm)?;
    }
    Ok(StateNodes {
        h: h_inner,
        c: state.c,
        a,
    })
}
