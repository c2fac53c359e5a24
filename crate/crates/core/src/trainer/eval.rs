use crate::error::{Error, Result};
use crate::model::{forward_with_table, ModelParams};
use crate::tape::softmax;
use crate::tensor::{argmax, Tensor};

/// An encoded `(indices, target)` pair.
pub type EncodedExample = (Vec<usize>, usize);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalResult {
    /// Mean cross-entropy.
    pub loss: f64,
    /// Fraction of examples whose argmax over all 37 symbols is the target.
    pub accuracy: f64,
    pub n: usize,
}

/// Anything that maps an input sequence to 37 logits.
pub trait Predictor {
    fn logits(&self, indices: &[usize]) -> Result<Vec<f64>>;
}

struct TablePredictor<'a> {
    params: &'a ModelParams,
    table: Tensor,
}

impl Predictor for TablePredictor<'_> {
    fn logits(&self, indices: &[usize]) -> Result<Vec<f64>> {
        // target is irrelevant to the logits
        let (_, prediction) = forward_with_table(self.params, &self.table, indices, 0)?;
        Ok(prediction.logits)
    }
}

pub fn evaluate_predictor<P: Predictor + ?Sized>(predictor: &P, examples: &[EncodedExample]) -> Result<EvalResult> {
    if examples.is_empty() {
        return Err(Error::Config("cannot evaluate an empty split".into()));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (indices, target) in examples {
        let logits = predictor.logits(indices)?;
        let p = softmax(&logits);
        let pt = p.get(*target).copied().ok_or(Error::IndexOutOfRange(*target))?;
        loss -= pt.ln();
        if argmax(&logits) == *target {
            correct += 1;
        }
    }
    let n = examples.len();
    Ok(EvalResult {
        loss: loss / n as f64,
        accuracy: correct as f64 / n as f64,
        n,
    })
}

/// Loss and accuracy of `params` on an encoded split.
pub fn evaluate(params: &ModelParams, examples: &[EncodedExample]) -> Result<EvalResult> {
    let predictor = TablePredictor {
        params,
        table: params.input_table(),
    };
    evaluate_predictor(&predictor, examples)
}
