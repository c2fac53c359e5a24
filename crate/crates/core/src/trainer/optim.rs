use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Global L2 norm over every gradient tensor.
pub fn global_norm<'a>(grads: impl IntoIterator<Item = &'a Tensor>) -> f64 {
    grads.into_iter().map(Tensor::sum_squares).sum::<f64>().sqrt()
}

/// Rescale all gradients by `max_norm / norm` when their global norm exceeds
/// `max_norm`. Returns the norm before clipping.
pub fn clip_gradients(grads: &mut [(String, &mut Tensor)], max_norm: f64) -> Result<f64> {
    if max_norm.is_nan() || max_norm <= 0.0 {
        return Err(Error::Config(format!("clip norm {max_norm} must be positive")));
    }
    for (name, g) in grads.iter() {
        g.check_finite(&format!("gradient of {name}"))?;
    }
    let norm = global_norm(grads.iter().map(|(_, g)| &**g));
    if norm > max_norm {
        let factor = max_norm / norm;
        for (_, g) in grads.iter_mut() {
            g.scale_in_place(factor);
        }
    }
    Ok(norm)
}

/// `base_lr · 2^(−⌊epoch / anneal_rate⌋)`, epochs counted from 0.
pub fn anneal_lr(base_lr: f64, epoch: usize, anneal_rate: usize) -> f64 {
    let halvings = epoch / anneal_rate.max(1);
    base_lr * 0.5f64.powi(halvings.min(i32::MAX as usize) as i32)
}

/// Bias-corrected Adam over a fixed list of tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub steps: u64,
}

impl Adam {
    pub fn new<'a>(shapes: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let zeros: Vec<Tensor> = shapes.into_iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
        Self {
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            first_moment: zeros.clone(),
            second_moment: zeros,
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor], lr: f64) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::Config("optimizer state does not match parameter list".into()));
        }
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::Shape {
                    op: "adam_step",
                    lhs: p.shape(),
                    rhs: g.shape(),
                });
            }
            let m = self.first_moment[k].data_mut();
            let v = self.second_moment[k].data_mut();
            for (((w, gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                let update = lr * m_hat / (v_hat.sqrt() + self.eps);
                if !update.is_finite() {
                    return Err(Error::NonFinite {
                        name: format!("adam update of parameter #{k}"),
                        index: 0,
                    });
                }
                *w -= update;
            }
        }
        Ok(())
    }
}

/// Optimizer used by the training loop.
#[derive(Clone, Debug)]
pub enum OptimizerState {
    Adam(Adam),
    Sgd,
}

impl OptimizerState {
    pub fn adam_for(params: &ModelParams) -> Self {
        OptimizerState::Adam(Adam::new(params.tensors().into_iter().map(|(_, t)| t)))
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) -> Result<()> {
        let gs: Vec<&Tensor> = grads.tensors().into_iter().map(|(_, t)| t).collect();
        let mut ps: Vec<&mut Tensor> = params.tensors_mut().into_iter().map(|(_, t)| t).collect();
        match self {
            OptimizerState::Adam(adam) => adam.step(&mut ps, &gs, lr),
            OptimizerState::Sgd => {
                for (p, g) in ps.iter_mut().zip(&gs) {
                    for (w, gi) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= lr * gi;
                    }
                    p.check_finite("sgd update")?;
                }
                Ok(())
            }
        }
    }
}
