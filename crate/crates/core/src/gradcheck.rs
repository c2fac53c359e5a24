//! Central finite-difference verification of tape gradients.

use crate::error::{Error, Result};
use crate::tape::{NodeId, Op, Tape};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// ReLU preactivations closer than this to 0 make a point ineligible.
    pub kink_margin: f64,
    pub max_resamples: usize,
    /// Denominator floor for the relative error of near-zero gradients.
    pub abs_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            kink_margin: 1e-3,
            max_resamples: 100,
            abs_floor: 1e-6,
        }
    }
}

/// A rejected evaluation point: which attempt, which ReLU node, which value.
#[derive(Clone, Debug, PartialEq)]
pub struct KinkPoint {
    pub attempt: usize,
    pub node: usize,
    pub preactivation: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Per-parameter maximum relative error, in input order.
    pub per_param: Vec<f64>,
    pub resampled: Vec<KinkPoint>,
    pub tolerance: f64,
    pub coordinates_checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// First ReLU input element within `margin` of zero, if any.
pub fn find_kink(tape: &Tape, margin: f64) -> Option<(usize, f64)> {
    tape.nodes().iter().enumerate().find_map(|(i, node)| {
        if node.op != Op::Relu {
            return None;
        }
        tape.value(node.inputs[0])
            .data()
            .iter()
            .find(|z| z.abs() <= margin)
            .map(|z| (i, *z))
    })
}

fn evaluate<F>(f: &F, params: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = f(&mut tape, &ids)?;
    Ok(tape.value(loss).item())
}

/// Compare analytic gradients of the scalar built by `f` against central
/// differences at every coordinate of every parameter.
///
/// `sample(attempt)` supplies the evaluation point; points where some ReLU
/// preactivation lies within `kink_margin` of zero are discarded and a new
/// sample drawn, up to `max_resamples` times.
pub fn grad_check<F, S>(f: F, mut sample: S, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
    S: FnMut(usize) -> Vec<Tensor>,
{
    let mut resampled = Vec::new();
    for attempt in 0..=cfg.max_resamples {
        let params = sample(attempt);
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = params.iter().map(|p| tape.leaf(p.clone())).collect();
        let loss = f(&mut tape, &ids)?;
        if let Some((node, preactivation)) = find_kink(&tape, cfg.kink_margin) {
            resampled.push(KinkPoint {
                attempt,
                node,
                preactivation,
            });
            continue;
        }
        tape.backward(loss)?;

        let mut per_param = Vec::with_capacity(params.len());
        let mut coordinates = 0;
        let mut work = params.clone();
        for (p, id) in ids.iter().enumerate() {
            let analytic = tape.grad(*id).expect("gradients present after backward").clone();
            let mut worst: f64 = 0.0;
            for k in 0..work[p].len() {
                let original = work[p].data()[k];
                work[p].data_mut()[k] = original + cfg.step;
                let plus = evaluate(&f, &work)?;
                work[p].data_mut()[k] = original - cfg.step;
                let minus = evaluate(&f, &work)?;
                work[p].data_mut()[k] = original;
                let numeric = (plus - minus) / (2.0 * cfg.step);
                worst = worst.max(relative_error(analytic.data()[k], numeric, cfg.abs_floor));
                coordinates += 1;
            }
            per_param.push(worst);
        }
        let max_relative_error = per_param.iter().cloned().fold(0.0, f64::max);
        return Ok(GradCheckReport {
            max_relative_error,
            per_param,
            resampled,
            tolerance: cfg.tolerance,
            coordinates_checked: coordinates,
        });
    }
    Err(Error::KinkProximity {
        attempts: cfg.max_resamples,
    })
}

/// Directional form of the check: compares `∇f · v` with
/// `(f(p + s v) - f(p - s v)) / 2s` for one direction `v` over all inputs.
/// Returns `(analytic, numeric)`.
pub fn directional_derivative<F>(f: F, params: &[Tensor], direction: &[Tensor], step: f64) -> Result<(f64, f64)>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = f(&mut tape, &ids)?;
    tape.backward(loss)?;
    let analytic: f64 = ids
        .iter()
        .zip(direction)
        .map(|(id, d)| {
            tape.grad(*id)
                .expect("gradients present after backward")
                .data()
                .iter()
                .zip(d.data())
                .map(|(g, v)| g * v)
                .sum::<f64>()
        })
        .sum();
    let shifted = |sign: f64| -> Vec<Tensor> {
        params
            .iter()
            .zip(direction)
            .map(|(p, d)| {
                let mut t = p.clone();
                for (x, v) in t.data_mut().iter_mut().zip(d.data()) {
                    *x += sign * step * v;
                }
                t
            })
            .collect()
    };
    let numeric = (evaluate(&f, &shifted(1.0))? - evaluate(&f, &shifted(-1.0))?) / (2.0 * step);
    Ok((analytic, numeric))
}
