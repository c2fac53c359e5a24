//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs every criterion by default. Set `FWLSTM_ACCEPTANCE=1,2,4` to run a
//! subset. Criteria 5 to 7 train desk-scale models and take a while.
//!
//! The target reports and exits 0 so the rest of `cargo test` still runs.
//! Set `FWLSTM_ACCEPTANCE_STRICT=1` to exit 1 when any criterion fails.

use std::collections::HashSet;
use std::fs;
use std::ops::ControlFlow;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use fwlstm::cells::{
    fwlstm_step, fwrnn_step, initialize, lnlstm_step, FwLstmParams, FwRnnParams, LstmNodes, RnnNodes, StateNodes,
};
use fwlstm::gradcheck::{find_kink, grad_check, relative_error, GradCheckConfig};
use fwlstm::model::{forward_sequence, ModelConfig, ModelParams};
use fwlstm::tasks::{generate_split, Split, SplitSizes};
use fwlstm::trainer::{
    appendix_grid, encode_split, evaluate, grid_search, rank_trials, read_metrics, train, train_with_observer,
    GridPoint, TrialResult, TrialStatus, FINAL_CHECKPOINT,
};
use fwlstm::{CellKind, CellParams, CellState, Dataset, Example, FwConfig, NodeId, Result, Tape, TaskKind, Tensor, TrainConfig};
use fwlstm_cli::manifest::{RunManifest, RunStatus};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DESK_SIZES: SplitSizes = SplitSizes::DESK;
const DESK_EPOCHS: usize = 150;
/// Small batches escape the early loss plateau that larger ones sit on.
const DESK_BATCH: usize = 4;
const DESK_SEED: u64 = 1;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

fn main() {
    let selected: Option<HashSet<usize>> = std::env::var("FWLSTM_ACCEPTANCE")
        .ok()
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.split(',').filter_map(|p| p.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "gradient correctness", gradients),
        (2, "eta=0 reduction to LN-LSTM", reduction),
        (3, "fast-weight laws", fast_weight_laws),
        (4, "parameter counts", parameter_counts),
        (5, "ART K=8 FW-LSTM h=20 test accuracy", art_reproduction),
        (6, "mART K=8 h=20 separation", mart_separation),
        (7, "mART K=8 h=50 convergence ordering", convergence_ordering),
        (8, "generator fidelity", generator_fidelity),
        (9, "train determinism", determinism),
        (10, "grid harness", grid_harness),
    ];
    let (mut failures, mut ran) = (0, 0);
    for (n, name, run) in criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(&n)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        let verdict = if outcome.passed { "PASS" } else { "FAIL" };
        println!(
            "criterion {n:>2} {name}: {verdict} ({}; {:.0}s)",
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
        if !outcome.passed {
            failures += 1;
        }
    }
    println!("{failures} of {ran} criteria failed");
    if failures > 0 && std::env::var("FWLSTM_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::new(rows, cols, data).unwrap()
}

fn contract(tape: &mut Tape, x: NodeId, weights: &Tensor) -> Result<NodeId> {
    let r = tape.leaf(weights.clone());
    let prod = tape.hadamard(x, r)?;
    tape.sum(prod)
}

// Criterion 1

const CELL_STEPS: usize = 3;

/// Leaves: cell parameters, then `h0, c0, A0`, then one input per step.
fn cell_sample(kind: CellKind, h: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Tensor> {
    let rows = if kind == CellKind::FwRnn { h } else { 4 * h };
    let mut ps = vec![
        random(rng, rows, h, 0.8),
        random(rng, rows, d, 0.8),
        random(rng, rows, 1, 0.3),
        random(rng, rows, 1, 1.5),
        random(rng, rows, 1, 0.5),
    ];
    if kind != CellKind::FwRnn {
        ps.push(random(rng, h, 1, 1.5));
        ps.push(random(rng, h, 1, 0.5));
    }
    let v = random(rng, h, 1, 0.5);
    ps.push(random(rng, h, 1, 1.0));
    ps.push(random(rng, h, 1, 1.0));
    ps.push(v.matmul(&v.transpose()));
    for _ in 0..CELL_STEPS {
        ps.push(random(rng, d, 1, 1.0));
    }
    ps
}

fn cell_loss(kind: CellKind, h: usize, weights: &[Tensor; 3]) -> impl Fn(&mut Tape, &[NodeId]) -> Result<NodeId> + '_ {
    move |t, p| {
        let fw = FwConfig {
            lambda: 0.9,
            eta: 0.5,
            ..Default::default()
        };
        let n = if kind == CellKind::FwRnn { 5 } else { 7 };
        let mut state = StateNodes {
            h: p[n],
            c: p[n + 1],
            a: p[n + 2],
        };
        for k in 0..CELL_STEPS {
            let x = p[n + 3 + k];
            state = if kind == CellKind::FwRnn {
                let nodes = RnnNodes {
                    hidden: h,
                    w: p[0],
                    c: Some(p[1]),
                    b: p[2],
                    ln_gain: p[3],
                    ln_bias: p[4],
                };
                fwrnn_step(t, &nodes, &fw, state, x)?
            } else {
                let nodes = LstmNodes {
                    hidden: h,
                    w: p[0],
                    u: Some(p[1]),
                    b: p[2],
                    ln_gate_gain: p[3],
                    ln_gate_bias: p[4],
                    ln_cell_gain: p[5],
                    ln_cell_bias: p[6],
                };
                if kind == CellKind::FwLstm {
                    fwlstm_step(t, &nodes, &fw, state, x)?
                } else {
                    lnlstm_step(t, &nodes, &fw, state, x)?
                }
            };
        }
        let lh = contract(t, state.h, &weights[0])?;
        let lc = contract(t, state.c, &weights[1])?;
        let la = contract(t, state.a, &weights[2])?;
        let l = t.add(lh, lc)?;
        t.add(l, la)
    }
}

fn cell_error(kind: CellKind, h: usize, seed: u64) -> f64 {
    let d = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = [random(&mut rng, h, 1, 1.0), random(&mut rng, h, 1, 1.0), random(&mut rng, h, h, 1.0)];
    let report = grad_check(
        cell_loss(kind, h, &weights),
        |_| cell_sample(kind, h, d, &mut rng),
        &GradCheckConfig::default(),
    )
    .unwrap();
    report.max_relative_error
}

/// Whole-model loss against central differences over every parameter.
fn model_error(kind: CellKind, h: usize, seed: u64) -> f64 {
    let step = 1e-5;
    let indices = [3usize, 27, 5, 36, 3];
    let target = 28;
    for attempt in 0..100 {
        let mut cfg = ModelConfig::new(kind, h, FwConfig::default());
        cfg.fw.eta = 0.5;
        cfg.fw.lambda = 0.9;
        let mut params = ModelParams::init(cfg, seed * 1000 + attempt).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 77 * attempt);
        for (_, t) in params.tensors_mut() {
            for v in t.data_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        let mut tape = Tape::new();
        let (loss, _, nodes) = forward_sequence(&mut tape, &params, &indices, target).unwrap();
        if find_kink(&tape, 1e-3).is_some() {
            continue;
        }
        tape.backward(loss).unwrap();
        let analytic: Vec<Tensor> = nodes.leaves.iter().map(|id| tape.grad(id.unwrap()).unwrap().clone()).collect();
        let eval = |p: &ModelParams| {
            let mut t = Tape::new();
            forward_sequence(&mut t, p, &indices, target).map(|(l, _, _)| t.value(l).item()).unwrap()
        };
        let mut worst = 0.0f64;
        for k in 0..params.tensors().len() {
            for j in 0..params.tensors()[k].1.len() {
                let original = params.tensors()[k].1.data()[j];
                params.tensors_mut()[k].1.data_mut()[j] = original + step;
                let plus = eval(&params);
                params.tensors_mut()[k].1.data_mut()[j] = original - step;
                let minus = eval(&params);
                params.tensors_mut()[k].1.data_mut()[j] = original;
                // Central differences of an O(1) loss carry ~1e-10 of
                // rounding noise, so tiny gradients use a 1e-5 floor.
                let err = relative_error(analytic[k].data()[j], (plus - minus) / (2.0 * step), 1e-5);
                worst = worst.max(err);
            }
        }
        return worst;
    }
    f64::INFINITY
}

fn gradients() -> Outcome {
    let mut parts = Vec::new();
    let mut worst = 0.0f64;
    for kind in CellKind::ALL {
        let mut cell = 0.0f64;
        let mut model = 0.0f64;
        for h in [2, 4] {
            for seed in 0..5 {
                cell = cell.max(cell_error(kind, h, 100 * h as u64 + seed));
                model = model.max(model_error(kind, h, seed));
            }
        }
        parts.push(format!("{kind} step {cell:.1e} model {model:.1e}"));
        worst = worst.max(cell).max(model);
    }
    Outcome::new(worst < 1e-4, format!("max relative error {worst:.2e} < 1e-4: {}", parts.join(", ")))
}

// Criteria 2 and 3

fn lstm_params(h: usize, d: usize, seed: u64) -> FwLstmParams {
    let (CellParams::Lstm(mut p), _) = initialize(CellKind::FwLstm, h, d, seed).unwrap() else {
        unreachable!()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for (name, t) in p.tensors_mut() {
        if name.starts_with("b_") || name.starts_with("ln_") {
            for v in t.data_mut() {
                *v += rng.random_range(-0.5..0.5);
            }
        }
    }
    p
}

fn rnn_params(h: usize, d: usize, seed: u64) -> FwRnnParams {
    let (CellParams::Rnn(p), _) = initialize(CellKind::FwRnn, h, d, seed).unwrap() else {
        unreachable!()
    };
    p
}

/// States after every step and gradients of `Σ_t Σ h_t` with respect to all
/// cell parameters, with η = 0.
fn lstm_rollout(p: &FwLstmParams, xs: &[Tensor], fast: bool) -> (Vec<Tensor>, Vec<Tensor>) {
    let cfg = FwConfig {
        eta: 0.0,
        ..Default::default()
    };
    let mut tape = Tape::new();
    let mut leaves = Vec::new();
    let nodes = p.register(&mut tape, true, &mut leaves).unwrap();
    let mut state = CellState::zeros(p.hidden()).register(&mut tape);
    let mut values = Vec::new();
    let mut loss = None;
    for x in xs {
        let xid = tape.leaf(x.clone());
        state = if fast {
            fwlstm_step(&mut tape, &nodes, &cfg, state, xid).unwrap()
        } else {
            lnlstm_step(&mut tape, &nodes, &cfg, state, xid).unwrap()
        };
        values.push(tape.value(state.h).clone());
        values.push(tape.value(state.c).clone());
        let s = tape.sum(state.h).unwrap();
        loss = Some(match loss {
            None => s,
            Some(l) => tape.add(l, s).unwrap(),
        });
    }
    tape.backward(loss.unwrap()).unwrap();
    let grads = leaves.iter().map(|id| tape.grad(id.unwrap()).unwrap().clone()).collect();
    (values, grads)
}

fn reduction() -> Outcome {
    let (h, d, steps) = (5, 4, 100);
    let mut forward_exact = true;
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let p = lstm_params(h, d, seed);
        let xs: Vec<Tensor> = (0..steps).map(|_| random(&mut rng, d, 1, 1.0)).collect();
        let (fw_values, fw_grads) = lstm_rollout(&p, &xs, true);
        let (ln_values, ln_grads) = lstm_rollout(&p, &xs, false);
        forward_exact &= fw_values
            .iter()
            .zip(&ln_values)
            .all(|(a, b)| a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        for (a, b) in fw_grads.iter().zip(&ln_grads) {
            for (x, y) in a.data().iter().zip(b.data()) {
                if x != y {
                    worst = worst.max((x - y).abs() / x.abs().max(y.abs()));
                }
            }
        }
    }
    Outcome::new(
        forward_exact && worst < 1e-12,
        format!("3 seeds x {steps} steps; forward bit-exact: {forward_exact}; max gradient relative difference {worst:.1e}"),
    )
}

fn max_asymmetry(a: &Tensor) -> f64 {
    let n = a.rows();
    (0..n)
        .flat_map(|r| (0..n).map(move |c| (r, c)))
        .map(|(r, c)| (a.get(r, c) - a.get(c, r)).abs())
        .fold(0.0, f64::max)
}

fn min_eigenvalue(a: &Tensor) -> f64 {
    let m = DMatrix::from_row_slice(a.rows(), a.cols(), a.data());
    m.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn step_cell(kind: CellKind, lstm: &FwLstmParams, rnn: &FwRnnParams, cfg: &FwConfig, s: &CellState, x: &Tensor) -> CellState {
    match kind {
        CellKind::FwRnn => rnn.step(cfg, s, x).unwrap(),
        _ => lstm.step(cfg, true, s, x).unwrap(),
    }
}

/// `g = ReLU(ĝ)` straight from the parameters: joint layer norm over the
/// stacked `4h` preactivation, g block last.
fn gate_g(p: &FwLstmParams, state: &CellState, x: &Tensor) -> Vec<f64> {
    let h = p.hidden();
    let mut pre = Vec::with_capacity(4 * h);
    for (w, u, b) in [(&p.w_i, &p.u_i, &p.b_i), (&p.w_f, &p.u_f, &p.b_f), (&p.w_o, &p.u_o, &p.b_o), (&p.w_g, &p.u_g, &p.b_g)] {
        let (wh, ux) = (w.matmul(&state.h), u.matmul(x));
        pre.extend((0..h).map(|r| wh.data()[r] + ux.data()[r] + b.data()[r]));
    }
    let n = pre.len() as f64;
    let mean = pre.iter().sum::<f64>() / n;
    let var = pre.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + 1e-5).sqrt();
    (3 * h..4 * h)
        .map(|k| ((pre[k] - mean) * inv * p.ln_gate_gain.data()[k] + p.ln_gate_bias.data()[k]).max(0.0))
        .collect()
}

/// Squared norm of the vector written into `A` this step: `g` for FW-LSTM,
/// the previous hidden state for FW-RNN.
fn written_sq(kind: CellKind, lstm: &FwLstmParams, prev: &CellState, x: &Tensor) -> f64 {
    match kind {
        CellKind::FwRnn => prev.h.sum_squares(),
        _ => gate_g(lstm, prev, x).iter().map(|v| v * v).sum(),
    }
}

fn fast_weight_laws() -> Outcome {
    let (h, d) = (6, 4);
    let mut asym = 0.0f64;
    let mut bound_ok = true;
    let mut min_eig = f64::INFINITY;
    let mut decay_exact = true;
    let mut closed_form = 0.0f64;
    for kind in [CellKind::FwLstm, CellKind::FwRnn] {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(if kind == CellKind::FwRnn { 2000 } else { 1000 } + seed);
            let cfg = FwConfig {
                lambda: rng.random_range(0.5..1.0),
                eta: rng.random_range(0.1..1.0),
                ..Default::default()
            };
            let mut lstm = lstm_params(h, d, seed);
            let mut rnn = rnn_params(h, d, seed);
            let mut state = CellState::zeros(h);
            for _ in 0..50 {
                let x = random(&mut rng, d, 1, 1.0);
                let next = step_cell(kind, &lstm, &rnn, &cfg, &state, &x);
                asym = asym.max(max_asymmetry(&next.a));
                let written = written_sq(kind, &lstm, &state, &x);
                let bound = cfg.lambda * state.a.frobenius_norm() + cfg.eta * written;
                bound_ok &= next.a.frobenius_norm() <= bound * (1.0 + 1e-12) + 1e-15;
                min_eig = min_eig.min(min_eigenvalue(&next.a));
                state = next;
            }

            // Zero queries: a hugely negative layer-norm bias drives the
            // written vector to exactly zero, so each step only decays A.
            match kind {
                CellKind::FwRnn => rnn.ln_bias.data_mut().fill(-1e3),
                _ => lstm.ln_gate_bias.data_mut()[3 * h..].fill(-1e3),
            }
            let x = random(&mut rng, d, 1, 1.0);
            state = step_cell(kind, &lstm, &rnn, &cfg, &state, &x);
            let start = state.a.clone();
            let mut expected = start.clone();
            let n = 20;
            for _ in 0..n {
                let x = random(&mut rng, d, 1, 1.0);
                state = step_cell(kind, &lstm, &rnn, &cfg, &state, &x);
                expected = expected.map(|v| v * cfg.lambda);
                decay_exact &= state.a == expected;
            }
            let factor = cfg.lambda.powi(n);
            for (a, s) in state.a.data().iter().zip(start.data()) {
                let c = s * factor;
                if c != 0.0 {
                    closed_form = closed_form.max((a - c).abs() / c.abs());
                }
            }
        }
    }
    let passed = asym == 0.0 && bound_ok && min_eig >= -1e-10 && decay_exact && closed_form < 1e-13;
    Outcome::new(
        passed,
        format!(
            "2 cells x 20 seeds x 50 steps; max asymmetry {asym:e}; Frobenius bound held: {bound_ok}; \
             min eigenvalue {min_eig:.1e}; decay equals repeated lambda scaling: {decay_exact}; \
             vs lambda^n closed form {closed_form:.1e}"
        ),
    )
}

// Criterion 4

fn parameter_counts() -> Outcome {
    let table = [
        (20, [(CellKind::LnLstm, 19_000), (CellKind::FwRnn, 12_000), (CellKind::FwLstm, 19_000)]),
        (50, [(CellKind::LnLstm, 43_000), (CellKind::FwRnn, 20_000), (CellKind::FwLstm, 43_000)]),
        (100, [(CellKind::LnLstm, 100_000), (CellKind::FwRnn, 38_000), (CellKind::FwLstm, 100_000)]),
    ];
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (h, row) in table {
        for (kind, reported) in row {
            let n = ModelParams::init(ModelConfig::new(kind, h, FwConfig::default()), 0)
                .unwrap()
                .count_params();
            let dev = (n as f64 - reported as f64).abs() / reported as f64;
            worst = worst.max(dev);
            parts.push(format!("{kind} h={h} {n}"));
        }
    }
    Outcome::new(worst <= 0.03, format!("max deviation {:.2}%: {}", worst * 100.0, parts.join(", ")))
}

// Criteria 5 to 7

fn desk_config(kind: CellKind, hidden: usize, task: TaskKind) -> TrainConfig {
    let mut cfg = TrainConfig::tuned(kind, hidden, task, 8, DESK_SIZES);
    cfg.batch_size = DESK_BATCH;
    cfg.max_epochs = DESK_EPOCHS;
    cfg.min_epochs = DESK_EPOCHS;
    cfg.seed = DESK_SEED;
    cfg
}

/// Test accuracy of the best-validation parameters.
fn desk_test_accuracy(cfg: &TrainConfig, data: &Dataset) -> (f64, usize) {
    let outcome = train(cfg, data, None).unwrap();
    let test = evaluate(&outcome.best_params, &encode_split(&data.test).unwrap()).unwrap();
    (test.accuracy, outcome.best_epoch)
}

fn art_reproduction() -> Outcome {
    let cfg = desk_config(CellKind::FwLstm, 20, TaskKind::Art);
    let data = Dataset::build(TaskKind::Art, 8, DESK_SIZES, cfg.seed).unwrap();
    let (acc, epoch) = desk_test_accuracy(&cfg, &data);
    Outcome::new(
        acc >= 0.95,
        format!("test accuracy {:.1}% (best validation epoch {epoch}), need >= 95%", acc * 100.0),
    )
}

fn mart_separation() -> Outcome {
    let data = Dataset::build(TaskKind::Mart, 8, DESK_SIZES, DESK_SEED).unwrap();
    let mut acc = [0.0; 3];
    for (slot, kind) in [CellKind::FwLstm, CellKind::FwRnn, CellKind::LnLstm].into_iter().enumerate() {
        acc[slot] = desk_test_accuracy(&desk_config(kind, 20, TaskKind::Mart), &data).0 * 100.0;
    }
    let [fw, rnn, ln] = acc;
    Outcome::new(
        fw - rnn >= 20.0 && fw - ln >= 30.0,
        format!(
            "test accuracy FW-LSTM {fw:.1}, FW-RNN {rnn:.1}, LN-LSTM {ln:.1}; gaps {:.1} (need >= 20) and {:.1} (need >= 30)",
            fw - rnn,
            fw - ln
        ),
    )
}

/// First epoch whose validation accuracy reaches 90%, stopping there.
fn epochs_to_ninety(mut cfg: TrainConfig, data: &Dataset) -> Option<usize> {
    cfg.min_epochs = 1;
    let mut reached = None;
    train_with_observer(&cfg, data, None, |row| {
        if row.val_acc >= 0.9 {
            reached = Some(row.epoch);
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .unwrap();
    reached
}

fn convergence_ordering() -> Outcome {
    let data = Dataset::build(TaskKind::Mart, 8, DESK_SIZES, DESK_SEED).unwrap();
    let Some(fw) = epochs_to_ninety(desk_config(CellKind::FwLstm, 50, TaskKind::Mart), &data) else {
        return Outcome::new(false, format!("FW-LSTM h=50 did not reach 90% validation in {DESK_EPOCHS} epochs"));
    };
    // Only the first `fw` epochs of the FW-RNN run can decide the ordering.
    let mut rnn_cfg = desk_config(CellKind::FwRnn, 50, TaskKind::Mart);
    rnn_cfg.max_epochs = fw;
    let rnn = epochs_to_ninety(rnn_cfg, &data);
    let rnn_text = rnn.map_or_else(|| format!("not reached within {fw} epochs"), |e| e.to_string());
    Outcome::new(
        rnn.is_none(),
        format!("epochs to 90% validation: FW-LSTM {fw}, FW-RNN {rnn_text}"),
    )
}

// Criterion 8

/// Grammar violations found by a parser that shares no code with the
/// generator.
fn violation(kind: TaskKind, k: usize, e: &Example) -> Option<String> {
    let s: Vec<char> = e.input.chars().collect();
    if s.len() != k + 3 || s[k] != '?' || s[k + 1] != '?' {
        return Some(format!("bad layout {:?}", e.input));
    }
    let half = k / 2;
    let (key_pos, value_pos): (Vec<usize>, Vec<usize>) = match kind {
        TaskKind::Art => ((0..half).map(|j| 2 * j).collect(), (0..half).map(|j| 2 * j + 1).collect()),
        TaskKind::Mart => ((0..half).collect(), (half..k).collect()),
    };
    let keys: Vec<char> = key_pos.iter().map(|&p| s[p]).collect();
    let values: Vec<char> = value_pos.iter().map(|&p| s[p]).collect();
    if !keys.iter().all(char::is_ascii_lowercase) || !values.iter().all(char::is_ascii_digit) {
        return Some("wrong symbol class".into());
    }
    if keys.iter().collect::<HashSet<_>>().len() != half {
        return Some("duplicate key".into());
    }
    let Some(j) = keys.iter().position(|c| *c == s[k + 2]) else {
        return Some("query is not a key".into());
    };
    let expected_distance = if kind == TaskKind::Art { 1 } else { half };
    if value_pos[j] - key_pos[j] != expected_distance {
        return Some("key/value distance".into());
    }
    (e.target != values[j]).then(|| "target is not the paired value".into())
}

fn generator_fidelity() -> Outcome {
    let mut violations = 0;
    for kind in [TaskKind::Art, TaskKind::Mart] {
        for k in [2, 8, 16, 30] {
            let examples = generate_split(kind, k, 10_000, 4321 + k as u64, Split::Train).unwrap();
            violations += examples.iter().filter(|e| violation(kind, k, e).is_some()).count();
        }
    }
    let mut worst = 0.0f64;
    for kind in [TaskKind::Art, TaskKind::Mart] {
        let examples = generate_split(kind, 8, 100_000, 17, Split::Train).unwrap();
        let mut counts = [0usize; 10];
        for e in &examples {
            counts[e.target.to_digit(10).unwrap() as usize] += 1;
        }
        for c in counts {
            worst = worst.max((c as f64 / examples.len() as f64 - 0.1).abs());
        }
    }
    Outcome::new(
        violations == 0 && worst <= 0.01,
        format!(
            "80000 examples, {violations} violations; max target-digit deviation {:.2} points over 100000 per task",
            worst * 100.0
        ),
    )
}

// Criterion 9

fn fwlstm(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_fwlstm")).args(args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn train_cli(config: &Path, data: Option<&Path>, out: &Path) -> RunManifest {
    let mut args = vec!["train", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    if let Some(d) = data {
        args.extend(["--data", d.to_str().unwrap()]);
    }
    fwlstm(&args);
    RunManifest::read(&out.join("manifest.json")).unwrap()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = TrainConfig::tuned(CellKind::FwLstm, 20, TaskKind::Mart, 8, SplitSizes::new(2_000, 200, 200));
    cfg.batch_size = 32;
    cfg.max_epochs = 2;
    cfg.min_epochs = 2;
    cfg.seed = 5;
    let config = dir.path().join("config.json");
    fs::write(&config, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();

    let first = dir.path().join("first");
    let manifest = train_cli(&config, None, &first);
    // Replay from what the manifest records: its config and its data.
    let replay_config = dir.path().join("replay.json");
    fs::write(&replay_config, serde_json::to_string(&manifest.config).unwrap()).unwrap();
    let second = dir.path().join("second");
    let replay = train_cli(&replay_config, Some(&first.join(&manifest.artifacts.data_dir)), &second);
    let third = dir.path().join("third");
    train_cli(&config, None, &third);

    let a = read_metrics(&first.join("metrics.csv")).unwrap();
    let mut identical = manifest.status == RunStatus::Completed && replay.status == RunStatus::Completed && a.len() == 2;
    for other in [&second, &third] {
        let b = read_metrics(&other.join("metrics.csv")).unwrap();
        identical &= a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.same_numbers(y));
        identical &= fs::read(first.join(FINAL_CHECKPOINT)).unwrap() == fs::read(other.join(FINAL_CHECKPOINT)).unwrap();
    }
    identical &= replay.dataset == manifest.dataset;
    Outcome::new(
        identical,
        format!("3 runs x 2 epochs, metrics and final checkpoints bit-identical: {identical}"),
    )
}

// Criterion 10

fn trial(index: usize, acc: f64) -> TrialResult {
    TrialResult {
        index,
        point: appendix_grid(CellKind::FwLstm)[index],
        seed: 0,
        status: TrialStatus::Completed,
        best_val_acc: acc,
        best_epoch: 1,
        final_val_acc: acc,
    }
}

fn ranked_correctly(trials: &[TrialResult]) -> bool {
    trials.windows(2).all(|w| {
        let key = |t: &TrialResult| match t.status {
            TrialStatus::Completed => t.best_val_acc,
            TrialStatus::Failed(_) => f64::NEG_INFINITY,
        };
        key(&w[0]) > key(&w[1]) || (key(&w[0]) == key(&w[1]) && w[0].index < w[1].index)
    })
}

fn grid_harness() -> Outcome {
    let sizes: Vec<(CellKind, usize)> = CellKind::ALL.iter().map(|k| (*k, appendix_grid(*k).len())).collect();
    let distinct = |k: CellKind| {
        let pts: Vec<GridPoint> = appendix_grid(k);
        pts.iter().enumerate().all(|(i, a)| pts[i + 1..].iter().all(|b| a != b))
    };
    let enumeration = sizes
        .iter()
        .all(|(k, n)| *n == if k.uses_fast_weights() { 80 } else { 16 })
        && distinct(CellKind::FwLstm)
        && distinct(CellKind::FwRnn);

    // Ties resolve to the earlier enumeration index; failures rank last.
    let mut synthetic = vec![trial(7, 0.5), trial(3, 0.9), trial(5, 0.9), trial(1, 0.2), trial(0, 0.9)];
    synthetic[3].status = TrialStatus::Failed("diverged".into());
    rank_trials(&mut synthetic);
    let order: Vec<usize> = synthetic.iter().map(|t| t.index).collect();
    let tie_break = order == [0, 3, 5, 7, 1];

    let dir = tempfile::tempdir().unwrap();
    let mut smoke_ok = true;
    for kind in [CellKind::LnLstm, CellKind::FwLstm] {
        let mut base = TrainConfig::tuned(kind, 4, TaskKind::Art, 4, SplitSizes::new(32, 16, 16));
        base.batch_size = 8;
        base.seed = 3;
        let data = Dataset::build(TaskKind::Art, 4, base.task.sizes, base.seed).unwrap();
        let out = dir.path().join(kind.label());
        let trials = grid_search(&base, &data, 2, 1, Some(&out)).unwrap();
        let expected = if kind.uses_fast_weights() { 80 } else { 16 };
        smoke_ok &= trials.len() == expected
            && ranked_correctly(&trials)
            && trials.iter().all(|t| t.status == TrialStatus::Completed)
            && (0..expected).all(|i| {
                read_metrics(&out.join(format!("trial_{i:03}")).join("metrics.csv")).is_ok_and(|m| m.len() == 2)
            });
    }
    let counts: Vec<String> = sizes.iter().map(|(k, n)| format!("{k} {n}")).collect();
    Outcome::new(
        enumeration && tie_break && smoke_ok,
        format!(
            "trials {}; tie-break order {order:?}; 2-epoch smoke grids ranked and complete: {smoke_ok}",
            counts.join(", ")
        ),
    )
}
