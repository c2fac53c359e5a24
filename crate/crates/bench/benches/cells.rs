use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fwlstm::cells::initialize;
use fwlstm::model::{batch_gradients, ModelConfig, ModelParams};
use fwlstm::tasks::{generate_split, Split};
use fwlstm::trainer::encode_split;
use fwlstm::{CellKind, CellParams, FwConfig, TaskKind, Tensor};

fn cell_steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("cell_step");
    let x = Tensor::filled(100, 1, 0.1);
    let cfg = FwConfig::default();
    for h in [20, 50, 100] {
        for kind in CellKind::ALL {
            let (params, state) = initialize(kind, h, 100, 1).unwrap();
            group.bench_with_input(BenchmarkId::new(kind.label(), h), &h, |b, _| match &params {
                CellParams::Lstm(p) => b.iter(|| p.step(&cfg, kind == CellKind::FwLstm, &state, &x).unwrap()),
                CellParams::Rnn(p) => b.iter(|| p.step(&cfg, &state, &x).unwrap()),
            });
        }
    }
    group.finish();
}

fn batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("batch_gradients_32_mart_k8");
    group.sample_size(10);
    let examples = encode_split(&generate_split(TaskKind::Mart, 8, 32, 3, Split::Train).unwrap()).unwrap();
    for h in [20, 50] {
        for kind in CellKind::ALL {
            let params = ModelParams::init(ModelConfig::new(kind, h, FwConfig::default()), 2).unwrap();
            group.bench_with_input(BenchmarkId::new(kind.label(), h), &h, |b, _| {
                b.iter(|| batch_gradients(&params, &examples).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, cell_steps, batch);
criterion_main!(benches);
