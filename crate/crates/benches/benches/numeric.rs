use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hemocast_core::linalg::{expm, matmul};
use hemocast_core::models::{lmu_matrices, Batch, ForwardMode, ModelConfig, Registry};
use hemocast_core::{InitScheme, Tape, Tensor};

fn linalg(c: &mut Criterion) {
    for d in [8, 32, 64] {
        let (a, _) = lmu_matrices(d, 30.0).unwrap();
        c.bench_with_input(BenchmarkId::new("expm_lmu", d), &a, |b, a| b.iter(|| expm(black_box(a)).unwrap()));
    }
    let x = hemocast_core::tensor::seeded_init(&[64, 128], InitScheme::UniformFanIn, 1);
    let y = hemocast_core::tensor::seeded_init(&[128, 64], InitScheme::UniformFanIn, 2);
    c.bench_function("matmul_64x128x64", |b| b.iter(|| matmul(black_box(&x), black_box(&y)).unwrap()));
}

/// One forward and backward pass on a batch of 64 default-size windows.
fn training_step(c: &mut Criterion) {
    let registry = Registry::builtin();
    let rows: Vec<Vec<f64>> = (0..64).map(|i| (0..30).map(|t| ((i * 30 + t) as f64 * 0.1).sin()).collect()).collect();
    let mut batch = Batch::from_rows(&rows).unwrap();
    batch.target = Some(Tensor::zeros([64, 30]));
    let mut group = c.benchmark_group("train_step_b64");
    group.sample_size(10);
    for arch in ["dnn", "seq2seq", "seq2seq-attn", "lmu", "tcn"] {
        let model = registry.build(&ModelConfig::new(arch).unwrap()).unwrap();
        let params = model.init();
        group.bench_function(arch, |b| {
            b.iter(|| {
                let tape = Tape::new();
                let vars: Vec<_> = params.tensors().iter().map(|p| tape.leaf(p.clone())).collect();
                let y = model.forward(&tape, &vars, &batch, &mut ForwardMode::Inference).unwrap();
                let loss = y.mse_loss(tape.constant(Tensor::zeros([64, 30]))).unwrap();
                tape.backward(loss).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, linalg, training_step);
criterion_main!(benches);
