use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use hemocast_core::bench::{evaluate, PersistenceBaseline};
use hemocast_core::signal::{downsample, make_windows, TrendRule, WindowSpec, AT_BLOCK};
use hemocast_core::synth::{generate, SynthConfig};

fn pipeline(c: &mut Criterion) {
    let cfg = SynthConfig::default();
    let mut group = c.benchmark_group("two_hour_recording");
    group.sample_size(10);
    group.bench_function("synthesize", |b| b.iter(|| generate(black_box(&cfg), "bench").unwrap()));
    let rt = generate(&cfg, "bench").unwrap().series;
    group.bench_function("downsample", |b| b.iter(|| downsample(black_box(&rt), AT_BLOCK).unwrap()));
    let at = downsample(&rt, AT_BLOCK).unwrap();
    group.bench_function("windows", |b| {
        b.iter(|| make_windows(black_box(&at), WindowSpec::default(), TrendRule::default()).unwrap())
    });
    let windows = make_windows(&at, WindowSpec::default(), TrendRule::default()).unwrap();
    let persistence = PersistenceBaseline { out_len: 30 };
    group.bench_function("evaluate_persistence", |b| b.iter(|| evaluate(&persistence, black_box(&windows)).unwrap()));
    group.finish();
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
