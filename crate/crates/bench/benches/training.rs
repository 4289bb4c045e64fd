use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use vwskill_bench::features;
use vwskill_core::model::{train, Mlp, MlpConfig, TrainConfig};

fn epoch(c: &mut Criterion) {
    let (x, y) = features(2_000, 23, 3);
    let mlp = MlpConfig::deep(23, 0);
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let mut group = c.benchmark_group("training");
    group.sample_size(10);
    group.bench_function("deep_epoch_2000x23", |b| {
        b.iter(|| train(black_box(&x), &y, &mlp, &cfg).unwrap())
    });
    let net = Mlp::init(&mlp).unwrap();
    group.bench_function("gradient_batch_72", |b| {
        let xb = x.select_rows(&(0..72).collect::<Vec<_>>());
        let yb = &y.as_slice()[..72];
        b.iter(|| net.loss_and_gradient(black_box(&xb), yb, &mlp.l2_per_layer).unwrap())
    });
    group.finish();
}

criterion_group!(benches, epoch);
criterion_main!(benches);
