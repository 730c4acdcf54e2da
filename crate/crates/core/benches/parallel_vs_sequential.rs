use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use uneven::corpus::{generate_synthetic_pool_with, SyntheticConfig};
use uneven::model::{grad_batch_with, predict_all_with, Architecture, ClassifierParams, Head, Objective, Sample};
use uneven::par::Exec;

fn execs() -> Vec<(&'static str, Exec)> {
    vec![
        ("sequential", Exec::Sequential),
        #[cfg(feature = "parallel")]
        ("parallel", Exec::Parallel),
    ]
}

fn fixture(n: usize) -> (ClassifierParams, Vec<Sample>) {
    let cfg = SyntheticConfig { n_examples: n, d_feat: 32, ..Default::default() };
    let pool = generate_synthetic_pool_with(Exec::Sequential, &cfg).unwrap();
    let params = ClassifierParams::xavier(Architecture::new(32, vec![64], 3, Head::Softmax), 0);
    let batch = pool
        .iter()
        .map(|e| Sample::new(e.features.clone(), e.true_dist.clone().unwrap().into_vec()))
        .collect();
    (params, batch)
}

fn grad(c: &mut Criterion) {
    let mut group = c.benchmark_group("grad_batch");
    for n in [128, 640, 4096] {
        let (params, batch) = fixture(n);
        for (name, exec) in execs() {
            group.bench_with_input(BenchmarkId::new(name, n), &batch, |b, batch| {
                b.iter(|| grad_batch_with(exec, black_box(&params), batch, Objective::SoftCrossEntropy).unwrap())
            });
        }
    }
    group.finish();
}

fn predict(c: &mut Criterion) {
    let mut group = c.benchmark_group("predict_all");
    let (params, batch) = fixture(10_000);
    let xs: Vec<Vec<f64>> = batch.into_iter().map(|s| s.x).collect();
    for (name, exec) in execs() {
        group.bench_function(name, |b| b.iter(|| predict_all_with(exec, black_box(&params), &xs).unwrap()));
    }
    group.finish();
}

fn pool(c: &mut Criterion) {
    let mut group = c.benchmark_group("synthetic_pool");
    group.sample_size(20);
    let cfg = SyntheticConfig { n_examples: 20_000, ..Default::default() };
    for (name, exec) in execs() {
        group.bench_function(name, |b| b.iter(|| generate_synthetic_pool_with(exec, black_box(&cfg)).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, grad, predict, pool);
criterion_main!(benches);
