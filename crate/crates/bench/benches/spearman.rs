use criterion::{criterion_group, criterion_main, Criterion};
use kgrank_core::baselines::pagerank;
use kgrank_core::signals::spearman;
use kgrank_core::WalkConfig;
use std::hint::black_box;

fn criterion_benchmark(c: &mut Criterion) {
    let data = kgrank_bench::graph(10_000);
    let walked = pagerank(&data.kg, &WalkConfig::default()).unwrap();

    c.bench_function("spearman_10k", |b| {
        b.iter(|| black_box(spearman(&data.latent, &walked).unwrap()))
    });
}

criterion_group!(benches, criterion_benchmark);
criterion_main!(benches);
