use criterion::{criterion_group, criterion_main, Criterion};
use kgrank_core::baselines::{har, pagerank, personalized_pagerank};
use kgrank_core::WalkConfig;
use std::hint::black_box;

fn criterion_benchmark(c: &mut Criterion) {
    let small = kgrank_bench::graph(2_000);
    let large = kgrank_bench::graph(10_000);
    let config = WalkConfig::default();

    c.bench_function("pagerank_2k", |b| {
        b.iter(|| black_box(pagerank(&small.kg, &config).unwrap()))
    });
    c.bench_function("pagerank_10k", |b| {
        b.iter(|| black_box(pagerank(&large.kg, &config).unwrap()))
    });

    let teleport = large.signals.signal(0);
    c.bench_function("personalized_pagerank_10k", |b| {
        b.iter(|| black_box(personalized_pagerank(&large.kg, teleport, &config).unwrap()))
    });
    c.bench_function("har_10k", |b| {
        b.iter(|| black_box(har(&large.kg, teleport, &config).unwrap()))
    });
}

criterion_group!(benches, criterion_benchmark);
criterion_main!(benches);
