use criterion::{criterion_group, criterion_main, Criterion};
use kgrank_core::evalbench::{ndcg_at_k, ndcg_scores};
use kgrank_core::EntityId;
use std::hint::black_box;

fn criterion_benchmark(c: &mut Criterion) {
    let data = kgrank_bench::graph(10_000);
    // truths cover the observed fifth of the graph, estimates cover all of it
    let truths: Vec<(EntityId, f64)> =
        data.signals.signal(0).values().iter().map(|(&id, &v)| (id, v)).collect();
    let estimates: Vec<(EntityId, f64)> = data
        .latent
        .iter()
        .enumerate()
        .map(|(i, &v)| (EntityId(i as u32), v))
        .collect();

    c.bench_function("ndcg_at_100_10k", |b| {
        b.iter(|| black_box(ndcg_at_k(&estimates, &truths, 100).unwrap()))
    });
    c.bench_function("ndcg_scores_at_100_10k", |b| {
        b.iter(|| black_box(ndcg_scores(&data.latent, &truths, 100).unwrap()))
    });
}

criterion_group!(benches, criterion_benchmark);
criterion_main!(benches);
