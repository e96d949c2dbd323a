use criterion::{criterion_group, criterion_main, Criterion};
use lqg_core::maps::{count_exact, BoltzmannConfig, BoltzmannTable};
use lqg_core::RngStream;
use std::hint::black_box;

fn counting(c: &mut Criterion) {
    c.bench_function("count_exact_1e4_100", |b| {
        b.iter(|| black_box(count_exact(10_000, 100).unwrap()))
    });
}

fn boltzmann(c: &mut Criterion) {
    let cfg = BoltzmannConfig::new(0.05, 1.0, 1.0).unwrap();
    c.bench_function("boltzmann_table_a0.05", |b| {
        b.iter(|| black_box(BoltzmannTable::new(cfg).unwrap()))
    });
    let table = BoltzmannTable::new(cfg).unwrap();
    let stream = RngStream::new(0, 0);
    c.bench_function("boltzmann_draws_1e4", |b| {
        b.iter(|| black_box(table.sample_many(10_000, &stream)))
    });
}

criterion_group!(benches, counting, boltzmann);
criterion_main!(benches);
