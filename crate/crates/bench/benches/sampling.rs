use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lqg_core::gff::{sample_boundary_trace, GaussianField};
use lqg_core::gmc::{boundary_measure, bulk_measure};
use lqg_core::grid::{PolarGrid, PolarGridSpec};
use lqg_core::RngStream;
use std::hint::black_box;

fn field_block(c: &mut Criterion) {
    let grid = PolarGrid::new(PolarGridSpec::default()).unwrap();
    let field = GaussianField::from_cells(grid.cells()).unwrap();
    let base = RngStream::new(0, 0);
    c.bench_function("field_block_default_grid", |b| {
        b.iter(|| black_box(field.sample_block(&base, 0)))
    });
    let weights = grid.chaos_weights(1.0);
    let block = field.sample_block(&base, 0);
    c.bench_function("bulk_measure_default_grid", |b| {
        b.iter(|| black_box(bulk_measure(&block[0], 1.0, &weights).unwrap()))
    });
}

fn boundary(c: &mut Criterion) {
    let mut group = c.benchmark_group("boundary_trace");
    for n in [256usize, 1024, 4096] {
        let stream = RngStream::new(0, 1);
        group.bench_with_input(BenchmarkId::new("sample", n), &n, |b, &n| {
            b.iter(|| black_box(sample_boundary_trace(n, &stream).unwrap()))
        });
        let trace = sample_boundary_trace(n, &stream).unwrap();
        group.bench_with_input(BenchmarkId::new("measure", n), &n, |b, &n| {
            b.iter(|| black_box(boundary_measure(&trace, 1.0, 4 * n).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, field_block, boundary);
criterion_main!(benches);
