//! Field-map throughput: data-parallel sweep versus the sequential
//! fallback on the same grid, so the cost of disabling the `parallel`
//! feature is measurable.

use criterion::{criterion_group, criterion_main, Criterion};

use magscatter::reference;
use magscatter::sweep::{run_sweep_seq, Grid};

fn bench_field_map(c: &mut Criterion) {
    let model = reference::loaded_cavity_at_node(-10.0).expect("reference node");
    let grid = Grid::uniform(10.6, 12.4, 301, 0.36, 0.44, 41).expect("grid");
    let mut group = c.benchmark_group("field-map-301x41");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| run_sweep_seq(&model, &grid).expect("sweep"))
    });
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        b.iter(|| magscatter::sweep::run_sweep_par(&model, &grid).expect("sweep"))
    });
    group.finish();
}

criterion_group!(benches, bench_field_map);
criterion_main!(benches);
