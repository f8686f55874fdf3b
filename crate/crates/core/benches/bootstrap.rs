use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nanoscope_core::estimator::{bootstrap_ci_with, build_matrix};
use nanoscope_core::exec::Execution;
use nanoscope_core::index::{build_index, CensorPolicy};
use nanoscope_core::population::{generate_population, GeneratorConfig};
use nanoscope_core::selection::SelectionStrategy;

fn bootstrap(c: &mut Criterion) {
    let pop = generate_population(&GeneratorConfig::calibrated(50_000, 5)).unwrap();
    let idx = build_index(&pop).unwrap();
    let matrix = build_matrix(&pop, &idx, &SelectionStrategy::random(2), CensorPolicy::UNCENSORED, None).unwrap();

    let mut group = c.benchmark_group("bootstrap_1000");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| bootstrap_ci_with(&matrix, 90.0, 1000, 7, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bootstrap);
criterion_main!(benches);
