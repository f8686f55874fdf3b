use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nanoscope_core::estimator::build_matrix_with;
use nanoscope_core::exec::Execution;
use nanoscope_core::index::{build_index, AudienceQuery, CensorPolicy};
use nanoscope_core::population::{generate_population, GeneratorConfig};
use nanoscope_core::selection::{select_interests, SelectionStrategy};

fn intersection(c: &mut Criterion) {
    let pop = generate_population(&GeneratorConfig::calibrated(50_000, 3)).unwrap();
    let idx = build_index(&pop).unwrap();
    let strategy = SelectionStrategy::random(1);
    let queries: Vec<AudienceQuery> = pop
        .users()
        .iter()
        .step_by(97)
        .take(200)
        .map(|u| AudienceQuery::new(select_interests(u, &pop, &strategy)).unwrap())
        .collect();

    c.bench_function("audience_size/25_interests", |b| {
        let mut i = 0;
        b.iter(|| {
            i = (i + 1) % queries.len();
            black_box(idx.audience_size(&queries[i]).unwrap())
        })
    });

    let mut group = c.benchmark_group("prefix_matrix");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| build_matrix_with(&pop, &idx, &strategy, CensorPolicy::UNCENSORED, None, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, intersection);
criterion_main!(benches);
