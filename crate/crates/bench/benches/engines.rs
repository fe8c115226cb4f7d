use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sapalm::{generate_data, run, spca_instance, DelaySchedule, FactorizationState, Mode, RunConfig, Selection};

fn engines(c: &mut Criterion) {
    let (n, d) = (500, 10);
    let data = Arc::new(generate_data(n, 3).unwrap());
    let problem = spca_instance(data, d, 0.1, sapalm::DEFAULT_SAFETY).unwrap();
    let x0 = FactorizationState::random(d, n, 3).to_blocks();
    let base = RunConfig { iterations: 8, stride: Some(0), ..RunConfig::default() };

    let mut group = c.benchmark_group("engines_4_epochs");
    group.sample_size(10);
    group.bench_function("sync", |b| b.iter(|| run(&problem, &x0, &base).unwrap()));
    let sim = RunConfig {
        mode: Mode::SimAsync,
        tau: 4,
        delays: DelaySchedule::IidUniform { tau: 4, seed: 1 },
        ..base.clone()
    };
    group.bench_function("sim_async_tau4", |b| b.iter(|| run(&problem, &x0, &sim).unwrap()));
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    for p in [1usize, 2, 4].into_iter().filter(|&p| p <= cores.max(1)) {
        let cfg = RunConfig {
            mode: Mode::Async,
            workers: p,
            selection: Selection::DedicatedCyclic,
            tau: 2 * p,
            iterations: 8,
            ..base.clone()
        };
        group.bench_with_input(BenchmarkId::new("async_cyclic", p), &p, |b, _| {
            b.iter(|| run(&problem, &x0, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, engines);
criterion_main!(benches);
