use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;
use sapalm::model::Regularizer;
use sapalm::rng::worker_rng;
use sapalm::{generate_data, spca_instance, FactorizationState, Firm, L1};

fn prox(c: &mut Criterion) {
    let mut rng = worker_rng(1, 0);
    let y: Vec<f64> = (0..10_000).map(|_| rng.random_range(-3.0..3.0)).collect();
    let mut out = vec![0.0; y.len()];
    let l1 = L1::new(0.5).unwrap();
    let firm = Firm::new(0.5, 2.0).unwrap();
    c.bench_function("prox_l1_10k", |b| b.iter(|| l1.prox_into(black_box(&y), 0.3, &mut out).unwrap()));
    c.bench_function("prox_firm_10k", |b| b.iter(|| firm.prox_into(black_box(&y), 0.3, &mut out).unwrap()));
}

fn factorization(c: &mut Criterion) {
    let mut group = c.benchmark_group("factorization");
    for n in [200usize, 1000] {
        let d = 10;
        let data = Arc::new(generate_data(n, 1).unwrap());
        let problem = spca_instance(data, d, 0.1, sapalm::DEFAULT_SAFETY).unwrap();
        let x = FactorizationState::random(d, n, 1).to_blocks();
        let mut g = vec![0.0; n * d];
        group.bench_with_input(BenchmarkId::new("gradient_x", n), &n, |b, _| {
            b.iter(|| problem.loss().partial_gradient_into(0, black_box(&x), &mut g))
        });
        group
            .bench_with_input(BenchmarkId::new("objective", n), &n, |b, _| b.iter(|| problem.objective(black_box(&x))));
        group.bench_with_input(BenchmarkId::new("lipschitz", n), &n, |b, _| {
            b.iter(|| problem.loss().lipschitz(black_box(&x)))
        });
        let mut gg = vec![0.0; d];
        group.bench_with_input(BenchmarkId::new("group_gradient_x", n), &n, |b, _| {
            b.iter(|| problem.loss().group_gradient_into(0, 7, black_box(&x), &mut gg))
        });
    }
    group.finish();
}

criterion_group!(benches, prox, factorization);
criterion_main!(benches);
