//! Compares the data-parallel samplers against the sequential fallback.
//! With the default `parallel` feature, `simulate` fans trajectories out
//! over rayon; `simulate_sequential` is the single-threaded twin producing
//! bit-identical output. Propagation itself is sequential and included as a
//! reference point.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ceg::dynamic::{forecast, revise_future, DcegModel, ForecastQuery};
use ceg::fixtures;
use ceg::oracle::{simulate, simulate_sequential};
use ceg::propagation::{build_transporter, propagate};

fn bench_simulate(c: &mut Criterion) {
    let graph = fixtures::reinfection_present_slice();
    let mut group = c.benchmark_group("simulate");
    for n in [10_000usize, 100_000] {
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
            b.iter(|| simulate(&graph, n, 42).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| simulate_sequential(&graph, n, 42).unwrap())
        });
    }
    group.finish();
}

fn bench_first_passage(c: &mut Criterion) {
    let (template, _) = fixtures::reinfection_model_graph();
    let model = DcegModel::new(template).unwrap();
    let smp = revise_future(&model, None).unwrap();
    let query = ForecastQuery::FirstPassage {
        from: "w0".into(),
        target: "w_inf".into(),
    };
    c.bench_function("first_passage_50k", |b| {
        b.iter(|| forecast(&smp, &query, 50_000, 7).unwrap())
    });
}

fn bench_propagate(c: &mut Criterion) {
    let graph = fixtures::reinfection_present_slice();
    let evidence = fixtures::treated_recovered_evidence();
    let transporter = build_transporter(&graph, &evidence).unwrap();
    c.bench_function("propagate_present_window", |b| {
        b.iter(|| propagate(&graph, &transporter, &evidence).unwrap())
    });
}

criterion_group!(
    benches,
    bench_simulate,
    bench_first_passage,
    bench_propagate
);
criterion_main!(benches);
