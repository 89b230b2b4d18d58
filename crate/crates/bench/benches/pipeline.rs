use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use pcac_bench::{ramp_scenario, run_closed_loop, QpWorkload, RlsWorkload};
use pcac_core::f_quantile;
use pcac_core::FQuantileQuery;

fn rls(c: &mut Criterion) {
    let w = RlsWorkload::new(7);
    c.bench_function("rls_update_n6_m1_p2", |b| b.iter(|| w.run(black_box(1.01))));
}

fn qp(c: &mut Criterion) {
    let w = QpWorkload::new(7);
    c.bench_function("qp_solve_cold_l40", |b| b.iter(|| w.solve_cold()));
}

fn quantile(c: &mut Criterion) {
    let q = FQuantileQuery::new(0.999, 40.0, 200.0).unwrap();
    c.bench_function("f_quantile_0999_40_200", |b| b.iter(|| f_quantile(black_box(q)).unwrap()));
}

fn closed_loop(c: &mut Criterion) {
    let scenario = ramp_scenario(200);
    let mut group = c.benchmark_group("closed_loop");
    group.sample_size(10);
    group.bench_function("ramp_200_steps", |b| b.iter(|| run_closed_loop(&scenario)));
    group.finish();
}

criterion_group!(benches, rls, qp, quantile, closed_loop);
criterion_main!(benches);
