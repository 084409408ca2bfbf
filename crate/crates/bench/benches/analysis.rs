use criterion::{black_box, criterion_group, criterion_main, Criterion};

use petriflow::structural::{minimal_p_semiflows, minimal_t_invariants};
use petriflow::{dsl, gspn, SolverOptions};
use petriflow_bench::{functional, grid, short_sim, timed_functional, WAVEFRONT3_SOURCE};

fn structural(c: &mut Criterion) {
    let net = functional(3, true);
    c.bench_function("p_semiflows_functional_3x3", |b| b.iter(|| minimal_p_semiflows(black_box(&net))));
    c.bench_function("t_invariants_functional_3x3", |b| b.iter(|| minimal_t_invariants(black_box(&net))));
}

fn bounds(c: &mut Criterion) {
    let g = grid(3);
    c.bench_function("bounds_grid_3x3", |b| b.iter(|| petriflow::bounds(black_box(&g.net), &g.timing).unwrap()));
}

fn ctmc(c: &mut Criterion) {
    let m = timed_functional(2, 0.1);
    let mut group = c.benchmark_group("gspn");
    group.sample_size(10);
    group.bench_function("functional_2x2", |b| {
        b.iter(|| gspn::analyze(&m.net, &m.timing, 100_000, &SolverOptions::default()).unwrap())
    });
    group.finish();
}

fn simulation(c: &mut Criterion) {
    let g = grid(3);
    let cfg = short_sim(5_000);
    let mut group = c.benchmark_group("des");
    group.sample_size(10);
    group.bench_function("grid_3x3_5k_firings", |b| b.iter(|| petriflow::simulate(&g.net, &g.timing, &cfg).unwrap()));
    group.finish();
}

fn language(c: &mut Criterion) {
    c.bench_function("dsl_flatten_wavefront3", |b| b.iter(|| dsl::load(black_box(WAVEFRONT3_SOURCE), None).unwrap()));
}

criterion_group!(benches, structural, bounds, ctmc, simulation, language);
criterion_main!(benches);
