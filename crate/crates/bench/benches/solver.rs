use criterion::{criterion_group, criterion_main, Criterion};
use hmcycle::dde::solve_clark;
use hmcycle::{nominal_parameters, SolverConfig};
use std::hint::black_box;

fn clark_200_days(c: &mut Criterion) {
    let params = nominal_parameters();
    let mut group = c.benchmark_group("clark");
    for (name, per_unit) in [("per_unit_step", true), ("per_step", false)] {
        let cfg = SolverConfig { error_per_unit_step: per_unit, ..SolverConfig::default() };
        group.bench_function(format!("200_days_{name}"), |b| {
            b.iter(|| solve_clark(black_box(&params), 200.0, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, clark_200_days);
criterion_main!(benches);
