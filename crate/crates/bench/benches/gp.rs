use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hmcycle::dde::solve_clark;
use hmcycle::gp::{fit, GpModel, KernelSpec, OptimizerConfig};
use hmcycle::{nominal_parameters, SolverConfig, StateVector};
use std::hint::black_box;

/// Standardised daily LH over two cycles of the nominal individual.
fn lh_window(step: usize) -> (Vec<f64>, Vec<f64>) {
    let traj = solve_clark(&nominal_parameters(), 120.0, &SolverConfig::default()).unwrap();
    let x: Vec<f64> = (51..108).step_by(step).map(|d| d as f64).collect();
    let y = traj.channel(StateVector::LH, &x).unwrap();
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    let s = (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
    (x, y.iter().map(|v| (v - m) / s).collect())
}

fn kernel() -> KernelSpec {
    KernelSpec::sum(KernelSpec::rq(1.0, 11.4, 1.0), KernelSpec::periodic(1.0, 1.0, 1.0 / 28.0))
}

fn evidence(c: &mut Criterion) {
    let (x, y) = lh_window(1);
    let model = GpModel::new(kernel(), 1e-2, 0.0, x, y).unwrap();
    c.bench_function("evidence_and_gradient_57_points", |b| {
        b.iter(|| black_box(&model).log_marginal_likelihood_grad())
    });
}

fn fitting(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_sum_kernel");
    group.sample_size(10);
    let mut opt = OptimizerConfig::default();
    opt.bounds.pe_frequency = (1.0 / 42.0, 1.0 / 18.0);
    for step in [1usize, 2, 6] {
        let (x, y) = lh_window(step);
        group.bench_with_input(BenchmarkId::new("sampling_period", step), &(x, y), |b, (x, y)| {
            b.iter(|| fit(x, y, &kernel(), &opt).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, evidence, fitting);
criterion_main!(benches);
