use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use wavefront::diagnostics::{adjoint_integrate, front_jacobian, melnikov_sensitivity};
use wavefront::perturbation::case1_bump;
use wavefront::{DiagnosticsOptions, PotentialModel};
use wavefront_bench::nagumo_front;

fn jacobian(c: &mut Criterion) {
    let sol = nagumo_front(0.25);
    let opts = DiagnosticsOptions::default();
    c.bench_function("front_jacobian_nagumo", |b| b.iter(|| front_jacobian(black_box(&sol), &opts).unwrap()));
}

fn melnikov(c: &mut Criterion) {
    let sol = nagumo_front(0.25);
    let opts = DiagnosticsOptions::default();
    let adj = adjoint_integrate(&sol, &[0.8, -0.6], None, &opts).unwrap();
    let w = PotentialModel::new(case1_bump(&[0.5], 0.2, &[1.0]).unwrap());
    c.bench_function("adjoint_nagumo", |b| {
        b.iter(|| adjoint_integrate(black_box(&sol), &[0.8, -0.6], None, &opts).unwrap())
    });
    c.bench_function("melnikov_nagumo", |b| {
        b.iter(|| melnikov_sensitivity(&sol.trajectory, &adj, black_box(&w), &opts))
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = jacobian, melnikov
}
criterion_main!(benches);
