use std::f64::consts::FRAC_PI_3;

use bubbleflow::flow::{nonlinear_rhs, step_implicit, FlowConfig};
use bubbleflow::linops::{assemble_pencil, spectrum};
use bubbleflow_bench::{perturbed, reference, state};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn rhs(c: &mut Criterion) {
    let mut group = c.benchmark_group("rhs");
    for n in [64, 128] {
        let r = reference(FRAC_PI_3, n);
        let f = perturbed(&r);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| nonlinear_rhs(&r, black_box(&f)).unwrap()));
    }
    group.finish();
}

fn step(c: &mut Criterion) {
    let r = reference(FRAC_PI_3, 64);
    let s = state(&r);
    let cfg = FlowConfig::default();
    let mut group = c.benchmark_group("step");
    group.sample_size(10);
    // a fresh state has no cached Jacobian, so this includes one dense build
    group.bench_function("implicit/64", |b| b.iter(|| step_implicit(&r, black_box(&s), 1e-3, &cfg).unwrap()));
    group.finish();
}

fn pencil(c: &mut Criterion) {
    let mut group = c.benchmark_group("pencil");
    for n in [64, 128] {
        let r = reference(1.2, n);
        group.bench_with_input(BenchmarkId::new("assemble", n), &n, |b, _| b.iter(|| assemble_pencil(&r.bubble, &r.grid)));
    }
    let r = reference(1.2, 64);
    let p = assemble_pencil(&r.bubble, &r.grid);
    group.sample_size(10);
    group.bench_function("spectrum/64", |b| b.iter(|| spectrum(black_box(&p), 10).unwrap()));
    group.finish();
}

criterion_group!(benches, rhs, step, pencil);
criterion_main!(benches);
