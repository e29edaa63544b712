use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use zenosim_core::fit::{residuals, synthesize_dataset, FitProblem, FreeParam, Protocol};
use zenosim_core::oracle::oracle_integrate;
use zenosim_core::sequence::{simulate_zeno_sweep, ZenoProtocolConfig};
use zenosim_core::{build_generator, propagate, Controls, ParamName, RateParams, StateVector};

fn bench_propagate(c: &mut Criterion) {
    let p = RateParams::reference();
    let gen = build_generator(&p, &Controls::laser(1.0).with_mw(true)).unwrap();
    let x = StateVector::ground(0.92, 0.08);
    c.bench_function("propagate 1us", |b| b.iter(|| propagate(black_box(&x), &gen, 1e-6).unwrap()));
    c.bench_function("oracle 1us", |b| {
        b.iter(|| oracle_integrate(black_box(&x), &gen, 1e-6, 1e-10).unwrap())
    });
}

fn bench_sweep(c: &mut Criterion) {
    let p = RateParams::reference();
    let taus: Vec<f64> = (-30..=30).map(|k| k as f64 * 10e-9).collect();
    let cfg = ZenoProtocolConfig::default();
    c.bench_function("zeno sweep 61 points", |b| {
        b.iter(|| simulate_zeno_sweep(&p, black_box(&cfg), &taus).unwrap())
    });
}

fn bench_residuals(c: &mut Criterion) {
    let p = RateParams::reference();
    let grid: Vec<f64> = (0..1500).map(|k| k as f64 * 1e-9).collect();
    let datasets = [false, true]
        .map(|dark| synthesize_dataset(&p, Protocol::Transient { dark }, &grid, 0.02, 1).unwrap())
        .to_vec();
    let free = [ParamName::KExc, ParamName::KRad, ParamName::KDesh, ParamName::KS]
        .map(FreeParam::new)
        .to_vec();
    let problem = FitProblem::new(datasets, free, p);
    c.bench_function("transient pair residuals", |b| {
        b.iter(|| residuals(black_box(&problem), &p).unwrap())
    });
}

criterion_group!(benches, bench_propagate, bench_sweep, bench_residuals);
criterion_main!(benches);
