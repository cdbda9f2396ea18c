use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use wickchaos::basis::{orthogonalize, ProductBasis};
use wickchaos::distributions::DistributionSpec;
use wickchaos::malliavin::{malliavin, skorokhod};
use wickchaos::mc_oracle::Evaluator;
use wickchaos::sde::propagate;
use wickchaos::spde_parabolic::propagate_parabolic;
use wickchaos::spde_stationary::solve_linear;
use wickchaos::wick_mul;
use wickchaos_bench as fx;

fn orthogonalization(c: &mut Criterion) {
    let mut g = c.benchmark_group("orthogonalize");
    for (name, spec) in [
        ("gaussian", DistributionSpec::Gaussian),
        ("uniform", DistributionSpec::UniformPmSqrt3),
        ("poisson", DistributionSpec::PoissonStandardized { lambda: 1.0 }),
    ] {
        g.bench_function(name, |b| b.iter(|| orthogonalize(black_box(&spec), 12).unwrap()));
    }
    g.finish();
}

fn wick(c: &mut Criterion) {
    let mut g = c.benchmark_group("wick_mul");
    for (k, n) in [(3, 4), (4, 6), (8, 4)] {
        let u = fx::scalar(k, n);
        let v = fx::scalar(k, n);
        g.bench_with_input(BenchmarkId::from_parameter(format!("K{k}_N{n}")), &(u, v), |b, (u, v)| {
            b.iter(|| wick_mul(black_box(u), black_box(v)).unwrap())
        });
    }
    g.finish();
}

fn calculus(c: &mut Criterion) {
    let u = fx::h_valued(4, 6);
    let s = fx::scalar(4, 6);
    c.bench_function("skorokhod_K4_N6", |b| b.iter(|| skorokhod(black_box(&u))));
    c.bench_function("malliavin_K4_N6", |b| b.iter(|| malliavin(black_box(&s))));
}

fn solvers(c: &mut Criterion) {
    let mut g = c.benchmark_group("solvers");
    g.sample_size(10);
    let p = fx::sde(4, 4);
    g.bench_function("sde_propagate_K4_N4", |b| b.iter(|| propagate(black_box(&p)).unwrap()));
    let p = fx::parabolic(64, 2, 3, 128);
    g.bench_function("parabolic_m64_K2_N3", |b| b.iter(|| propagate_parabolic(black_box(&p)).unwrap()));
    let p = fx::stationary(8, 3, 5);
    g.bench_function("stationary_d8_K3_N5", |b| b.iter(|| solve_linear(black_box(&p)).unwrap()));
    g.finish();
}

fn sampling(c: &mut Criterion) {
    let basis = ProductBasis::iid(&DistributionSpec::Gaussian, 3, 5).unwrap();
    let u = fx::scalar(3, 5);
    let e = Evaluator::new(&basis, &u).unwrap();
    let point = [0.3, -1.2, 0.8];
    c.bench_function("evaluate_K3_N5", |b| b.iter(|| e.eval(black_box(&point)).unwrap()));
}

criterion_group!(benches, orthogonalization, wick, calculus, solvers, sampling);
criterion_main!(benches);
