use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use probekit::born::LinearizedProblem;
use probekit::curvelet::CurveletPlan;
use probekit::pdo::{BasisSpec, PdoBasis};
use probekit::wavesim::{Acquisition, Medium};
use probekit::ModelGrid;

fn grid(n: usize) -> ModelGrid {
    ModelGrid::from_fn(n, |x, z| (7.0 * x + 3.0 * z).sin() * (11.0 * x * z).cos())
}

/// Runs `f` on a one-thread pool and on the default pool.
#[cfg(feature = "parallel")]
fn both<F: Fn() + Sync>(c: &mut Criterion, name: &str, f: F) {
    let mut g = c.benchmark_group(name);
    g.sample_size(10);
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    g.bench_function(BenchmarkId::new("threads", 1), |b| b.iter(|| single.install(&f)));
    let n = rayon::current_num_threads();
    g.bench_function(BenchmarkId::new("threads", n), |b| b.iter(&f));
    g.finish();
}

#[cfg(not(feature = "parallel"))]
fn both<F: Fn() + Sync>(c: &mut Criterion, name: &str, f: F) {
    let mut g = c.benchmark_group(name);
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("sequential", 1), |b| b.iter(&f));
    g.finish();
}

fn hessian(c: &mut Criterion) {
    let n = 32;
    let med = Medium::constant(n, 1.0).unwrap();
    let acq = Acquisition::surface(&med).unwrap();
    let prob = LinearizedProblem::new(med, acq).unwrap();
    let v = grid(n);
    both(c, "hessian_apply_n32", || {
        std::hint::black_box(prob.hessian_apply(&v).unwrap());
    });
}

fn curvelets(c: &mut Criterion) {
    let plan = CurveletPlan::new(128).unwrap();
    let f = grid(128);
    both(c, "curvelet_round_trip_n128", || {
        let coeffs = plan.analyze(&f).unwrap();
        std::hint::black_box(plan.synthesize(&coeffs).unwrap());
    });
}

fn basis_columns(c: &mut Criterion) {
    let n = 64;
    let basis = PdoBasis::new(BasisSpec::new(2, 1, 1, -1, n).unwrap(), n).unwrap();
    let x = grid(n);
    both(c, "basis_columns_n64", || {
        std::hint::black_box(basis.real_columns(&x).unwrap());
    });
}

criterion_group!(kernels, hessian, curvelets, basis_columns);
criterion_main!(kernels);
