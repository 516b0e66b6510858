//! Stage benchmarks over the bundled cases: shift-factor construction,
//! dispatch solves, the clustering rounds, and the hyperplane fit. Sample
//! sizes are kept small because single iterations already run for
//! milliseconds.

use congid::pipeline;
use congid::{
    bottom_up, build_ptdf, solve_dcopf, BottomUpParams, DispatchMode, NetworkCase, TopDownParams,
};
use congid_bench::{case_path, load_case, thirty_bus_scenarios};
use criterion::{black_box, criterion_group, criterion_main, Criterion};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

fn bench_shift_factors(c: &mut Criterion) {
    let mut group = c.benchmark_group("shift-factors");
    for name in ["mesh30.toml", "mesh118.toml"] {
        let case = NetworkCase::load(&case_path(name)).expect("bundled case loads");
        group.bench_function(&case.name.clone(), |b| {
            b.iter(|| build_ptdf(black_box(&case)).unwrap())
        });
    }
    group.finish();
}

fn bench_dispatch(c: &mut Criterion) {
    let mut group = c.benchmark_group("dispatch");
    for (name, mode, label) in [
        ("mesh30.toml", DispatchMode::Lossless, "mesh30-lossless"),
        ("mesh30.toml", DispatchMode::Lossy, "mesh30-lossy"),
        ("mesh118.toml", DispatchMode::Lossless, "mesh118-lossless"),
    ] {
        let (case, ptdf) = load_case(name);
        group.bench_function(label, |b| {
            b.iter(|| solve_dcopf(black_box(&case), &ptdf, mode).unwrap())
        });
    }
    group.finish();
}

fn bench_identification(c: &mut Criterion) {
    let (case, _, set) = thirty_bus_scenarios(576);
    let panel = pipeline::panel_from_scenarios(&case, &set);
    let cm = pipeline::filter_congested(&panel, pipeline::CONGESTION_FILTER_TOL)
        .expect("simulated panel congests");
    let xhat = pipeline::pca_reduce(&cm, pipeline::PCA_ENERGY_TOL);
    let mut group = c.benchmark_group("identification");
    group.sample_size(20);
    group.bench_function("affinity-576", |b| {
        b.iter(|| bottom_up::affinity(black_box(&xhat.x)).unwrap())
    });
    group.bench_function("bottom-up-mesh30", |b| {
        b.iter(|| bottom_up::bottom_up_search(black_box(&xhat), &BottomUpParams::default()).unwrap())
    });
    group.finish();
}

fn bench_hyperplane(c: &mut Criterion) {
    // Planted rank-3 structure with one column in ten off the plane.
    let dim = 4;
    let m = 576;
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let mut normal: DVector<f64> = DVector::from_fn(dim, |_, _| rng.sample(StandardNormal));
    normal /= normal.norm();
    let mut x = DMatrix::zeros(dim, m);
    for t in 0..m {
        let mut g: DVector<f64> = DVector::from_fn(dim, |_, _| rng.sample(StandardNormal));
        if t % 10 != 0 {
            let coef = g.dot(&normal);
            g -= &normal * coef;
        }
        x.set_column(t, &g);
    }
    let mut group = c.benchmark_group("hyperplane");
    group.sample_size(20);
    group.bench_function("l1-descent-4x576", |b| {
        b.iter(|| congid::l1_hyperplane_normal(black_box(&x), 1e-9, 50).unwrap())
    });
    group.bench_function("split-search-4x576", |b| {
        b.iter(|| congid::top_down_search(black_box(&x), &TopDownParams::default()).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_shift_factors,
    bench_dispatch,
    bench_identification,
    bench_hyperplane
);
criterion_main!(benches);
