//! Benchmarks for the numerical hot paths: sampler sweeps, the
//! coordinate-descent mode solver, and the inverse-Gaussian primitive.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use balasso::data::StandardizeMode;
use balasso::dist::{sample_inverse_gaussian, InverseGaussianParams, RngHandle};
use balasso::linear::run_chain_linear;
use balasso::penalty::{DeltaSetting, PenaltyMode};
use balasso::solver::{GramLasso, SolverConfig};
use balasso::{ChainConfig, Dataset};

fn toy_data(n: usize, p: usize, stream: u64) -> Dataset {
    let mut rng = RngHandle::new(0xbe_c4, stream).rng();
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = DVector::from_fn(n, |i, _| {
        2.5 * x[(i, 0)] - 1.5 * x[(i, p / 2)] + rng.sample::<f64, _>(StandardNormal)
    });
    Dataset::new(y, x)
        .unwrap()
        .standardize(StandardizeMode::Center)
        .unwrap()
}

fn bench_gibbs_sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("gibbs_chain_200_sweeps");
    for &p in &[8usize, 64] {
        let data = toy_data(4 * p, p, p as u64);
        let mode = PenaltyMode::Hierarchical {
            r: 0.1,
            delta: DeltaSetting::Fixed(1e-6),
        };
        group.bench_with_input(BenchmarkId::from_parameter(p), &p, |b, _| {
            b.iter(|| {
                run_chain_linear(
                    &data,
                    &mode,
                    &ChainConfig::new(0, 200, 1, RngHandle::new(1, 1)),
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn bench_mode_solver(c: &mut Criterion) {
    let mut group = c.benchmark_group("weighted_lasso_solve");
    for &p in &[8usize, 100] {
        let data = toy_data(2 * p, p, 100 + p as u64);
        let gram = GramLasso::from_design(&data.x, &data.y);
        let lam = DVector::from_element(p, 2.0);
        let cfg = SolverConfig::default();
        group.bench_with_input(BenchmarkId::new("cold", p), &p, |b, _| {
            b.iter(|| gram.solve(&lam, None, &cfg).unwrap())
        });
        let (warm, _) = gram.solve(&lam, None, &cfg).unwrap();
        group.bench_with_input(BenchmarkId::new("warm", p), &p, |b, _| {
            b.iter(|| gram.solve(&lam, Some(&warm), &cfg).unwrap())
        });
    }
    group.finish();
}

fn bench_inverse_gaussian(c: &mut Criterion) {
    let params = InverseGaussianParams::new(2.0, 4.0).unwrap();
    let mut rng = RngHandle::new(9, 9).rng();
    c.bench_function("inverse_gaussian_draw", |b| {
        b.iter(|| sample_inverse_gaussian(params, &mut rng))
    });
}

criterion_group!(
    benches,
    bench_gibbs_sweeps,
    bench_mode_solver,
    bench_inverse_gaussian
);
criterion_main!(benches);
