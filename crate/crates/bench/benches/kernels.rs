use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use lawlab_core::configspace::greedy_cover;
use lawlab_core::distill::{init_synthetic, InitMode};
use lawlab_core::measures::make_gaussian_mixture;
use lawlab_core::models::{init_params, mean_grad};
use lawlab_core::surrogates::{mmd, mmd_grad_atoms, sliced_w1};
use lawlab_core::{ModelSpec, RngStream};

fn kernels(c: &mut Criterion) {
    let data = make_gaussian_mixture(2, 2, 500, 4.0, 1.0, &RngStream::new(1)).unwrap();
    let xi = init_synthetic(&data, 16, InitMode::RealSubsample, &RngStream::new(2)).unwrap();
    let syn = xi.to_measure();

    c.bench_function("mmd_1000x32", |b| b.iter(|| mmd(black_box(&syn), black_box(&data), 1.0, true).unwrap()));
    c.bench_function("mmd_grad_atoms_1000x32", |b| {
        b.iter(|| mmd_grad_atoms(black_box(&xi), black_box(&data), 1.0, true).unwrap())
    });
    c.bench_function("sliced_w1_32_proj", |b| {
        b.iter(|| sliced_w1(black_box(&syn), black_box(&data), 32, true, &RngStream::new(3)).unwrap())
    });

    let mlp = ModelSpec::mlp1(2, 8, 2).unwrap();
    let theta = init_params(&mlp, &RngStream::new(4));
    c.bench_function("mean_grad_mlp1_h8_1000", |b| b.iter(|| mean_grad(&mlp, black_box(&theta), black_box(&data)).unwrap()));

    let mut rng = RngStream::new(5);
    let m = 64;
    let pts: Vec<[f64; 2]> = (0..m).map(|_| [rng.uniform(), rng.uniform()]).collect();
    let dist: Vec<Vec<f64>> = pts
        .iter()
        .map(|p| pts.iter().map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()).collect())
        .collect();
    c.bench_function("greedy_cover_64", |b| b.iter(|| greedy_cover(black_box(&dist), 0.2).unwrap()));
}

criterion_group!(benches, kernels);
criterion_main!(benches);
