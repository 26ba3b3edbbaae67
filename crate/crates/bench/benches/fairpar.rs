// SPDX-License-Identifier: Apache-2.0

//! Hot paths: model forward, center estimation and single-node certification.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use fairpar::rng::{self, Domain};
use fairpar::smoothing::{certify_node, half_mass_center};
use fairpar::{Model, SensitiveDirection, SmoothingConfig};
use rand::Rng;

fn random_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, Domain::Probe, 0);
    (0..len).map(|_| r.random_range(-1.0..1.0)).collect()
}

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("model_logits");
    for p in [16usize, 64, 256] {
        let mut r = rng::stream(1, Domain::Init, 0);
        let model = Model::init(p, 2, &mut r);
        let h = random_vec(p, 2);
        group.bench_with_input(BenchmarkId::from_parameter(p), &h, |b, h| {
            b.iter(|| model.logits(black_box(h)).unwrap())
        });
    }
    group.finish();
}

fn center(c: &mut Criterion) {
    let mut group = c.benchmark_group("half_mass_center");
    group.sample_size(20);
    for n in [1_000usize, 10_000] {
        let dim = 16;
        let iters = SmoothingConfig::default().meb_iters;
        let points = random_vec(n * dim, 3);
        group.bench_with_input(BenchmarkId::from_parameter(n), &points, |b, pts| {
            b.iter(|| half_mass_center(black_box(pts), dim, iters))
        });
    }
    group.finish();
}

fn certify(c: &mut Criterion) {
    let p = 16;
    let mut r = rng::stream(4, Domain::Init, 0);
    let model = Model::init(p, 2, &mut r);
    let h = random_vec(p, 5);
    let direction = SensitiveDirection::new(random_vec(p, 6).iter().map(|a| a * 0.2).collect(), 1, 1);
    let cfg = SmoothingConfig {
        n_center: 2_000,
        n_radius: 2_000,
        n_select: 200,
        n_cert: 2_000,
        ..SmoothingConfig::default()
    };
    let mut group = c.benchmark_group("certify_node");
    group.sample_size(10);
    group.bench_function("p16_n2000", |b| {
        b.iter(|| {
            let mut rng = rng::stream(7, Domain::Certify, 0);
            certify_node(&model, black_box(&h), &direction, 1.0, &cfg, &mut rng).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, forward, center, certify);
criterion_main!(benches);
