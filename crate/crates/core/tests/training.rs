// SPDX-License-Identifier: Apache-2.0

//! Training schemes and classifier hardening on synthetic data.

use fairpar::data::generate_synthetic;
use fairpar::nn::{Model, Sample};
use fairpar::pipeline::metrics::metric_dp;
use fairpar::rng::{self, Domain};
use fairpar::smoothing::certify_nodes;
use fairpar::training::{harden_classifier, predict_rows, randat_loss, train};
use fairpar::{compute_direction, EmbeddingDataset, Scheme, Scope, SmoothingConfig, SyntheticSpec, TrainConfig};

fn accuracy(model: &Model, ds: &EmbeddingDataset, scope: Scope) -> f64 {
    let rows = ds.indices(scope);
    let preds = predict_rows(model, ds, &rows).unwrap();
    let hits = rows.iter().zip(&preds).filter(|(&i, &p)| ds.labels()[i] == p).count();
    hits as f64 / rows.len() as f64
}

fn trained(ds: &EmbeddingDataset, scheme: Scheme, epochs: usize) -> Model {
    let dir = compute_direction(ds, Scope::Train).unwrap();
    let cfg = TrainConfig {
        scheme,
        epochs,
        ..TrainConfig::default()
    };
    train(ds, &cfg, Some(&dir)).unwrap().model
}

#[test]
fn naive_fits_separable_labels() {
    let spec = SyntheticSpec {
        n: 400,
        label_leak: 0.0,
        ..SyntheticSpec::default()
    };
    let ds = generate_synthetic(&spec, 21).unwrap();
    let model = trained(&ds, Scheme::Naive, 1000);
    assert!(accuracy(&model, &ds, Scope::Train) >= 0.95);
}

#[test]
fn minmax_reduces_demographic_parity_gap() {
    let spec = SyntheticSpec {
        label_leak: 0.3,
        ..SyntheticSpec::default()
    };
    let ds = generate_synthetic(&spec, 0).unwrap();
    let test = ds.indices(Scope::Test);
    let sens: Vec<u8> = test.iter().map(|&i| ds.sensitive()[i]).collect();
    let dp = |scheme| {
        let model = trained(&ds, scheme, 1000);
        metric_dp(&predict_rows(&model, &ds, &test).unwrap(), &sens).unwrap()
    };
    let (naive, minmax) = (dp(Scheme::Naive), dp(Scheme::MinMax));
    assert!(minmax < naive, "minmax {minmax} vs naive {naive}");
}

#[test]
fn randat_loss_variance_shrinks_like_one_over_k() {
    let ds = generate_synthetic(&SyntheticSpec { n: 40, ..SyntheticSpec::default() }, 5).unwrap();
    let dir = compute_direction(&ds, Scope::All).unwrap();
    let mut r = rng::stream(5, Domain::Init, 0);
    let model = Model::init(ds.dim(), 2, &mut r);
    // Only a few nodes, so a single draw's noise is not averaged away.
    let batch: Vec<Sample> = (0..4).map(|i| Sample { h: ds.row(i), y: ds.labels()[i] }).collect();
    let mut rng = rng::stream(5, Domain::Training, 0);
    let variance = |k: usize, rng: &mut rng::Stream| {
        let draws: Vec<f64> = (0..400)
            .map(|_| randat_loss(&model, &batch, &dir, 3.0, k, rng).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64
    };
    let v1 = variance(1, &mut rng);
    assert!(v1 > 0.0);
    for k in [4usize, 16, 64] {
        let ratio = variance(k, &mut rng) * k as f64 / v1;
        assert!((0.6..1.6).contains(&ratio), "k = {k}: k * var / var_1 = {ratio}");
    }
}

#[test]
fn hardening_leaves_adapter_and_raises_radius() {
    let ds = generate_synthetic(&SyntheticSpec::default(), 0).unwrap();
    let dir = compute_direction(&ds, Scope::Train).unwrap();
    let cfg = TrainConfig::default();
    let model = train(&ds, &cfg, Some(&dir)).unwrap().model;
    let mut rng = rng::stream(0, Domain::Hardening, 0);
    let hardened = Model {
        adapter: model.adapter.clone(),
        classifier: harden_classifier(&model.adapter, &model.classifier, &ds, 100, 1.0, cfg.lr, &mut rng)
            .unwrap(),
    };
    let smoothing = SmoothingConfig {
        n_center: 1000,
        n_radius: 1000,
        n_select: 200,
        n_cert: 2000,
        ..SmoothingConfig::default()
    };
    let mut nodes = ds.indices(Scope::Test);
    nodes.truncate(60);
    // eps = 0 keeps the center stage certifying so only d_rs matters here.
    let mean_rs = |m: &Model| {
        let certs = certify_nodes(m, &ds, &nodes, &dir, 0.0, &smoothing, 1).unwrap();
        certs.iter().map(|c| c.d_rs.unwrap_or(0.0)).sum::<f64>() / certs.len() as f64
    };
    let (before, after) = (mean_rs(&model), mean_rs(&hardened));
    assert!(after > before, "mean d_rs before {before}, after {after}");
}

#[test]
fn vanishing_noise_hardening_keeps_accuracy() {
    let ds = generate_synthetic(&SyntheticSpec::default(), 2).unwrap();
    let model = trained(&ds, Scheme::Naive, 300);
    let mut rng = rng::stream(2, Domain::Hardening, 0);
    let classifier = harden_classifier(&model.adapter, &model.classifier, &ds, 100, 1e-9, 0.01, &mut rng).unwrap();
    let hardened = Model {
        adapter: model.adapter.clone(),
        classifier,
    };
    let gap = (accuracy(&hardened, &ds, Scope::Test) - accuracy(&model, &ds, Scope::Test)).abs();
    assert!(gap <= 0.02, "accuracy moved by {gap}");
}
