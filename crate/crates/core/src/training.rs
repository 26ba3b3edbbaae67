// SPDX-License-Identifier: Apache-2.0

//! Adapter training schemes and classifier hardening.
//!
//! All training is full batch over the train split with Adam. `naive` fits
//! plain cross-entropy; `randat` fits cross-entropy on `k` random points of
//! each node's augmentation segment; `minmax` adds `lambda` times the largest
//! adapter-output displacement over `k` sampled segment points. Offsets are
//! redrawn every epoch.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::augmenter::{sample_offsets, SensitiveDirection};
use crate::data::{EmbeddingDataset, Scope};
use crate::error::{Error, Result};
use crate::nn::{self, adam_step, AdapterParams, ClassifierParams, LossSpec, Model, OptimizerState, Sample};
use crate::pipeline::metrics::{metric_acc_f1, metric_dp, metric_eo};
use crate::rng::{self, Domain, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Naive,
    RandAt,
    MinMax,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Naive => "naive",
            Scheme::RandAt => "randat",
            Scheme::MinMax => "minmax",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "naive" => Ok(Scheme::Naive),
            "randat" => Ok(Scheme::RandAt),
            "minmax" => Ok(Scheme::MinMax),
            other => Err(format!("unknown scheme `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub scheme: Scheme,
    /// Augmentation range along the sensitive direction.
    pub eps: f64,
    /// Augmented samples per node per epoch.
    pub k: usize,
    /// Weight of the min-max fairness term.
    pub lambda: f64,
    pub epochs: usize,
    pub lr: f64,
    pub hardening_rounds: usize,
    pub hardening_std: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::MinMax,
            eps: 0.5,
            k: 20,
            lambda: 0.1,
            epochs: 1000,
            lr: 0.01,
            hardening_rounds: 100,
            hardening_std: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("train: {m}")));
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return bad("eps must be non-negative");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.hardening_std > 0.0 && self.hardening_std.is_finite()) {
            return bad("hardening_std must be positive");
        }
        Ok(())
    }
}

fn draw_offsets(n: usize, k: usize, eps: f64, rng: &mut Stream) -> Vec<Vec<f64>> {
    (0..n).map(|_| sample_offsets(k, eps, rng)).collect()
}

/// RandAT objective on `batch` with `k` freshly drawn offsets per node.
pub fn randat_loss(
    model: &Model,
    batch: &[Sample<'_>],
    direction: &SensitiveDirection,
    eps: f64,
    k: usize,
    rng: &mut Stream,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let offsets = draw_offsets(batch.len(), k.max(1), eps, rng);
    let spec = LossSpec::RandAt {
        direction: &direction.alpha,
        offsets: &offsets,
    };
    Ok(nn::loss(model, batch, &spec)?.total)
}

/// MinMax objective on `batch` with `k` freshly drawn offsets per node.
pub fn minmax_loss(
    model: &Model,
    batch: &[Sample<'_>],
    direction: &SensitiveDirection,
    eps: f64,
    k: usize,
    lambda: f64,
    rng: &mut Stream,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let offsets = draw_offsets(batch.len(), k.max(1), eps, rng);
    let spec = LossSpec::MinMax {
        direction: &direction.alpha,
        offsets: &offsets,
        lambda,
    };
    Ok(nn::loss(model, batch, &spec)?.total)
}

/// Per-epoch record; metrics are NaN when undefined on the val split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_acc: f64,
    pub val_dp: f64,
    pub val_eo: f64,
}

/// CSV rendering `epoch,loss,val_acc,val_dp,val_eo`.
pub fn format_history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,loss,val_acc,val_dp,val_eo\n");
    for r in history {
        writeln!(s, "{},{},{},{},{}", r.epoch, r.loss, r.val_acc, r.val_dp, r.val_eo).unwrap();
    }
    s
}

/// Predictions of `model` for the given rows.
pub fn predict_rows(model: &Model, ds: &EmbeddingDataset, rows: &[usize]) -> Result<Vec<usize>> {
    rows.iter().map(|&i| model.predict(ds.row(i))).collect()
}

fn val_metrics(model: &Model, ds: &EmbeddingDataset, val: &[usize]) -> Result<(f64, f64, f64)> {
    if val.is_empty() {
        return Ok((f64::NAN, f64::NAN, f64::NAN));
    }
    let preds = predict_rows(model, ds, val)?;
    let labels: Vec<usize> = val.iter().map(|&i| ds.labels()[i]).collect();
    let sens: Vec<u8> = val.iter().map(|&i| ds.sensitive()[i]).collect();
    let acc = metric_acc_f1(&preds, &labels)?.0;
    let dp = metric_dp(&preds, &sens).unwrap_or(f64::NAN);
    let eo = metric_eo(&preds, &labels, &sens).unwrap_or(f64::NAN);
    Ok((acc, dp, eo))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochRecord>,
}

/// Trains adapter and classifier jointly under `cfg.scheme`. `direction` is
/// required for `randat` and `minmax` and ignored for `naive`. Pure in its
/// inputs and `cfg.seed`.
pub fn train(
    ds: &EmbeddingDataset,
    cfg: &TrainConfig,
    direction: Option<&SensitiveDirection>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_rows = ds.indices(Scope::Train);
    if train_rows.is_empty() {
        return Err(Error::InvalidDataset("no labelled train nodes".into()));
    }
    let val_rows = ds.indices(Scope::Val);
    let batch: Vec<Sample> = train_rows
        .iter()
        .map(|&i| Sample {
            h: ds.row(i),
            y: ds.labels()[i],
        })
        .collect();
    let direction = match cfg.scheme {
        Scheme::Naive => None,
        _ => Some(direction.ok_or_else(|| {
            Error::InvalidConfig(format!("scheme {} needs a sensitive direction", cfg.scheme.as_str()))
        })?),
    };
    if let Some(d) = direction {
        if d.alpha.len() != ds.dim() {
            return Err(Error::DimensionMismatch {
                expected: ds.dim(),
                got: d.alpha.len(),
            });
        }
    }

    let mut init_rng = rng::stream(cfg.seed, Domain::Init, 0);
    let mut model = Model::init(ds.dim(), ds.num_classes(), &mut init_rng);
    let mut state = OptimizerState::new(&model, cfg.lr);
    let mut rng = rng::stream(cfg.seed, Domain::Training, 0);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let offsets;
        let spec = match (cfg.scheme, direction) {
            (Scheme::Naive, _) | (_, None) => LossSpec::CrossEntropy,
            (Scheme::RandAt, Some(d)) => {
                offsets = draw_offsets(batch.len(), cfg.k, cfg.eps, &mut rng);
                LossSpec::RandAt {
                    direction: &d.alpha,
                    offsets: &offsets,
                }
            }
            (Scheme::MinMax, Some(d)) => {
                offsets = draw_offsets(batch.len(), cfg.k, cfg.eps, &mut rng);
                LossSpec::MinMax {
                    direction: &d.alpha,
                    offsets: &offsets,
                    lambda: cfg.lambda,
                }
            }
        };
        let (value, grad) = nn::backward(&model, &batch, &spec)?;
        adam_step(&mut model, &grad, &mut state)?;
        let (val_acc, val_dp, val_eo) = val_metrics(&model, ds, &val_rows)?;
        history.push(EpochRecord {
            epoch,
            loss: value.total,
            val_acc,
            val_dp,
            val_eo,
        });
    }
    Ok(TrainOutcome { model, history })
}

/// Fine-tunes the classifier on noisy adapter outputs `g(h) + N(0, std^2 I)`
/// of the train split for `rounds` full-batch epochs. The adapter is only
/// read.
pub fn harden_classifier(
    adapter: &AdapterParams,
    classifier: &ClassifierParams,
    ds: &EmbeddingDataset,
    rounds: usize,
    std: f64,
    lr: f64,
    rng: &mut Stream,
) -> Result<ClassifierParams> {
    if !(std > 0.0 && std.is_finite()) {
        return Err(Error::InvalidConfig("hardening std must be positive".into()));
    }
    let mut d = classifier.clone();
    if rounds == 0 {
        return Ok(d);
    }
    let rows = ds.indices(Scope::Train);
    if rows.is_empty() {
        return Err(Error::InvalidDataset("no labelled train nodes".into()));
    }
    let clean: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| adapter.forward(ds.row(i)))
        .collect::<Result<_>>()?;
    let labels: Vec<usize> = rows.iter().map(|&i| ds.labels()[i]).collect();
    let mut state = OptimizerState::new(&d, lr);
    let mut noisy = clean.clone();
    for _ in 0..rounds {
        for (n, c) in noisy.iter_mut().zip(&clean) {
            for (v, z) in n.iter_mut().zip(c) {
                let e: f64 = rng.sample(StandardNormal);
                *v = z + std * e;
            }
        }
        let (_, grad) = nn::classifier_backward(&d, &noisy, &labels)?;
        adam_step(&mut d, &grad, &mut state)?;
    }
    Ok(d)
}
