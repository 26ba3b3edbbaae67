// SPDX-License-Identifier: Apache-2.0

//! Sensitive-semantic augmentation: the group-mean difference direction,
//! interpolated augmentation sets along it, and a probe that measures how much
//! a shift along a direction moves a sensitive-attribute classifier.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingDataset, Scope};
use crate::error::{Error, Result};
use crate::nn::{self, adam_step, ClassifierParams, Dense, OptimizerState};
use crate::rng::{self, Domain, Stream};

/// Difference between the mean embedding of the `s = 1` group and the mean of
/// the `s = 0` group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitiveDirection {
    pub alpha: Vec<f64>,
    pub alpha_norm: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl SensitiveDirection {
    pub fn new(alpha: Vec<f64>, n_pos: usize, n_neg: usize) -> Self {
        let alpha_norm = l2(&alpha);
        Self {
            alpha,
            alpha_norm,
            n_pos,
            n_neg,
        }
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Estimates the sensitive direction from the nodes admitted by `scope`.
pub fn compute_direction(ds: &EmbeddingDataset, scope: Scope) -> Result<SensitiveDirection> {
    let p = ds.dim();
    let mut pos = vec![0.0; p];
    let mut neg = vec![0.0; p];
    let (mut n_pos, mut n_neg) = (0usize, 0usize);
    for i in ds.indices(scope) {
        let (acc, n) = if ds.sensitive()[i] == 1 {
            (&mut pos, &mut n_pos)
        } else {
            (&mut neg, &mut n_neg)
        };
        for (a, v) in acc.iter_mut().zip(ds.row(i)) {
            *a += v;
        }
        *n += 1;
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::EmptyGroup(format!(
            "sensitive groups in scope have sizes {n_pos} (s=1) and {n_neg} (s=0)"
        )));
    }
    let alpha = pos
        .iter()
        .zip(&neg)
        .map(|(a, b)| a / n_pos as f64 - b / n_neg as f64)
        .collect();
    Ok(SensitiveDirection::new(alpha, n_pos, n_neg))
}

/// `k` i.i.d. draws from `Uniform[-eps, eps]`.
pub fn sample_offsets(k: usize, eps: f64, rng: &mut Stream) -> Vec<f64> {
    if eps == 0.0 {
        return vec![0.0; k];
    }
    (0..k).map(|_| rng.random_range(-eps..=eps)).collect()
}

/// Sampled augmentation set of one node: `h_i + t_j * alpha` for each offset.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationSet {
    pub base: usize,
    pub eps: f64,
    pub offsets: Vec<f64>,
}

impl AugmentationSet {
    pub fn sample(base: usize, k: usize, eps: f64, rng: &mut Stream) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("augmentation count k must be at least 1".into()));
        }
        if !(eps >= 0.0) {
            return Err(Error::InvalidConfig("augmentation range must be non-negative".into()));
        }
        Ok(Self {
            base,
            eps,
            offsets: sample_offsets(k, eps, rng),
        })
    }

    /// Augmented vectors for base embedding `h`.
    pub fn materialize(&self, h: &[f64], direction: &SensitiveDirection) -> Vec<Vec<f64>> {
        self.offsets
            .iter()
            .map(|&t| h.iter().zip(&direction.alpha).map(|(a, d)| a + t * d).collect())
            .collect()
    }
}

/// A vector of the same norm as `alpha` at `angle_deg` degrees from it, with
/// the orthogonal component drawn uniformly at random.
pub fn rotated_control(
    direction: &SensitiveDirection,
    angle_deg: f64,
    rng: &mut Stream,
) -> Result<Vec<f64>> {
    let p = direction.alpha.len();
    if p < 2 {
        return Err(Error::InvalidConfig(
            "rotation needs embedding dimension at least 2".into(),
        ));
    }
    let norm = direction.alpha_norm;
    if norm == 0.0 {
        return Err(Error::InvalidConfig("cannot rotate a zero direction".into()));
    }
    let unit: Vec<f64> = direction.alpha.iter().map(|a| a / norm).collect();
    // Random orthogonal unit vector by Gram-Schmidt on a Gaussian draw.
    let ortho = loop {
        let g: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let c = dot(&g, &unit);
        let v: Vec<f64> = g.iter().zip(&unit).map(|(x, u)| x - c * u).collect();
        let n = l2(&v);
        if n > 1e-8 {
            // Second pass for numerical orthogonality.
            let c2 = dot(&v, &unit) / n;
            let w: Vec<f64> = v.iter().zip(&unit).map(|(x, u)| x / n - c2 * u).collect();
            let nw = l2(&w);
            break w.into_iter().map(|x| x / nw).collect::<Vec<f64>>();
        }
    };
    let theta = angle_deg.to_radians();
    let (s, c) = theta.sin_cos();
    Ok(unit
        .iter()
        .zip(&ortho)
        .map(|(u, o)| norm * (c * u + s * o))
        .collect())
}

/// Settings for the sensitive-attribute probe classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.01,
        }
    }
}

/// One probe measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    pub t: f64,
    pub angle_deg: f64,
    pub accuracy: f64,
}

/// Logistic-regression probe predicting `s` from embeddings, trained full
/// batch on the train split.
pub fn train_sensitive_probe(
    ds: &EmbeddingDataset,
    cfg: &ProbeConfig,
    seed: u64,
) -> Result<ClassifierParams> {
    let train = ds.indices(Scope::Train);
    let inputs: Vec<Vec<f64>> = train.iter().map(|&i| ds.row(i).to_vec()).collect();
    let labels: Vec<usize> = train.iter().map(|&i| ds.sensitive()[i] as usize).collect();
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::EmptyGroup("train split lacks one sensitive group".into()));
    }
    let mut rng = rng::stream(seed, Domain::Probe, 0);
    let mut probe = ClassifierParams {
        layers: vec![Dense::init(ds.dim(), 2, &mut rng)],
    };
    let mut state = OptimizerState::new(&probe, cfg.lr);
    for _ in 0..cfg.epochs {
        let (_, grad) = nn::classifier_backward(&probe, &inputs, &labels)?;
        adam_step(&mut probe, &grad, &mut state)?;
    }
    Ok(probe)
}

/// Probe accuracy on test embeddings shifted by `t * direction`, for each `t`.
pub fn probe_accuracy(
    probe: &ClassifierParams,
    ds: &EmbeddingDataset,
    direction: &[f64],
    t_grid: &[f64],
) -> Result<Vec<f64>> {
    let test = ds.indices(Scope::Test);
    if test.is_empty() {
        return Err(Error::InvalidDataset("no test nodes for the probe".into()));
    }
    if direction.len() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            got: direction.len(),
        });
    }
    t_grid
        .iter()
        .map(|&t| {
            let mut correct = 0usize;
            for &i in &test {
                let x: Vec<f64> = ds.row(i).iter().zip(direction).map(|(h, d)| h + t * d).collect();
                if probe.predict(&x)? == ds.sensitive()[i] as usize {
                    correct += 1;
                }
            }
            Ok(correct as f64 / test.len() as f64)
        })
        .collect()
}

/// Trains a probe on the train split and reports its test accuracy under
/// shifts `t * direction` for every `t` in `t_grid`.
pub fn probe_sensitive_accuracy(
    ds: &EmbeddingDataset,
    direction: &[f64],
    t_grid: &[f64],
    cfg: &ProbeConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    if t_grid.is_empty() {
        return Err(Error::InvalidConfig("empty t grid".into()));
    }
    let probe = train_sensitive_probe(ds, cfg, seed)?;
    probe_accuracy(&probe, ds, direction, t_grid)
}

/// Probe curves for the true direction (angle 0) and `controls` random
/// rotations at each of `angles_deg`. Rotated curves are averaged over their
/// controls.
pub fn probe_curves(
    ds: &EmbeddingDataset,
    direction: &SensitiveDirection,
    t_grid: &[f64],
    angles_deg: &[f64],
    controls: usize,
    cfg: &ProbeConfig,
    seed: u64,
) -> Result<Vec<ProbePoint>> {
    if t_grid.is_empty() {
        return Err(Error::InvalidConfig("empty t grid".into()));
    }
    let probe = train_sensitive_probe(ds, cfg, seed)?;
    let mut out = Vec::new();
    let mut rot = rng::stream(seed, Domain::Rotation, 0);
    for &angle in std::iter::once(&0.0).chain(angles_deg) {
        let reps = if angle == 0.0 { 1 } else { controls.max(1) };
        let mut sum = vec![0.0; t_grid.len()];
        for _ in 0..reps {
            let v = if angle == 0.0 {
                direction.alpha.clone()
            } else {
                rotated_control(direction, angle, &mut rot)?
            };
            for (s, a) in sum.iter_mut().zip(probe_accuracy(&probe, ds, &v, t_grid)?) {
                *s += a;
            }
        }
        for (&t, s) in t_grid.iter().zip(sum) {
            out.push(ProbePoint {
                t,
                angle_deg: angle,
                accuracy: s / reps as f64,
            });
        }
    }
    Ok(out)
}

/// CSV rendering `t,angle_deg,accuracy`.
pub fn format_probe_csv(points: &[ProbePoint]) -> String {
    let mut s = String::from("t,angle_deg,accuracy\n");
    for p in points {
        s.push_str(&format!("{},{},{}\n", p.t, p.angle_deg, p.accuracy));
    }
    s
}
