// SPDX-License-Identifier: Apache-2.0

//! Minimal feed-forward core: the adapter (down projection, ReLU, up
//! projection), the classifier MLP, cross-entropy, hand-written reverse-mode
//! gradients for the three training losses, and Adam.
//!
//! Weights are stored row-major as `[out_dim][in_dim]`, so a layer computes
//! `y = W x + b`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: &str = "fairpar-ckpt-1";

/// Fully connected layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut draw = || rng.random_range(-bound..=bound);
        let weight = (0..in_dim * out_dim).map(|_| draw()).collect();
        let bias = (0..out_dim).map(|_| draw()).collect();
        Self {
            in_dim,
            out_dim,
            weight,
            bias,
        }
    }

    #[inline]
    pub fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weight.chunks_exact(self.in_dim).zip(&self.bias))
        {
            *o = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// Accumulates parameter gradients for output gradient `dy` at input `x`,
    /// writing the input gradient into `dx` when given.
    fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense, dx: Option<&mut [f64]>) {
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            let row = &mut grad.weight[o * self.in_dim..(o + 1) * self.in_dim];
            for (w, v) in row.iter_mut().zip(x) {
                *w += g * v;
            }
        }
        if let Some(dx) = dx {
            dx.fill(0.0);
            for (o, &g) in dy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
                for (d, w) in dx.iter_mut().zip(row) {
                    *d += g * w;
                }
            }
        }
    }

    fn check(&self, what: &str) -> Result<()> {
        if self.weight.len() != self.in_dim * self.out_dim || self.bias.len() != self.out_dim {
            return Err(Error::Checkpoint(format!("{what}: shape metadata disagrees with data")));
        }
        if self.weight.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint(format!("{what}: non-finite parameter")));
        }
        Ok(())
    }
}

#[inline]
fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Parameter containers that can be viewed as a flat list of slices, in a
/// fixed order. Gradients and optimizer moments share the same shape.
pub trait Params: Clone {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for s in z.slices_mut() {
            s.fill(0.0);
        }
        z
    }

    fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }
}

impl Params for Dense {
    fn slices(&self) -> Vec<&[f64]> {
        vec![&self.weight, &self.bias]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Adapter `g(h) = up(ReLU(down(h)))`, mapping R^p to R^p through R^q.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterParams {
    pub down: Dense,
    pub up: Dense,
}

/// Scratch values kept from an adapter forward pass.
#[derive(Debug, Clone, Default)]
pub struct AdapterTrace {
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub out: Vec<f64>,
}

/// Down-projection width used when none is given: half the input, at least 1.
pub fn default_bottleneck(p: usize) -> usize {
    (p / 2).max(1)
}

impl AdapterParams {
    pub fn init<R: Rng + ?Sized>(p: usize, q: usize, rng: &mut R) -> Self {
        Self {
            down: Dense::init(p, q, rng),
            up: Dense::init(q, p, rng),
        }
    }

    pub fn zeros(p: usize, q: usize) -> Self {
        Self {
            down: Dense::zeros(p, q),
            up: Dense::zeros(q, p),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.down.in_dim
    }

    pub fn bottleneck(&self) -> usize {
        self.down.out_dim
    }

    pub fn forward(&self, h: &[f64]) -> Result<Vec<f64>> {
        if h.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: h.len(),
            });
        }
        let mut hidden = vec![0.0; self.bottleneck()];
        let mut out = vec![0.0; self.up.out_dim];
        self.forward_into(h, &mut hidden, &mut out);
        Ok(out)
    }

    /// Allocation-free forward; `hidden` has length q, `out` length p.
    #[inline]
    pub fn forward_into(&self, h: &[f64], hidden: &mut [f64], out: &mut [f64]) {
        self.down.forward_into(h, hidden);
        relu_in_place(hidden);
        self.up.forward_into(hidden, out);
    }

    pub fn trace(&self, h: &[f64]) -> AdapterTrace {
        let mut pre = vec![0.0; self.bottleneck()];
        self.down.forward_into(h, &mut pre);
        let mut hidden = pre.clone();
        relu_in_place(&mut hidden);
        let mut out = vec![0.0; self.up.out_dim];
        self.up.forward_into(&hidden, &mut out);
        AdapterTrace { pre, hidden, out }
    }

    fn backward(&self, h: &[f64], trace: &AdapterTrace, dz: &[f64], grad: &mut AdapterParams) {
        let mut dhidden = vec![0.0; self.bottleneck()];
        self.up
            .backward(&trace.hidden, dz, &mut grad.up, Some(&mut dhidden));
        for (d, &a) in dhidden.iter_mut().zip(&trace.pre) {
            if a <= 0.0 {
                *d = 0.0;
            }
        }
        self.down.backward(h, &dhidden, &mut grad.down, None);
    }
}

impl Params for AdapterParams {
    fn slices(&self) -> Vec<&[f64]> {
        let mut v = self.down.slices();
        v.extend(self.up.slices());
        v
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.down.slices_mut();
        v.extend(self.up.slices_mut());
        v
    }
}

/// Classifier MLP: ReLU between layers, raw logits out of the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    pub layers: Vec<Dense>,
}

#[derive(Debug, Clone, Default)]
pub struct ClassifierTrace {
    /// Input of each layer (after the previous ReLU).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

impl ClassifierParams {
    /// Layers `input -> hidden[0] -> ... -> classes`.
    pub fn init<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        classes: usize,
        rng: &mut R,
    ) -> Self {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(classes);
        let layers = dims.windows(2).map(|w| Dense::init(w[0], w[1], rng)).collect();
        Self { layers }
    }

    /// Default architecture: one hidden layer of width p/2.
    pub fn init_default<R: Rng + ?Sized>(p: usize, classes: usize, rng: &mut R) -> Self {
        Self::init(p, &[default_bottleneck(p)], classes, rng)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Checkpoint("classifier has no layers".into()));
        }
        for (i, w) in self.layers.windows(2).enumerate() {
            if w[0].out_dim != w[1].in_dim {
                return Err(Error::Checkpoint(format!(
                    "classifier layers {i} and {} do not chain",
                    i + 1
                )));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            l.check(&format!("classifier layer {i}"))?;
        }
        Ok(())
    }

    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: z.len(),
            });
        }
        let mut cur = z.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.out_dim];
            layer.forward_into(&cur, &mut next);
            if k + 1 < self.layers.len() {
                relu_in_place(&mut next);
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Predicted class of `z`; lowest index wins ties.
    pub fn predict(&self, z: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(z)?))
    }

    pub fn trace(&self, z: &[f64]) -> ClassifierTrace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len().saturating_sub(1));
        let mut cur = z.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.out_dim];
            layer.forward_into(&cur, &mut next);
            inputs.push(cur);
            if k + 1 < self.layers.len() {
                pre.push(next.clone());
                relu_in_place(&mut next);
            }
            cur = next;
        }
        ClassifierTrace {
            inputs,
            pre,
            logits: cur,
        }
    }

    /// Accumulates gradients for `dlogits` and returns the input gradient.
    fn backward(
        &self,
        trace: &ClassifierTrace,
        dlogits: &[f64],
        grad: &mut ClassifierParams,
    ) -> Vec<f64> {
        let mut dy = dlogits.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let mut dx = vec![0.0; layer.in_dim];
            layer.backward(&trace.inputs[k], &dy, &mut grad.layers[k], Some(&mut dx));
            if k > 0 {
                for (d, &a) in dx.iter_mut().zip(&trace.pre[k - 1]) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            dy = dx;
        }
        dy
    }
}

impl Params for ClassifierParams {
    fn slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.slices()).collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.slices_mut()).collect()
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Softmax with max subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// `-log softmax(logits)[y]`, computed stably.
pub fn cross_entropy(logits: &[f64], y: usize) -> Result<f64> {
    if y >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label: y,
            classes: logits.len(),
        });
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&l| (l - m).exp()).sum::<f64>().ln();
    Ok((lse - logits[y]).max(0.0))
}

/// The trainable state: adapter followed by classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub adapter: AdapterParams,
    pub classifier: ClassifierParams,
}

/// Gradients share the parameter layout.
pub type Gradients = Model;

impl Params for Model {
    fn slices(&self) -> Vec<&[f64]> {
        let mut v = self.adapter.slices();
        v.extend(self.classifier.slices());
        v
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.adapter.slices_mut();
        v.extend(self.classifier.slices_mut());
        v
    }
}

impl Model {
    /// Default architecture for embedding dimension `p` and `classes` outputs.
    pub fn init<R: Rng + ?Sized>(p: usize, classes: usize, rng: &mut R) -> Self {
        let q = default_bottleneck(p);
        Self {
            adapter: AdapterParams::init(p, q, rng),
            classifier: ClassifierParams::init_default(p, classes, rng),
        }
    }

    pub fn logits(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.classifier.forward(&self.adapter.forward(h)?)
    }

    pub fn predict(&self, h: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(h)?))
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.adapter;
        a.down.check("adapter down")?;
        a.up.check("adapter up")?;
        if a.down.out_dim != a.up.in_dim || a.up.out_dim != a.down.in_dim {
            return Err(Error::Checkpoint("adapter shapes do not chain".into()));
        }
        self.classifier.validate()?;
        if self.classifier.input_dim() != a.up.out_dim {
            return Err(Error::Checkpoint(
                "classifier input does not match adapter output".into(),
            ));
        }
        Ok(())
    }
}

/// One labelled input.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub h: &'a [f64],
    pub y: usize,
}

/// Which scalar loss to differentiate. Augmentation offsets are passed in,
/// so the loss is a deterministic function of the parameters.
#[derive(Debug, Clone, Copy)]
pub enum LossSpec<'a> {
    /// Mean over the batch of `CE(d(g(h)), y)`.
    CrossEntropy,
    /// Mean over nodes and offsets of `CE(d(g(h + t * direction)), y)`;
    /// `offsets[i]` holds the offsets for batch item `i`.
    RandAt {
        direction: &'a [f64],
        offsets: &'a [Vec<f64>],
    },
    /// `lambda * mean_i max_j ||g(h_i) - g(h_i + t_ij * direction)|| +
    /// mean_i CE(d(g(h_i)), y_i)`.
    MinMax {
        direction: &'a [f64],
        offsets: &'a [Vec<f64>],
        lambda: f64,
    },
}

/// Breakdown of a loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub task: f64,
    pub fairness: f64,
}

fn shifted(h: &[f64], direction: &[f64], t: f64) -> Vec<f64> {
    h.iter().zip(direction).map(|(a, d)| a + t * d).collect()
}

fn check_batch(model: &Model, batch: &[Sample<'_>], spec: &LossSpec<'_>) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let p = model.adapter.input_dim();
    let c = model.classifier.num_classes();
    for s in batch {
        if s.h.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: s.h.len(),
            });
        }
        if s.y >= c {
            return Err(Error::LabelOutOfRange {
                label: s.y,
                classes: c,
            });
        }
    }
    match spec {
        LossSpec::CrossEntropy => {}
        LossSpec::RandAt { direction, offsets } | LossSpec::MinMax { direction, offsets, .. } => {
            if direction.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: direction.len(),
                });
            }
            if offsets.len() != batch.len() {
                return Err(Error::DimensionMismatch {
                    expected: batch.len(),
                    got: offsets.len(),
                });
            }
            if offsets.iter().any(|o| o.is_empty()) {
                return Err(Error::InvalidConfig("every node needs at least one offset".into()));
            }
        }
    }
    Ok(())
}

/// CE at `h` with its gradient (scaled by `scale`) accumulated into `grad`.
fn ce_through_model(
    model: &Model,
    h: &[f64],
    y: usize,
    scale: f64,
    grad: Option<&mut Gradients>,
) -> Result<f64> {
    let at = model.adapter.trace(h);
    let ct = model.classifier.trace(&at.out);
    let loss = cross_entropy(&ct.logits, y)?;
    if let Some(grad) = grad {
        let mut dlogits = softmax(&ct.logits);
        dlogits[y] -= 1.0;
        for d in &mut dlogits {
            *d *= scale;
        }
        let dz = model
            .classifier
            .backward(&ct, &dlogits, &mut grad.classifier);
        model.adapter.backward(h, &at, &dz, &mut grad.adapter);
    }
    Ok(loss)
}

fn evaluate(
    model: &Model,
    batch: &[Sample<'_>],
    spec: &LossSpec<'_>,
    mut grad: Option<&mut Gradients>,
) -> Result<LossValue> {
    check_batch(model, batch, spec)?;
    let n = batch.len() as f64;
    let mut task = 0.0;
    let mut fairness = 0.0;
    match *spec {
        LossSpec::CrossEntropy => {
            for s in batch {
                task += ce_through_model(model, s.h, s.y, 1.0 / n, grad.as_deref_mut())?;
            }
            task /= n;
        }
        LossSpec::RandAt { direction, offsets } => {
            for (s, ts) in batch.iter().zip(offsets) {
                let k = ts.len() as f64;
                let mut node = 0.0;
                for &t in ts {
                    let h = shifted(s.h, direction, t);
                    node += ce_through_model(model, &h, s.y, 1.0 / (n * k), grad.as_deref_mut())?;
                }
                task += node / k;
            }
            task /= n;
        }
        LossSpec::MinMax {
            direction,
            offsets,
            lambda,
        } => {
            for (s, ts) in batch.iter().zip(offsets) {
                task += ce_through_model(model, s.h, s.y, 1.0 / n, grad.as_deref_mut())?;
                if lambda == 0.0 {
                    continue;
                }
                let base = model.adapter.trace(s.h);
                // Worst case over the sampled offsets; first maximum wins.
                let mut best: Option<(f64, Vec<f64>, AdapterTrace)> = None;
                for &t in ts {
                    let h = shifted(s.h, direction, t);
                    let tr = model.adapter.trace(&h);
                    let dist = base
                        .out
                        .iter()
                        .zip(&tr.out)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    if best.as_ref().is_none_or(|(d, _, _)| dist > *d) {
                        best = Some((dist, h, tr));
                    }
                }
                let (dist, h_adv, tr_adv) = best.expect("offsets are non-empty");
                fairness += dist;
                if let Some(grad) = grad.as_deref_mut() {
                    if dist > 0.0 {
                        let scale = lambda / (n * dist);
                        let dz: Vec<f64> = base
                            .out
                            .iter()
                            .zip(&tr_adv.out)
                            .map(|(a, b)| scale * (a - b))
                            .collect();
                        let neg: Vec<f64> = dz.iter().map(|v| -v).collect();
                        model.adapter.backward(s.h, &base, &dz, &mut grad.adapter);
                        model.adapter.backward(&h_adv, &tr_adv, &neg, &mut grad.adapter);
                    }
                }
            }
            task /= n;
            fairness /= n;
            fairness *= lambda;
        }
    }
    Ok(LossValue {
        total: task + fairness,
        task,
        fairness,
    })
}

/// Value of the loss described by `spec`.
pub fn loss(model: &Model, batch: &[Sample<'_>], spec: &LossSpec<'_>) -> Result<LossValue> {
    evaluate(model, batch, spec, None)
}

/// Loss value and its exact gradient with respect to every parameter.
pub fn backward(
    model: &Model,
    batch: &[Sample<'_>],
    spec: &LossSpec<'_>,
) -> Result<(LossValue, Gradients)> {
    let mut grad = model.zeros_like();
    let value = evaluate(model, batch, spec, Some(&mut grad))?;
    Ok((value, grad))
}

/// Mean CE of the classifier alone on fixed inputs, with its gradient.
pub fn classifier_backward(
    classifier: &ClassifierParams,
    inputs: &[Vec<f64>],
    labels: &[usize],
) -> Result<(f64, ClassifierParams)> {
    if inputs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut grad = classifier.zeros_like();
    let n = inputs.len() as f64;
    let mut total = 0.0;
    for (z, &y) in inputs.iter().zip(labels) {
        if z.len() != classifier.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: classifier.input_dim(),
                got: z.len(),
            });
        }
        let tr = classifier.trace(z);
        total += cross_entropy(&tr.logits, y)?;
        let mut d = softmax(&tr.logits);
        d[y] -= 1.0;
        for v in &mut d {
            *v /= n;
        }
        classifier.backward(&tr, &d, &mut grad);
    }
    Ok((total / n, grad))
}

/// Adam moments and hyperparameters for parameters of type `P`.
#[derive(Debug, Clone)]
pub struct OptimizerState<P> {
    pub m: P,
    pub v: P,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<P: Params> OptimizerState<P> {
    pub fn new(params: &P, lr: f64) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. Rejects non-finite gradients before
/// touching any state.
pub fn adam_step<P: Params>(params: &mut P, grads: &P, state: &mut OptimizerState<P>) -> Result<()> {
    let gs = grads.slices();
    if gs.iter().flat_map(|s| s.iter()).any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    let ps = params.slices_mut();
    if ps.len() != gs.len() || ps.iter().zip(&gs).any(|(p, g)| p.len() != g.len()) {
        return Err(Error::DimensionMismatch {
            expected: ps.iter().map(|s| s.len()).sum(),
            got: gs.iter().map(|s| s.len()).sum(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in ps
        .into_iter()
        .zip(gs)
        .zip(state.m.slices_mut())
        .zip(state.v.slices_mut())
    {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

/// On-disk checkpoint: the model plus the sensitive direction it was trained
/// against, when there is one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub model: Model,
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
}

impl Checkpoint {
    pub fn new(model: Model, direction: Option<Vec<f64>>) -> Self {
        Self {
            version: CHECKPOINT_VERSION.to_string(),
            model,
            direction,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version `{}`",
                ckpt.version
            )));
        }
        ckpt.model.validate()?;
        if let Some(d) = &ckpt.direction {
            if d.len() != ckpt.model.adapter.input_dim() {
                return Err(Error::Checkpoint("direction length mismatch".into()));
            }
        }
        Ok(ckpt)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}
