// SPDX-License-Identifier: Apache-2.0

//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use fairpar::nn::{backward, loss, AdapterParams, ClassifierParams, LossSpec, Model, Params, Sample};
use fairpar::rng::{self, Domain};
use rand::Rng;
use rand_distr::StandardNormal;

pub const STEP: f64 = 1e-5;

pub fn agree(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= 1e-7 || diff <= 1e-4 * analytic.abs().max(numeric.abs())
}

pub fn central_difference(
    probe: &mut Model,
    s: usize,
    j: usize,
    step: f64,
    batch: &[Sample<'_>],
    spec: &LossSpec<'_>,
) -> f64 {
    let orig = probe.slices()[s][j];
    probe.slices_mut()[s][j] = orig + step;
    let up = loss(probe, batch, spec).unwrap().total;
    probe.slices_mut()[s][j] = orig - step;
    let down = loss(probe, batch, spec).unwrap().total;
    probe.slices_mut()[s][j] = orig;
    (up - down) / (2.0 * step)
}

/// Every coordinate of the analytic gradient against a central difference.
///
/// ReLU and max kinks make the loss piecewise smooth. A coordinate whose
/// 1e-5 difference straddles a kink is re-measured with shorter steps; a wrong
/// gradient disagrees at every step.
pub fn check(model: &Model, batch: &[Sample<'_>], spec: &LossSpec<'_>) -> Result<(), String> {
    let (_, grad) = backward(model, batch, spec).map_err(|e| e.to_string())?;
    let grads: Vec<f64> = grad.slices().iter().flat_map(|s| s.iter().copied()).collect();
    let mut probe = model.clone();
    let mut flat_index = 0;
    let n_slices = probe.slices().len();
    for s in 0..n_slices {
        let len = probe.slices()[s].len();
        for j in 0..len {
            let analytic = grads[flat_index];
            let numeric = central_difference(&mut probe, s, j, STEP, batch, spec);
            let ok = agree(analytic, numeric)
                || [1e-6, 1e-7].iter().any(|&h| {
                    agree(analytic, central_difference(&mut probe, s, j, h, batch, spec))
                });
            if !ok {
                return Err(format!(
                    "slice {s} index {j}: analytic {analytic:e} vs numeric {numeric:e}"
                ));
            }
            flat_index += 1;
        }
    }
    Ok(())
}

pub struct Case {
    pub model: Model,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub direction: Vec<f64>,
    pub offsets: Vec<Vec<f64>>,
    pub lambda: f64,
}

pub fn random_case(seed: u64) -> Case {
    let mut rng = rng::stream(seed, Domain::Init, 99);
    let p = rng.random_range(2..7);
    let q = rng.random_range(1..=p);
    let classes = rng.random_range(2..4);
    let hidden = rng.random_range(1..5);
    let n = rng.random_range(1..6);
    let k = rng.random_range(1..5);
    let model = Model {
        adapter: AdapterParams::init(p, q, &mut rng),
        classifier: ClassifierParams::init(p, &[hidden], classes, &mut rng),
    };
    let rows = (0..n)
        .map(|_| (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let direction = (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let offsets = (0..n)
        .map(|_| (0..k).map(|_| rng.random_range(-0.5..0.5)).collect())
        .collect();
    Case {
        model,
        rows,
        labels,
        direction,
        offsets,
        lambda: rng.random_range(0.05..2.0),
    }
}

pub fn check_case(case: &Case, which: usize) -> Result<(), String> {
    let batch: Vec<Sample> = case
        .rows
        .iter()
        .zip(&case.labels)
        .map(|(h, &y)| Sample { h, y })
        .collect();
    let spec = match which {
        0 => LossSpec::CrossEntropy,
        1 => LossSpec::RandAt {
            direction: &case.direction,
            offsets: &case.offsets,
        },
        _ => LossSpec::MinMax {
            direction: &case.direction,
            offsets: &case.offsets,
            lambda: case.lambda,
        },
    };
    check(&case.model, &batch, &spec)
}
