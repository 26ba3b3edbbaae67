// SPDX-License-Identifier: Apache-2.0

//! Certification by smoothing.
//!
//! The adapter is center-smoothed: its smoothed value at `h` is the center of
//! an approximate smallest ball holding half of `g(h + noise)`, and a bound
//! `d_cs` on how far that center moves when `h` moves by at most `eps1` is
//! estimated from a fresh sample. The classifier is smoothed by Gaussian
//! majority vote, which certifies a radius `d_rs` around the smoothed adapter
//! output. A node is provably fair when neither stage abstains and
//! `d_cs < d_rs`; the guarantee then holds with probability at least
//! `1 - alpha_cs - alpha_rs`.

mod meb;
mod stats;

pub use meb::{half_mass_center, meb_center, meb_center_flat};
pub use stats::{binom_lower, normal_cdf, normal_quantile};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augmenter::SensitiveDirection;
use crate::error::{Error, Result};
use crate::nn::{argmax, AdapterParams, ClassifierParams, Model};
use crate::rng::{self, Domain, Stream};

/// Noise model for center smoothing of the adapter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterNoise {
    /// Gaussian noise along the unit sensitive axis only. The certificate then
    /// covers the segment `h + t * alpha`, which is exactly the augmentation
    /// set.
    #[default]
    SensitiveAxis,
    /// Isotropic Gaussian noise in all `p` coordinates; covers the whole
    /// `eps1` ball at the cost of looser bounds.
    Isotropic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingConfig {
    pub sigma_cs: f64,
    pub sigma_rs: f64,
    pub n_center: usize,
    pub n_radius: usize,
    pub n_select: usize,
    pub n_cert: usize,
    pub alpha_cs: f64,
    pub alpha_rs: f64,
    /// Badoiu-Clarkson iterations per center fit.
    pub meb_iters: usize,
    pub cs_noise: CenterNoise,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            sigma_cs: 0.25,
            sigma_rs: 1.0,
            n_center: 10_000,
            n_radius: 10_000,
            n_select: 1_000,
            n_cert: 10_000,
            alpha_cs: 0.005,
            alpha_rs: 0.005,
            meb_iters: 100,
            cs_noise: CenterNoise::SensitiveAxis,
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("smoothing: {m}")));
        if !(self.sigma_cs > 0.0 && self.sigma_cs.is_finite()) {
            return bad("sigma_cs must be positive");
        }
        if !(self.sigma_rs > 0.0 && self.sigma_rs.is_finite()) {
            return bad("sigma_rs must be positive");
        }
        if [self.n_center, self.n_radius, self.n_select, self.n_cert, self.meb_iters]
            .contains(&0)
        {
            return bad("sample counts and meb_iters must be at least 1");
        }
        for a in [self.alpha_cs, self.alpha_rs] {
            if !(a > 0.0 && a < 1.0) {
                return bad("alpha_cs and alpha_rs must lie in (0, 1)");
            }
        }
        if self.alpha_cs + self.alpha_rs >= 1.0 {
            return bad("alpha_cs + alpha_rs must be below 1");
        }
        Ok(())
    }

    /// Confidence of a provable-fairness verdict.
    pub fn confidence(&self) -> f64 {
        1.0 - self.alpha_cs - self.alpha_rs
    }
}

/// Hoeffding/DKW slack for `n` samples at failure probability `alpha`.
fn slack(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

/// Quantile level at which the distance distribution must be bounded:
/// `Phi(Phi^-1(1/2 + delta1) + eps1/sigma_cs) + delta2`, with `alpha_cs` split
/// evenly between the center sample (`delta1`) and the radius sample
/// (`delta2`). `None` when the level reaches 1, i.e. the certifier abstains.
pub fn center_quantile_level(eps1: f64, cfg: &SmoothingConfig) -> Option<f64> {
    let half_alpha = cfg.alpha_cs / 2.0;
    let d1 = slack(cfg.n_center, half_alpha);
    let d2 = slack(cfg.n_radius, half_alpha);
    let inner = normal_quantile(0.5 + d1).ok()?;
    let level = normal_cdf(inner + eps1 / cfg.sigma_cs) + d2;
    (level < 1.0).then_some(level)
}

/// Result of center smoothing at one input.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterCertificate {
    /// Smoothed adapter output.
    pub z: Vec<f64>,
    /// Output-change bound; `None` means abstain.
    pub d_cs: Option<f64>,
}

/// Fills `out` (row-major, `m` rows) with `g(h + noise)`.
fn noisy_adapter_samples(
    g: &AdapterParams,
    h: &[f64],
    axis: Option<&[f64]>,
    sigma: f64,
    m: usize,
    rng: &mut Stream,
) -> Result<Vec<f64>> {
    let p = h.len();
    let mut out = vec![0.0; m * p];
    let mut x = vec![0.0; p];
    let mut hidden = vec![0.0; g.bottleneck()];
    for row in out.chunks_exact_mut(p) {
        match axis {
            Some(a) => {
                let u: f64 = rng.sample(StandardNormal);
                for ((xv, hv), av) in x.iter_mut().zip(h).zip(a) {
                    *xv = hv + sigma * u * av;
                }
            }
            None => {
                for (xv, hv) in x.iter_mut().zip(h) {
                    let u: f64 = rng.sample(StandardNormal);
                    *xv = hv + sigma * u;
                }
            }
        }
        g.forward_into(&x, &mut hidden, row);
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("adapter samples"));
    }
    Ok(out)
}

fn check_input(g: &AdapterParams, h: &[f64], axis: Option<&[f64]>) -> Result<()> {
    let p = g.input_dim();
    for len in std::iter::once(h.len()).chain(axis.map(<[f64]>::len)) {
        if len != p {
            return Err(Error::DimensionMismatch { expected: p, got: len });
        }
    }
    Ok(())
}

/// Smoothed adapter output at `h`: center of the approximate half-mass ball of
/// `n_center` noisy adapter outputs. `axis` selects sensitive-axis noise (a
/// unit vector); `None` means isotropic noise.
pub fn smoothed_adapter(
    g: &AdapterParams,
    h: &[f64],
    axis: Option<&[f64]>,
    cfg: &SmoothingConfig,
    rng: &mut Stream,
) -> Result<Vec<f64>> {
    check_input(g, h, axis)?;
    let samples = noisy_adapter_samples(g, h, axis, cfg.sigma_cs, cfg.n_center, rng)?;
    Ok(half_mass_center(&samples, h.len(), cfg.meb_iters).0)
}

/// Center smoothing certificate for an `eps1` perturbation of `h`.
///
/// The bound is twice an upper confidence bound on the distance quantile at
/// [`center_quantile_level`], read off as an order statistic of `n_radius`
/// fresh samples. Abstains when the level reaches 1 or the order statistic
/// index exceeds the sample count.
pub fn center_smooth_certify(
    g: &AdapterParams,
    h: &[f64],
    eps1: f64,
    axis: Option<&[f64]>,
    cfg: &SmoothingConfig,
    rng: &mut Stream,
) -> Result<CenterCertificate> {
    if !(eps1 >= 0.0) {
        return Err(Error::InvalidConfig(format!("eps1 = {eps1} must be non-negative")));
    }
    let z = smoothed_adapter(g, h, axis, cfg, rng)?;
    let fresh = noisy_adapter_samples(g, h, axis, cfg.sigma_cs, cfg.n_radius, rng)?;
    let Some(level) = center_quantile_level(eps1, cfg) else {
        return Ok(CenterCertificate { z, d_cs: None });
    };
    let rank = (level * cfg.n_radius as f64).ceil() as usize;
    if rank > cfg.n_radius {
        return Ok(CenterCertificate { z, d_cs: None });
    }
    let mut dists: Vec<f64> = fresh
        .chunks_exact(h.len())
        .map(|row| {
            row.iter()
                .zip(&z)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let k = rank.max(1) - 1;
    let (_, kth, _) = dists.select_nth_unstable_by(k, f64::total_cmp);
    Ok(CenterCertificate {
        z,
        d_cs: Some(2.0 * *kth),
    })
}

/// `eps * ||alpha||`: the l2 radius of the augmentation segment.
pub fn eps1_from(direction: &SensitiveDirection, eps: f64) -> f64 {
    eps * direction.alpha_norm
}

/// Result of randomized smoothing at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct RsCertificate {
    /// Smoothed prediction; `None` means abstain.
    pub y_hat: Option<usize>,
    pub p_a_lower: f64,
    /// Certified l2 radius; present exactly when `y_hat` is.
    pub d_rs: Option<f64>,
}

/// Certified radius for a top-class lower bound under the two-class bound
/// `p_B = 1 - p_A`: `sigma * Phi^-1(p_A)`, or `None` when `p_A <= 1/2`.
pub fn rs_radius(p_a_lower: f64, sigma_rs: f64) -> Option<f64> {
    if p_a_lower <= 0.5 {
        return None;
    }
    if p_a_lower >= 1.0 {
        return Some(f64::INFINITY);
    }
    let p_b = 1.0 - p_a_lower;
    let qa = normal_quantile(p_a_lower).ok()?;
    let qb = normal_quantile(p_b).ok()?;
    Some(sigma_rs / 2.0 * (qa - qb))
}

/// Class vote counts of `d` at `z + N(0, sigma^2 I)` over `n` draws.
pub fn smoothed_votes(
    d: &ClassifierParams,
    z: &[f64],
    sigma: f64,
    n: usize,
    rng: &mut Stream,
) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; d.num_classes()];
    let mut x = vec![0.0; z.len()];
    for _ in 0..n {
        for (xv, zv) in x.iter_mut().zip(z) {
            let u: f64 = rng.sample(StandardNormal);
            *xv = zv + sigma * u;
        }
        let logits = d.forward(&x)?;
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("logits"));
        }
        counts[argmax(&logits)] += 1;
    }
    Ok(counts)
}

/// Majority vote of `d` under `N(0, sigma_rs^2 I)` noise with `n_select`
/// draws; the plain smoothed prediction without a certificate.
pub fn smoothed_classify(
    d: &ClassifierParams,
    z: &[f64],
    cfg: &SmoothingConfig,
    rng: &mut Stream,
) -> Result<usize> {
    let counts = smoothed_votes(d, z, cfg.sigma_rs, cfg.n_select, rng)?;
    Ok(majority(&counts))
}

fn majority(counts: &[u64]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Randomized smoothing prediction and certificate at `z`: select a class
/// with `n_select` votes, then lower-bound its probability from `n_cert`
/// fresh votes.
pub fn rs_predict_certify(
    d: &ClassifierParams,
    z: &[f64],
    cfg: &SmoothingConfig,
    rng: &mut Stream,
) -> Result<RsCertificate> {
    if z.len() != d.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: d.input_dim(),
            got: z.len(),
        });
    }
    let select = smoothed_votes(d, z, cfg.sigma_rs, cfg.n_select, rng)?;
    let candidate = majority(&select);
    let counts = smoothed_votes(d, z, cfg.sigma_rs, cfg.n_cert, rng)?;
    let p_a_lower = binom_lower(counts[candidate], cfg.n_cert as u64, cfg.alpha_rs)?;
    Ok(match rs_radius(p_a_lower, cfg.sigma_rs) {
        Some(r) => RsCertificate {
            y_hat: Some(candidate),
            p_a_lower,
            d_rs: Some(r),
        },
        None => RsCertificate {
            y_hat: None,
            p_a_lower,
            d_rs: None,
        },
    })
}

/// Per-node provable-fairness verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeCertificate {
    pub node: usize,
    pub node_id: u64,
    pub eps1: f64,
    pub d_cs: Option<f64>,
    pub d_rs: Option<f64>,
    pub y_hat: Option<usize>,
    pub provable: bool,
    pub confidence: f64,
}

/// The verdict rule: no abstention and `d_cs < d_rs`.
pub fn is_provable(d_cs: Option<f64>, d_rs: Option<f64>) -> bool {
    matches!((d_cs, d_rs), (Some(cs), Some(rs)) if cs < rs)
}

/// Wire form of a certificate: one JSON object per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub node_id: u64,
    pub eps1: f64,
    pub d_cs: Option<f64>,
    pub d_rs: Option<f64>,
    /// Smoothed prediction; `None` when randomized smoothing abstains.
    pub y_hat: Option<usize>,
    pub abstain_cs: bool,
    pub abstain_rs: bool,
    pub provable: bool,
    pub confidence: f64,
}

impl From<&NodeCertificate> for CertificateRecord {
    fn from(c: &NodeCertificate) -> Self {
        Self {
            node_id: c.node_id,
            eps1: c.eps1,
            d_cs: c.d_cs,
            d_rs: c.d_rs,
            y_hat: c.y_hat,
            abstain_cs: c.d_cs.is_none(),
            abstain_rs: c.d_rs.is_none(),
            provable: c.provable,
            confidence: c.confidence,
        }
    }
}

/// Unit vector along `direction`, used as the center-smoothing noise axis.
pub fn noise_axis(direction: &SensitiveDirection, cfg: &SmoothingConfig) -> Option<Vec<f64>> {
    match cfg.cs_noise {
        CenterNoise::Isotropic => None,
        CenterNoise::SensitiveAxis if direction.alpha_norm > 0.0 => Some(
            direction
                .alpha
                .iter()
                .map(|a| a / direction.alpha_norm)
                .collect(),
        ),
        // A zero direction admits no sensitive perturbation; isotropic noise
        // still yields a valid (eps1 = 0) bound.
        CenterNoise::SensitiveAxis => None,
    }
}

/// Certifies one node: center smoothing of the adapter at `h` for radius
/// `eps * ||alpha||`, then randomized smoothing of the classifier at the
/// smoothed adapter output.
pub fn certify_node(
    model: &Model,
    h: &[f64],
    direction: &SensitiveDirection,
    eps: f64,
    cfg: &SmoothingConfig,
    rng: &mut Stream,
) -> Result<NodeCertificate> {
    cfg.validate()?;
    let eps1 = eps1_from(direction, eps);
    let axis = noise_axis(direction, cfg);
    let center = center_smooth_certify(&model.adapter, h, eps1, axis.as_deref(), cfg, rng)?;
    let rs = rs_predict_certify(&model.classifier, &center.z, cfg, rng)?;
    Ok(NodeCertificate {
        node: 0,
        node_id: 0,
        eps1,
        d_cs: center.d_cs,
        d_rs: rs.d_rs,
        y_hat: rs.y_hat,
        provable: is_provable(center.d_cs, rs.d_rs),
        confidence: cfg.confidence(),
    })
}

/// Certifies the given rows of `embeddings` (row-major, width `p`) in
/// parallel on the current rayon pool. Node `i` draws from its own stream
/// keyed by `(seed, i)`, so output does not depend on the thread count.
#[allow(clippy::too_many_arguments)]
pub fn certify_nodes(
    model: &Model,
    ds: &crate::data::EmbeddingDataset,
    nodes: &[usize],
    direction: &SensitiveDirection,
    eps: f64,
    cfg: &SmoothingConfig,
    seed: u64,
) -> Result<Vec<NodeCertificate>> {
    cfg.validate()?;
    nodes
        .par_iter()
        .map(|&i| {
            let mut rng = rng::stream(seed, Domain::Certify, i as u64);
            let mut cert = certify_node(model, ds.row(i), direction, eps, cfg, &mut rng)?;
            cert.node = i;
            cert.node_id = ds.node_id(i);
            Ok(cert)
        })
        .collect()
}
