// SPDX-License-Identifier: Apache-2.0

//! Certifier properties checked end to end.

use fairpar::nn::{AdapterParams, ClassifierParams, Dense, Model};
use fairpar::rng::{self, Domain};
use fairpar::smoothing::{
    center_smooth_certify, certify_nodes, normal_quantile, rs_radius, CenterNoise,
};
use fairpar::data::generate_synthetic;
use fairpar::{compute_direction, Scope, SmoothingConfig, SyntheticSpec};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

/// `x -> ReLU(x) - ReLU(-x)`: the identity on the real line.
fn identity_1d() -> AdapterParams {
    AdapterParams {
        down: Dense {
            in_dim: 1,
            out_dim: 2,
            weight: vec![1.0, -1.0],
            bias: vec![0.0, 0.0],
        },
        up: Dense {
            in_dim: 2,
            out_dim: 1,
            weight: vec![1.0, -1.0],
            bias: vec![0.0],
        },
    }
}

fn one_d_config() -> SmoothingConfig {
    SmoothingConfig {
        sigma_cs: 1.0,
        n_center: 10_000,
        n_radius: 10_000,
        cs_noise: CenterNoise::Isotropic,
        ..SmoothingConfig::default()
    }
}

#[test]
fn identity_map_bound_matches_monte_carlo_oracle() {
    let cfg = one_d_config();
    let eps1 = 1.0;
    let h = [0.7];
    let mut rng = rng::stream(31, Domain::Certify, 0);
    let cert = center_smooth_certify(&identity_1d(), &h, eps1, None, &cfg, &mut rng).unwrap();
    let d_cs = cert.d_cs.expect("certifies");
    assert!((cert.z[0] - h[0]).abs() < 0.05, "center {}", cert.z[0]);

    // The exact smoothed map is h itself; the bound is twice the p*-quantile
    // of |N(0, 1)|, with p* built from the same slack terms.
    let slack = |n: usize| ((2.0 / (cfg.alpha_cs / 2.0)).ln() / (2.0 * n as f64)).sqrt();
    let inner = normal_quantile(0.5 + slack(cfg.n_center)).unwrap();
    let cdf = |x: f64| 0.5 * erfc_reference(-x / std::f64::consts::SQRT_2);
    let level = cdf(inner + eps1 / cfg.sigma_cs) + slack(cfg.n_radius);

    let mut oracle_rng = rng::stream(32, Domain::Probe, 0);
    let mut abs: Vec<f64> = (0..1_000_000)
        .map(|_| oracle_rng.sample::<f64, _>(StandardNormal).abs())
        .collect();
    abs.sort_by(f64::total_cmp);
    let idx = ((level * abs.len() as f64).ceil() as usize).min(abs.len()) - 1;
    let oracle = 2.0 * abs[idx];
    let closed_form = 2.0 * normal_quantile((1.0 + level) / 2.0).unwrap();
    assert!((oracle - closed_form).abs() < 0.02, "{oracle} vs {closed_form}");
    assert!((d_cs - oracle).abs() < 0.12, "d_cs {d_cs} vs oracle {oracle}");
}

/// Complementary error function by its continued fraction / series, kept
/// separate from the library's implementation.
fn erfc_reference(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc_reference(-x);
    }
    if x < 2.0 {
        // erf series: 2/sqrt(pi) * sum (-1)^n x^(2n+1) / (n! (2n+1))
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        while term.abs() > 1e-17 * sum.abs() {
            n += 1.0;
            term *= -x * x / n;
            sum += term / (2.0 * n + 1.0);
        }
        1.0 - 2.0 / std::f64::consts::PI.sqrt() * sum
    } else {
        // Lentz continued fraction.
        let mut f = x;
        let mut c = x;
        let mut d = 0.0;
        for k in 1..200 {
            let a = k as f64 / 2.0;
            d = x + a * d;
            d = 1.0 / d;
            c = x + a / c;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-x * x).exp() / (f * std::f64::consts::PI.sqrt())
    }
}

#[test]
fn erfc_oracle_sanity() {
    assert!((erfc_reference(0.0) - 1.0).abs() < 1e-15);
    assert!((erfc_reference(1.0) - 0.15729920705028513).abs() < 1e-14);
    assert!((erfc_reference(3.0) - 2.209049699858544e-5).abs() < 1e-18);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn d_cs_nondecreasing_in_eps1(a in 0.0f64..0.4, b in 0.0f64..0.4, seed in 0u64..1000) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let cfg = SmoothingConfig { n_center: 500, n_radius: 2000, ..one_d_config() };
        let mut r1 = rng::stream(seed, Domain::Certify, 0);
        let mut r2 = rng::stream(seed, Domain::Certify, 0);
        let c1 = center_smooth_certify(&identity_1d(), &[0.0], lo, None, &cfg, &mut r1).unwrap();
        let c2 = center_smooth_certify(&identity_1d(), &[0.0], hi, None, &cfg, &mut r2).unwrap();
        match (c1.d_cs, c2.d_cs) {
            (Some(x), Some(y)) => prop_assert!(x <= y),
            (None, Some(_)) => prop_assert!(false, "smaller radius abstained"),
            _ => {}
        }
    }

    #[test]
    fn d_rs_linear_in_sigma(p in 0.5001f64..0.9999, sigma in 0.01f64..5.0) {
        let unit = rs_radius(p, 1.0).unwrap();
        let scaled = rs_radius(p, sigma).unwrap();
        prop_assert!((scaled - sigma * unit).abs() <= 1e-12 * scaled.abs().max(1.0));
    }

    #[test]
    fn d_rs_nondecreasing_in_p(a in 0.5001f64..0.9999, b in 0.5001f64..0.9999) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(rs_radius(lo, 1.0).unwrap() <= rs_radius(hi, 1.0).unwrap());
    }
}

#[test]
fn certification_is_identical_across_thread_counts() {
    let spec = SyntheticSpec {
        n: 80,
        ..SyntheticSpec::default()
    };
    let ds = generate_synthetic(&spec, 9).unwrap();
    let dir = compute_direction(&ds, Scope::Train).unwrap();
    let mut r = rng::stream(9, Domain::Init, 0);
    let model = Model {
        adapter: AdapterParams::init(ds.dim(), 8, &mut r),
        classifier: ClassifierParams::init(ds.dim(), &[8], 2, &mut r),
    };
    let cfg = SmoothingConfig {
        n_center: 400,
        n_radius: 400,
        n_select: 100,
        n_cert: 400,
        ..SmoothingConfig::default()
    };
    let nodes = ds.indices(Scope::Test);
    let at = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| certify_nodes(&model, &ds, &nodes, &dir, 0.5, &cfg, 9).unwrap())
    };
    let one = at(1);
    assert_eq!(one, at(3));
    assert_eq!(one, at(8));
}
