// SPDX-License-Identifier: Apache-2.0

//! Approximate minimum enclosing balls via the Badoiu-Clarkson core-set
//! iteration: repeatedly step toward the farthest point with step 1/(i+1).
//! After `iters` steps the radius is within a factor `1 + 1/sqrt(iters)` of
//! optimal.

#[inline]
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    // Four independent accumulators let the loop vectorize.
    let mut acc = [0.0f64; 4];
    let (a4, a_rest) = a.split_at(a.len() / 4 * 4);
    let (b4, b_rest) = b.split_at(a4.len());
    for (x, y) in a4.chunks_exact(4).zip(b4.chunks_exact(4)) {
        for k in 0..4 {
            let d = x[k] - y[k];
            acc[k] += d * d;
        }
    }
    let tail: f64 = a_rest.iter().zip(b_rest).map(|(x, y)| (x - y) * (x - y)).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Badoiu-Clarkson from `start` over a flat row-major buffer.
fn bc_iterate(points: &[f64], dim: usize, start: &[f64], iters: usize) -> Vec<f64> {
    let mut c = start.to_vec();
    for i in 1..=iters {
        let mut far = 0;
        let mut best = -1.0;
        for (j, row) in points.chunks_exact(dim).enumerate() {
            let d = dist2(&c, row);
            if d > best {
                best = d;
                far = j;
            }
        }
        let step = 1.0 / (i as f64 + 1.0);
        let pt = &points[far * dim..(far + 1) * dim];
        for (cv, pv) in c.iter_mut().zip(pt) {
            *cv += step * (pv - *cv);
        }
    }
    c
}

fn max_radius(points: &[f64], dim: usize, c: &[f64]) -> f64 {
    points
        .chunks_exact(dim)
        .map(|row| dist2(c, row))
        .fold(0.0, f64::max)
        .sqrt()
}

/// Approximate MEB of a flat row-major point buffer; returns (center, radius)
/// where radius is the exact max distance from the returned center.
pub fn meb_center_flat(points: &[f64], dim: usize, iters: usize) -> (Vec<f64>, f64) {
    assert!(dim > 0 && !points.is_empty() && points.len() % dim == 0);
    let c = bc_iterate(points, dim, &points[..dim], iters);
    let r = max_radius(points, dim, &c);
    (c, r)
}

/// Approximate MEB of `points` (at least one, all of equal length).
pub fn meb_center(points: &[Vec<f64>], iters: usize) -> (Vec<f64>, f64) {
    assert!(!points.is_empty(), "meb_center needs at least one point");
    let dim = points[0].len();
    let flat: Vec<f64> = points.iter().flat_map(|p| p.iter().copied()).collect();
    meb_center_flat(&flat, dim, iters)
}

/// Rounds of nearest-half reselection in [`half_mass_center`].
const HALF_MASS_ROUNDS: usize = 3;

/// Center of an approximate smallest ball holding at least half of the
/// points. Starts from the mean, then alternates between keeping the
/// `ceil(m/2)` points nearest the current center and re-fitting their MEB.
/// Returns the center and the distance to the `ceil(m/2)`-th nearest point.
pub fn half_mass_center(points: &[f64], dim: usize, iters: usize) -> (Vec<f64>, f64) {
    assert!(dim > 0 && !points.is_empty() && points.len() % dim == 0);
    let m = points.len() / dim;
    let half = m.div_ceil(2);
    let mut c = vec![0.0; dim];
    for row in points.chunks_exact(dim) {
        for (cv, v) in c.iter_mut().zip(row) {
            *cv += v;
        }
    }
    for cv in &mut c {
        *cv /= m as f64;
    }
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(m);
    let nearest = |c: &[f64], order: &mut Vec<(f64, usize)>| {
        order.clear();
        order.extend(
            points
                .chunks_exact(dim)
                .enumerate()
                .map(|(j, row)| (dist2(c, row), j)),
        );
        order.select_nth_unstable_by(half - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        order[half - 1].0.sqrt()
    };
    let mut kept = Vec::with_capacity(half * dim);
    for _ in 0..HALF_MASS_ROUNDS {
        nearest(&c, &mut order);
        let mut idx: Vec<usize> = order[..half].iter().map(|&(_, j)| j).collect();
        idx.sort_unstable();
        kept.clear();
        for j in idx {
            kept.extend_from_slice(&points[j * dim..(j + 1) * dim]);
        }
        c = bc_iterate(&kept, dim, &c, iters);
    }
    let r = nearest(&c, &mut order);
    (c, r)
}
