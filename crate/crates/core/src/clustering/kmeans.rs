//! k-means with k-means++ seeding and Lloyd iterations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_k, ClusterAssignment, ClustererSpec};
use crate::error::Result;
use crate::matrix::{sq_dist, Matrix};

/// Runs `spec.restarts` seeded k-means fits and keeps the one with the lowest
/// inertia (earliest on ties). Empty clusters are reseeded to the point
/// farthest from its centre.
pub fn kmeans_fit(points: &Matrix, k: usize, spec: &ClustererSpec) -> Result<ClusterAssignment> {
    check_k(points, k)?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..spec.restarts.max(1) {
        let seed = spec.seed.wrapping_add(restart as u64);
        let (labels, inertia) = lloyd(points, k, spec, seed);
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, labels));
        }
    }
    let (_, labels) = best.expect("at least one restart");
    Ok(ClusterAssignment::canonical(labels, k))
}

fn plus_plus_init(points: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.rows();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(points.row(rng.gen_range(0..n)).to_vec());
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // guard against rounding landing on an already chosen point
            if d2[pick] == 0.0 {
                pick = d2
                    .iter()
                    .enumerate()
                    .fold((0, -1.0), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc })
                    .0;
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        let c = points.row(next).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), &c));
        }
        centers.push(c);
    }
    centers
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Assigns every point to its nearest centre, then hands each empty cluster
/// the point farthest from its centre (taken from clusters with > 1 member).
fn assign(points: &Matrix, centers: &mut [Vec<f64>], labels: &mut [usize], dists: &mut [f64]) {
    let k = centers.len();
    let mut sizes = vec![0usize; k];
    for i in 0..points.rows() {
        let (c, d) = nearest(points.row(i), centers);
        labels[i] = c;
        dists[i] = d;
        sizes[c] += 1;
    }
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let far = (0..points.rows())
            .filter(|&i| sizes[labels[i]] > 1)
            .fold(None, |acc: Option<(usize, f64)>, i| match acc {
                Some((_, d)) if d >= dists[i] => acc,
                _ => Some((i, dists[i])),
            });
        let Some((i, _)) = far else { break };
        sizes[labels[i]] -= 1;
        labels[i] = c;
        dists[i] = 0.0;
        sizes[c] = 1;
        centers[c] = points.row(i).to_vec();
    }
}

fn means(points: &Matrix, labels: &[usize], centers: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = centers.len();
    let d = points.cols();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (i, &c) in labels.iter().enumerate() {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(points.row(i)) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .zip(centers)
        .map(|((mut s, n), old)| {
            if n == 0 {
                return old.clone();
            }
            s.iter_mut().for_each(|v| *v /= n as f64);
            s
        })
        .collect()
}

fn lloyd(points: &Matrix, k: usize, spec: &ClustererSpec, seed: u64) -> (Vec<usize>, f64) {
    let n = points.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_init(points, k, &mut rng);
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0; n];
    for _ in 0..spec.max_iters {
        assign(points, &mut centers, &mut labels, &mut dists);
        let next = means(points, &labels, &centers);
        let shift = centers
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centers = next;
        if shift < spec.tolerance {
            break;
        }
    }
    assign(points, &mut centers, &mut labels, &mut dists);
    let centers = means(points, &labels, &centers);
    let inertia = (0..n).map(|i| sq_dist(points.row(i), &centers[labels[i]])).sum();
    (labels, inertia)
}
