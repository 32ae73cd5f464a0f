//! Average-linkage agglomerative clustering on Euclidean distance.
//!
//! Greedy merging of the closest pair of clusters. Each live cluster keeps
//! its nearest live neighbour among clusters with a larger index, so the
//! global minimum is a linear scan and ties resolve to the smallest
//! `(i, j)`. A merged cluster keeps the smaller index.

use super::{check_k, ClusterAssignment, ClustererSpec};
use crate::error::Result;
use crate::matrix::{sq_dist, Matrix};

struct Condensed {
    n: usize,
    data: Vec<f64>,
}

impl Condensed {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }
}

// index loops keep the symmetric updates readable
#[allow(clippy::needless_range_loop)]
pub fn hac_fit(points: &Matrix, k: usize, _spec: &ClustererSpec) -> Result<ClusterAssignment> {
    check_k(points, k)?;
    let n = points.rows();
    let mut dist = Condensed {
        n,
        data: Vec::with_capacity(n * n.saturating_sub(1) / 2),
    };
    for i in 0..n {
        for j in (i + 1)..n {
            dist.data.push(sq_dist(points.row(i), points.row(j)).sqrt());
        }
    }

    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut parent: Vec<usize> = (0..n).collect();
    let mut nn = vec![usize::MAX; n];
    let mut nn_dist = vec![f64::INFINITY; n];

    let recompute = |i: usize, active: &[bool], dist: &Condensed, nn: &mut [usize], nn_dist: &mut [f64]| {
        nn[i] = usize::MAX;
        nn_dist[i] = f64::INFINITY;
        for j in (i + 1)..n {
            if active[j] {
                let d = dist.get(i, j);
                if d < nn_dist[i] {
                    nn[i] = j;
                    nn_dist[i] = d;
                }
            }
        }
    };
    for i in 0..n {
        recompute(i, &active, &dist, &mut nn, &mut nn_dist);
    }

    let mut clusters = n;
    while clusters > k {
        let mut best = usize::MAX;
        for i in 0..n {
            if active[i] && nn[i] != usize::MAX && (best == usize::MAX || nn_dist[i] < nn_dist[best]) {
                best = i;
            }
        }
        let i = best;
        let j = nn[i];
        let (si, sj) = (size[i] as f64, size[j] as f64);
        for m in 0..n {
            if active[m] && m != i && m != j {
                let d = (si * dist.get(i, m) + sj * dist.get(j, m)) / (si + sj);
                dist.set(i, m, d);
            }
        }
        active[j] = false;
        size[i] += size[j];
        parent[j] = i;
        clusters -= 1;

        recompute(i, &active, &dist, &mut nn, &mut nn_dist);
        for m in 0..i {
            if !active[m] {
                continue;
            }
            if nn[m] == i || nn[m] == j {
                recompute(m, &active, &dist, &mut nn, &mut nn_dist);
            } else {
                let d = dist.get(m, i);
                if d < nn_dist[m] || (d == nn_dist[m] && i < nn[m]) {
                    nn[m] = i;
                    nn_dist[m] = d;
                }
            }
        }
        for m in (i + 1)..j {
            if active[m] && nn[m] == j {
                recompute(m, &active, &dist, &mut nn, &mut nn_dist);
            }
        }
    }

    let root = |mut x: usize| {
        while parent[x] != x {
            x = parent[x];
        }
        x
    };
    let labels = (0..n).map(root).collect();
    Ok(ClusterAssignment::canonical(labels, k))
}
