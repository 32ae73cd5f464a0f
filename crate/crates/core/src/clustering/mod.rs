//! Clusterers over relation vectors and the homogeneity objective.

mod hac;
mod kmeans;
mod metrics;

use std::fmt;
use std::str::FromStr;

pub use hac::hac_fit;
pub use kmeans::kmeans_fit;
pub use metrics::{homogeneity, weighted_mean};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Cluster id per point, ids in `[0, k)`, numbered by first occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
}

impl ClusterAssignment {
    pub(crate) fn canonical(raw: Vec<usize>, k: usize) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels = raw
            .into_iter()
            .map(|l| {
                let next = map.len();
                *map.entry(l).or_insert(next)
            })
            .collect();
        Self { labels, k }
    }

    pub fn distinct(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClustererKind {
    KMeans,
    Hac,
}

impl fmt::Display for ClustererKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClustererKind::KMeans => "kmeans",
            ClustererKind::Hac => "hac",
        })
    }
}

impl FromStr for ClustererKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kmeans" | "kmc" => Ok(ClustererKind::KMeans),
            "hac" => Ok(ClustererKind::Hac),
            other => Err(Error::InvalidConfig(format!(
                "unknown clusterer `{other}` (expected kmeans or hac)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClustererSpec {
    pub kind: ClustererKind,
    pub seed: u64,
    pub max_iters: usize,
    pub tolerance: f64,
    /// Independent k-means++ starts; the lowest-inertia fit wins.
    pub restarts: usize,
}

impl ClustererSpec {
    pub fn kmeans(seed: u64) -> Self {
        Self {
            kind: ClustererKind::KMeans,
            seed,
            max_iters: 300,
            tolerance: 1e-6,
            restarts: 10,
        }
    }

    /// Average linkage is the only linkage.
    pub fn hac() -> Self {
        Self {
            kind: ClustererKind::Hac,
            ..Self::kmeans(0)
        }
    }

    // the negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.restarts == 0 || !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig(
                "clusterer max_iters, restarts and tolerance must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn fit(&self, points: &Matrix, k: usize) -> Result<ClusterAssignment> {
        match self.kind {
            ClustererKind::KMeans => kmeans_fit(points, k, self),
            ClustererKind::Hac => hac_fit(points, k, self),
        }
    }
}

pub(crate) fn check_k(points: &Matrix, k: usize) -> Result<()> {
    if k < 1 || k > points.rows() {
        return Err(Error::InvalidInput(format!(
            "cannot form {k} clusters from {} points",
            points.rows()
        )));
    }
    if !points.is_finite() {
        return Err(Error::InvalidInput("points contain non-finite values".into()));
    }
    Ok(())
}
