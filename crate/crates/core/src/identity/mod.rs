//! Patient vector database and cluster likelihoods.
//!
//! A patient is the ordered list of vectors stored under its id. Four
//! strategies score a candidate vector `v` against a cluster `p_1..p_n`:
//!
//! - `vec_avg`: `f(v, mean(p))` — one discriminator call.
//! - `disc_avg`: `mean_j f(v, p_j)` — `n` calls.
//! - `weighted_disc_avg`: `sum_j f(v, p_j) q_j / sum_j q_j` with quality
//!   `q_j = sum_{k != j} f(p_j, p_k)` — `n + n(n-1)` calls for `n >= 2`.
//!   Singletons (and an all-zero quality sum) fall back to `disc_avg`.
//! - `weighted_consistency`: `c * weighted_disc_avg` with consistency
//!   `c = sum_j q_j / (n(n-1))`, reusing the same ordered-pair calls, and
//!   `c = 1` for singletons.

mod store;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discriminator::{DiscError, Discriminator};
use crate::embedder::EcgVector;

pub use store::{best_match, VectorDatabase};

#[derive(Debug, Error)]
pub enum IdentityError {
    #[error("patient cluster is empty")]
    EmptyCluster,
    #[error("vector dimension mismatch: database holds {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("unknown patient {0}")]
    UnknownPatient(u32),
    #[error("patient {0} is already registered")]
    DuplicatePatient(u32),
    #[error("database is empty")]
    EmptyDatabase,
    #[error("malformed database file: {0}")]
    Format(String),
    #[error(transparent)]
    Disc(#[from] DiscError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodStrategy {
    VecAvg,
    DiscAvg,
    #[default]
    WeightedDiscAvg,
    WeightedConsistency,
}

impl LikelihoodStrategy {
    pub const ALL: [LikelihoodStrategy; 4] =
        [Self::VecAvg, Self::DiscAvg, Self::WeightedDiscAvg, Self::WeightedConsistency];

    pub fn name(self) -> &'static str {
        match self {
            Self::VecAvg => "vec_avg",
            Self::DiscAvg => "disc_avg",
            Self::WeightedDiscAvg => "weighted_disc_avg",
            Self::WeightedConsistency => "weighted_consistency",
        }
    }

    /// Discriminator calls one likelihood costs for a cluster of `n`
    /// without cached cluster statistics.
    pub fn call_count(self, n: usize) -> usize {
        match self {
            Self::VecAvg => 1,
            Self::DiscAvg => n,
            Self::WeightedDiscAvg | Self::WeightedConsistency => n + n * n.saturating_sub(1),
        }
    }
}

impl fmt::Display for LikelihoodStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LikelihoodStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.replace('-', "_");
        Self::ALL.into_iter().find(|st| st.name() == norm).ok_or_else(|| {
            format!(
                "unknown strategy {s:?} (expected one of vec_avg, disc_avg, weighted_disc_avg, weighted_consistency)"
            )
        })
    }
}

/// Per-vector quality `q_j` of a cluster and its sum.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats {
    pub quality: Vec<f64>,
    pub total: f64,
}

impl ClusterStats {
    /// Consistency `c`: the mean ordered-pair discriminator output.
    pub fn consistency(&self) -> f64 {
        let n = self.quality.len();
        if n < 2 {
            1.0
        } else {
            self.total / (n * (n - 1)) as f64
        }
    }
}

fn non_empty(cluster: &[EcgVector]) -> Result<(), IdentityError> {
    if cluster.is_empty() {
        Err(IdentityError::EmptyCluster)
    } else {
        Ok(())
    }
}

/// Computes `q_j` with `n(n-1)` ordered-pair calls.
pub fn cluster_stats(cluster: &[EcgVector], head: &dyn Discriminator) -> Result<ClusterStats, IdentityError> {
    let mut quality = vec![0.0; cluster.len()];
    for (j, pj) in cluster.iter().enumerate() {
        for (k, pk) in cluster.iter().enumerate() {
            if j != k {
                quality[j] += head.discriminate(pj, pk)?;
            }
        }
    }
    let total = quality.iter().sum();
    Ok(ClusterStats { quality, total })
}

pub fn likelihood_vec_avg(
    v: &EcgVector,
    cluster: &[EcgVector],
    head: &dyn Discriminator,
) -> Result<f64, IdentityError> {
    non_empty(cluster)?;
    let mut mean = vec![0.0; cluster[0].dim()];
    for p in cluster {
        if p.dim() != mean.len() {
            return Err(IdentityError::DimMismatch { expected: mean.len(), found: p.dim() });
        }
        for (m, x) in mean.iter_mut().zip(p.values()) {
            *m += x;
        }
    }
    let n = cluster.len() as f64;
    let mean = EcgVector::new(mean.into_iter().map(|m| m / n).collect()).map_err(DiscError::from)?;
    Ok(head.discriminate(v, &mean)?)
}

fn outputs(v: &EcgVector, cluster: &[EcgVector], head: &dyn Discriminator) -> Result<Vec<f64>, IdentityError> {
    non_empty(cluster)?;
    cluster.iter().map(|p| Ok(head.discriminate(v, p)?)).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn likelihood_disc_avg(
    v: &EcgVector,
    cluster: &[EcgVector],
    head: &dyn Discriminator,
) -> Result<f64, IdentityError> {
    Ok(mean(&outputs(v, cluster, head)?))
}

fn weighted(f: &[f64], stats: &ClusterStats) -> f64 {
    if f.len() < 2 || stats.total == 0.0 {
        return mean(f);
    }
    f.iter().zip(&stats.quality).map(|(a, q)| a * q).sum::<f64>() / stats.total
}

pub fn likelihood_weighted_disc_avg(
    v: &EcgVector,
    cluster: &[EcgVector],
    head: &dyn Discriminator,
) -> Result<f64, IdentityError> {
    let f = outputs(v, cluster, head)?;
    let stats = cluster_stats(cluster, head)?;
    Ok(weighted(&f, &stats))
}

pub fn likelihood_weighted_consistency(
    v: &EcgVector,
    cluster: &[EcgVector],
    head: &dyn Discriminator,
) -> Result<f64, IdentityError> {
    let f = outputs(v, cluster, head)?;
    let stats = cluster_stats(cluster, head)?;
    Ok(stats.consistency() * weighted(&f, &stats))
}

/// Dispatches on `strategy`. `stats`, when given, must be the cluster's
/// statistics under the same head; it replaces the intra-cluster calls.
pub fn likelihood(
    v: &EcgVector,
    cluster: &[EcgVector],
    head: &dyn Discriminator,
    strategy: LikelihoodStrategy,
    stats: Option<&ClusterStats>,
) -> Result<f64, IdentityError> {
    match (strategy, stats) {
        (LikelihoodStrategy::VecAvg, _) => likelihood_vec_avg(v, cluster, head),
        (LikelihoodStrategy::DiscAvg, _) => likelihood_disc_avg(v, cluster, head),
        (LikelihoodStrategy::WeightedDiscAvg, None) => likelihood_weighted_disc_avg(v, cluster, head),
        (LikelihoodStrategy::WeightedConsistency, None) => likelihood_weighted_consistency(v, cluster, head),
        (s, Some(stats)) => {
            let f = outputs(v, cluster, head)?;
            let l = weighted(&f, stats);
            Ok(if s == LikelihoodStrategy::WeightedConsistency { stats.consistency() * l } else { l })
        }
    }
}
