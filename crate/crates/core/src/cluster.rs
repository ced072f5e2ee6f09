//! Cluster-size distributions derived from short-return tails.
//!
//! Input is the tail `tail[l-1] = P(at least l-1 returns within the
//! window | start in U)`, a nonincreasing sequence starting at 1.  From
//! it the extremal index `alpha_1 = 1 - tail[1]` and the cluster sizes
//! `lambda_l = (tail[l] - 2 tail[l+1] + tail[l+2]) / alpha_1` follow by
//! telescoping (indices here are 1-based as in the formula).
//!
//! Only the `lambda_l` fully determined by the supplied tail are
//! returned: a tail of length `L` yields `L - 2` cluster sizes.  Both an
//! exact-rational and a floating-point path are provided; the exact path
//! is pure algebra and is the oracle for the float one.

use alloc::format;
use alloc::vec::Vec;

use num_traits::{One, Zero};

use crate::compound::ClusterSizeDist;
use crate::math::rat_to_f64;
use crate::{Error, Rat, Result};

/// Slack allowed when validating floating-point tails (estimates carry
/// Monte Carlo noise).
const TAIL_TOL: f64 = 1e-9;

/// Exact cluster-size data derived from an exact return tail.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivedClusterExact {
    /// `alpha_1 = 1 - tail[1]`, the extremal index.
    pub alpha1: Rat,
    /// First differences `alpha_l = tail[l] - tail[l+1]` (1-based `l`).
    pub alpha: Vec<Rat>,
    /// Cluster sizes `lambda_l` for `l = 1..=L-2`.
    pub lambda: Vec<Rat>,
}

impl DerivedClusterExact {
    /// Partial mean cluster size `sum_l l lambda_l` over the returned
    /// entries; approaches [`Self::kac_mean`] as the tail lengthens.
    pub fn mean_size(&self) -> Rat {
        let mut total = Rat::zero();
        for (i, lam) in self.lambda.iter().enumerate() {
            total += Rat::from_integer((i + 1).into()) * lam;
        }
        total
    }

    /// The limit value `1 / alpha_1` that the mean cluster size must
    /// approach.
    pub fn kac_mean(&self) -> Rat {
        Rat::one() / &self.alpha1
    }

    /// Cluster sizes as a floating-point distribution, renormalized over
    /// the returned entries.
    pub fn cluster_dist(&self) -> Result<ClusterSizeDist> {
        let total: Rat = self.lambda.iter().sum();
        if total <= Rat::zero() {
            return Err(Error::InvalidCluster(format!(
                "derived cluster sizes carry no mass"
            )));
        }
        ClusterSizeDist::new(
            self.lambda
                .iter()
                .map(|l| rat_to_f64(&(l / &total)))
                .collect(),
        )
    }

    pub fn to_f64(&self) -> DerivedCluster {
        DerivedCluster {
            alpha1: rat_to_f64(&self.alpha1),
            alpha: self.alpha.iter().map(rat_to_f64).collect(),
            lambda: self.lambda.iter().map(rat_to_f64).collect(),
        }
    }
}

/// Floating-point cluster-size data derived from an estimated tail.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedCluster {
    pub alpha1: f64,
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl DerivedCluster {
    pub fn mean_size(&self) -> f64 {
        self.lambda
            .iter()
            .enumerate()
            .map(|(i, l)| (i + 1) as f64 * l)
            .sum()
    }

    pub fn kac_mean(&self) -> f64 {
        1.0 / self.alpha1
    }
}

/// Derives exact cluster sizes from an exact return tail.
///
/// Requires `tail[0] = 1`, entries in `[0, 1]` nonincreasing, length at
/// least 3, and a nondegenerate extremal index `1 - tail[1] > 0`.
pub fn cluster_from_tail_exact(tail: &[Rat]) -> Result<DerivedClusterExact> {
    if tail.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "need at least 3 tail entries to determine one cluster size, got {}",
            tail.len()
        )));
    }
    if tail[0] != Rat::one() {
        return Err(Error::InvalidParameter(format!(
            "return tail must start at 1"
        )));
    }
    for pair in tail.windows(2) {
        if pair[1] > pair[0] || pair[1] < Rat::zero() {
            return Err(Error::InvalidParameter(format!(
                "return tail must be nonincreasing within [0, 1]"
            )));
        }
    }
    let alpha1 = Rat::one() - &tail[1];
    if alpha1 <= Rat::zero() {
        return Err(Error::InvalidParameter(format!(
            "degenerate extremal index 0: every start returns (pure clustering)"
        )));
    }
    let alpha: Vec<Rat> = tail.windows(2).map(|p| &p[0] - &p[1]).collect();
    let lambda: Vec<Rat> = alpha.windows(2).map(|p| (&p[0] - &p[1]) / &alpha1).collect();
    Ok(DerivedClusterExact {
        alpha1,
        alpha,
        lambda,
    })
}

/// Floating-point twin of [`cluster_from_tail_exact`], tolerant to
/// Monte Carlo noise of size `1e-9` in the validation.
pub fn cluster_from_tail(tail: &[f64]) -> Result<DerivedCluster> {
    if tail.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "need at least 3 tail entries to determine one cluster size, got {}",
            tail.len()
        )));
    }
    if (tail[0] - 1.0).abs() > TAIL_TOL {
        return Err(Error::InvalidParameter(format!(
            "return tail must start at 1, got {}",
            tail[0]
        )));
    }
    for pair in tail.windows(2) {
        if !pair[1].is_finite() || pair[1] > pair[0] + TAIL_TOL || pair[1] < -TAIL_TOL {
            return Err(Error::InvalidParameter(format!(
                "return tail must be nonincreasing within [0, 1]"
            )));
        }
    }
    let alpha1 = 1.0 - tail[1];
    if alpha1 <= TAIL_TOL {
        return Err(Error::InvalidParameter(format!(
            "degenerate extremal index {alpha1}: every start returns (pure clustering)"
        )));
    }
    let alpha: Vec<f64> = tail.windows(2).map(|p| p[0] - p[1]).collect();
    let lambda: Vec<f64> = alpha.windows(2).map(|p| (p[0] - p[1]) / alpha1).collect();
    Ok(DerivedCluster {
        alpha1,
        alpha,
        lambda,
    })
}
