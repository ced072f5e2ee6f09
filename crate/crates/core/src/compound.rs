//! Compound Poisson and compound binomial laws on the nonnegative
//! integers, and total-variation distances between discrete laws.
//!
//! `W = Z_1 + ... + Z_P` where the number of clusters `P` is Poisson or
//! binomial and the cluster sizes `Z_j` are i.i.d. on `{1, ..., L}`.
//! Masses are computed in `f64` with compensated summation; cluster
//! distributions are finitely truncated with the truncation deficit
//! tracked explicitly.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// `Float` supplies the f64 math methods in no_std builds; std builds
// resolve the inherent methods first, so the import may look unused.
#[allow(unused_imports)]
use num_traits::Float;

use crate::math::CompensatedSum;
use crate::{Error, Result};

/// Acceptable slack when validating that cluster probabilities sum to 1;
/// inputs inside this tolerance are renormalized exactly.
const CLUSTER_SUM_TOL: f64 = 1e-9;

/// Geometric clusters are truncated once the remaining tail mass drops
/// below this bound.
const GEOMETRIC_TAIL: f64 = 1e-12;

/// Distribution of a single cluster size on `{1, ..., L}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSizeDist {
    probs: Vec<f64>,
}

impl ClusterSizeDist {
    /// Builds a cluster-size distribution from `probs[l-1] = P(Z = l)`.
    ///
    /// Probabilities must be finite, nonnegative, and sum to 1 within
    /// `1e-9`; the stored values are renormalized to sum to 1 exactly.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidCluster(format!(
                "cluster distribution needs at least one size"
            )));
        }
        for (i, p) in probs.iter().enumerate() {
            if !p.is_finite() || *p < 0.0 || *p > 1.0 {
                return Err(Error::InvalidCluster(format!(
                    "cluster probability for size {} is {p}, outside [0, 1]",
                    i + 1
                )));
            }
        }
        let total = compensated(&probs);
        if (total - 1.0).abs() > CLUSTER_SUM_TOL {
            return Err(Error::InvalidCluster(format!(
                "cluster probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self {
            probs: probs.into_iter().map(|p| p / total).collect(),
        })
    }

    /// The deterministic cluster of size 1.
    pub fn unit() -> Self {
        Self { probs: vec![1.0] }
    }

    /// Geometric cluster sizes `P(Z = l) = theta (1 - theta)^(l-1)`,
    /// truncated once the tail drops below `1e-12` and renormalized.
    pub fn geometric(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "geometric cluster parameter must lie in (0, 1], got {theta}"
            )));
        }
        if theta == 1.0 {
            return Ok(Self::unit());
        }
        let q = 1.0 - theta;
        let mut probs = Vec::new();
        let mut tail = 1.0; // remaining mass (1 - theta)^l after l terms
        while tail >= GEOMETRIC_TAIL {
            probs.push(theta * tail);
            tail *= q;
        }
        Self::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Largest cluster size carried, `L`.
    pub fn max_size(&self) -> usize {
        self.probs.len()
    }

    /// `E(Z) = sum_l l * P(Z = l)`.
    pub fn mean(&self) -> f64 {
        let mut sum = CompensatedSum::new();
        for (i, p) in self.probs.iter().enumerate() {
            sum.add((i + 1) as f64 * p);
        }
        sum.total()
    }
}

/// `W = Z_1 + ... + Z_P` with `P ~ Poisson(intensity)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompoundPoissonSpec {
    intensity: f64,
    cluster: ClusterSizeDist,
}

impl CompoundPoissonSpec {
    pub fn new(intensity: f64, cluster: ClusterSizeDist) -> Result<Self> {
        if !intensity.is_finite() || intensity < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "compound Poisson intensity must be finite and >= 0, got {intensity}"
            )));
        }
        Ok(Self { intensity, cluster })
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn cluster(&self) -> &ClusterSizeDist {
        &self.cluster
    }

    /// Masses `P(W = k)` for `k = 0..=k_max` via the size-biased
    /// recursion `P(W=0) = e^(-s)`,
    /// `P(W=k) = (s/k) sum_l l lambda_l P(W = k-l)`.
    pub fn pmf(&self, k_max: usize) -> DiscretePmf {
        let s = self.intensity;
        let lambdas = self.cluster.probs();
        let mut masses = vec![0.0; k_max + 1];
        masses[0] = (-s).exp();
        for k in 1..=k_max {
            let mut sum = CompensatedSum::new();
            for ell in 1..=core::cmp::min(k, lambdas.len()) {
                sum.add(ell as f64 * lambdas[ell - 1] * masses[k - ell]);
            }
            masses[k] = s / k as f64 * sum.total();
        }
        DiscretePmf::exact_masses(masses)
    }

    /// Masses via the direct Poisson mixture of convolution powers,
    /// `P(W = k) = sum_j e^(-s) s^j / j! (lambda^(*j))(k)` — an
    /// independent slow path used to cross-check [`Self::pmf`].
    pub fn pmf_by_convolution(&self, k_max: usize) -> DiscretePmf {
        let s = self.intensity;
        // lambda^(*j) restricted to 0..=k_max; j > k_max contributes
        // nothing there because each cluster has size >= 1.
        let mut single = vec![0.0; k_max + 1];
        for (i, p) in self.cluster.probs().iter().enumerate() {
            if i + 1 <= k_max {
                single[i + 1] = *p;
            }
        }
        let mut power = vec![0.0; k_max + 1];
        power[0] = 1.0; // lambda^(*0) = delta_0
        let mut sums: Vec<CompensatedSum> = (0..=k_max).map(|_| CompensatedSum::new()).collect();
        let mut weight = (-s).exp(); // e^(-s) s^j / j!
        for j in 0..=k_max {
            for (k, sum) in sums.iter_mut().enumerate() {
                sum.add(weight * power[k]);
            }
            power = convolve_truncated(&power, &single, k_max);
            weight *= s / (j + 1) as f64;
        }
        DiscretePmf::exact_masses(sums.into_iter().map(|s| s.total()).collect())
    }
}

/// Compound Poisson with geometric cluster sizes.
pub fn polya_aeppli(theta: f64, intensity: f64) -> Result<CompoundPoissonSpec> {
    CompoundPoissonSpec::new(intensity, ClusterSizeDist::geometric(theta)?)
}

/// `W = Z_1 + ... + Z_Q` with `Q ~ Binomial(trials, success)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompoundBinomialSpec {
    trials: u64,
    success: f64,
    cluster: ClusterSizeDist,
}

impl CompoundBinomialSpec {
    pub fn new(trials: u64, success: f64, cluster: ClusterSizeDist) -> Result<Self> {
        if trials < 1 {
            return Err(Error::InvalidParameter(format!(
                "compound binomial needs at least one trial"
            )));
        }
        if !(0.0..=1.0).contains(&success) || !success.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "success probability must lie in [0, 1], got {success}"
            )));
        }
        Ok(Self {
            trials,
            success,
            cluster,
        })
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    pub fn success(&self) -> f64 {
        self.success
    }

    pub fn cluster(&self) -> &ClusterSizeDist {
        &self.cluster
    }

    /// Masses `P(W = k)` for `k = 0..=k_max` by squaring the per-trial
    /// polynomial `(1-p) + p sum_l lambda_l x^l`.
    ///
    /// Truncating every convolution at `k_max` is exact for the retained
    /// coefficients: discarded higher-order terms never flow back down.
    pub fn pmf(&self, k_max: usize) -> DiscretePmf {
        let mut trial = vec![0.0; k_max + 1];
        trial[0] = 1.0 - self.success;
        for (i, lambda) in self.cluster.probs().iter().enumerate() {
            if i + 1 <= k_max {
                trial[i + 1] = self.success * lambda;
            }
        }
        let mut acc = vec![0.0; k_max + 1];
        acc[0] = 1.0;
        let mut base = trial;
        let mut n = self.trials;
        while n > 0 {
            if n & 1 == 1 {
                acc = convolve_truncated(&acc, &base, k_max);
            }
            n >>= 1;
            if n > 0 {
                base = convolve_truncated(&base, &base, k_max);
            }
        }
        DiscretePmf::exact_masses(acc)
    }
}

fn convolve_truncated(a: &[f64], b: &[f64], k_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let mut sum = CompensatedSum::new();
        let lo = k.saturating_sub(b.len() - 1);
        for i in lo..=core::cmp::min(k, a.len() - 1) {
            sum.add(a[i] * b[k - i]);
        }
        out.push(sum.total());
    }
    out
}

fn compensated(xs: &[f64]) -> f64 {
    let mut sum = CompensatedSum::new();
    for x in xs {
        sum.add(*x);
    }
    sum.total()
}

/// Whether the masses of a [`DiscretePmf`] were computed analytically or
/// estimated from samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmfMode {
    Exact,
    Empirical,
}

/// A (possibly truncated) probability mass function on `{0, 1, 2, ...}`.
///
/// Masses sum to at most 1; the remainder is the truncation deficit.
/// Empirical pmfs may carry per-mass confidence half-widths.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePmf {
    masses: Vec<f64>,
    deficit: f64,
    mode: PmfMode,
    ci: Option<Vec<f64>>,
}

impl DiscretePmf {
    pub fn from_parts(
        masses: Vec<f64>,
        deficit: f64,
        mode: PmfMode,
        ci: Option<Vec<f64>>,
    ) -> Self {
        Self {
            masses,
            deficit,
            mode,
            ci,
        }
    }

    /// Analytic masses; the deficit is whatever is missing from 1.
    pub fn exact_masses(masses: Vec<f64>) -> Self {
        let deficit = (1.0 - compensated(&masses)).max(0.0);
        Self {
            masses,
            deficit,
            mode: PmfMode::Exact,
            ci: None,
        }
    }

    /// Point mass at `k`.
    pub fn dirac(k: usize) -> Self {
        let mut masses = vec![0.0; k + 1];
        masses[k] = 1.0;
        Self::exact_masses(masses)
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, k: usize) -> f64 {
        self.masses.get(k).copied().unwrap_or(0.0)
    }

    pub fn deficit(&self) -> f64 {
        self.deficit
    }

    pub fn mode(&self) -> PmfMode {
        self.mode
    }

    pub fn ci_half_widths(&self) -> Option<&[f64]> {
        self.ci.as_deref()
    }

    /// Mean of the truncated part.
    pub fn mean(&self) -> f64 {
        let mut sum = CompensatedSum::new();
        for (k, mass) in self.masses.iter().enumerate() {
            sum.add(k as f64 * mass);
        }
        sum.total()
    }
}

/// Total-variation distance
/// `(1/2) sum_k |a(k) - b(k)| + (1/2) |deficit_a - deficit_b|`.
pub fn tv_distance(a: &DiscretePmf, b: &DiscretePmf) -> f64 {
    let len = core::cmp::max(a.masses.len(), b.masses.len());
    let mut sum = CompensatedSum::new();
    for k in 0..len {
        sum.add((a.mass(k) - b.mass(k)).abs());
    }
    sum.add((a.deficit - b.deficit).abs());
    0.5 * sum.total()
}
