//! Monte-Carlo estimators for entry counts, short-return statistics,
//! cluster sizes, the extremal index, and synchronized return trends.
//!
//! Every estimator is deterministic given `(seed, domain)`: the sample
//! space is split into fixed batches whose RNG streams depend only on the
//! batch index, so results are bit-identical for any worker count.  The
//! `domain` constants below keep the streams of distinct estimates
//! disjoint, so adding or removing one estimate never shifts another's
//! randomness.

use rarelab_core::cluster::{cluster_from_tail, DerivedCluster};
use rarelab_core::compound::{DiscretePmf, PmfMode};
use rarelab_core::{Error, Result};

use crate::sampling::{parallel_tally, ConditionalStart, Merge, ScaledSet, SymbolicSampler};

/// Two-sided 99% normal quantile used for every Wilson interval.
pub const Z99: f64 = 2.575_829_303_548_900_4;

/// Wilson 99% score-interval half-width for `successes` out of `total`.
pub fn wilson_half_width(successes: u64, total: u64) -> f64 {
    if total == 0 {
        return 1.0;
    }
    let n = total as f64;
    let p = successes as f64 / n;
    let z2 = Z99 * Z99;
    Z99 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n)
}

/// Stream-domain catalogue.
///
/// Estimates are addressed as `base * STRIDE + slot`, where `slot`
/// encodes the scale index and (for gridded estimates) the grid position.
/// The address is fixed by what is being estimated, never by which other
/// estimates run in the same process.
pub mod domain {
    /// Slots per estimator family.
    pub const STRIDE: u64 = 4096;
    /// Grid positions per scale inside a slot.
    pub const GRID: u64 = 64;

    pub const ENTRY_PMF: u64 = 1;
    /// Same functional as [`ENTRY_PMF`], independent stream, for the
    /// exceedance-count side of the equivalence check.
    pub const RARE_PMF: u64 = 2;
    pub const RETURNS: u64 = 3;
    pub const CLUSTER: u64 = 4;
    pub const RATIO: u64 = 5;
    pub const SYNC: u64 = 6;
    pub const LONG: u64 = 7;
    pub const COUPLED: u64 = 8;

    pub fn at(base: u64, scale: usize) -> u64 {
        base * STRIDE + scale as u64 * GRID
    }

    pub fn at_grid(base: u64, scale: usize, grid_index: usize) -> u64 {
        assert!((grid_index as u64) < GRID - 1);
        base * STRIDE + scale as u64 * GRID + 1 + grid_index as u64
    }
}

/// Empirical distribution of a nonnegative count.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EmpiricalPmf {
    counts: Vec<u64>,
    total: u64,
}

impl Merge for EmpiricalPmf {
    fn merge(&mut self, other: Self) {
        if other.counts.len() > self.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.total += other.total;
    }
}

impl EmpiricalPmf {
    pub fn record(&mut self, k: usize) {
        if k >= self.counts.len() {
            self.counts.resize(k + 1, 0);
        }
        self.counts[k] += 1;
        self.total += 1;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Largest recorded count plus one.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn mass(&self, k: usize) -> f64 {
        match self.counts.get(k) {
            Some(c) => *c as f64 / self.total as f64,
            None => 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        let mut acc = 0.0;
        for (k, c) in self.counts.iter().enumerate() {
            acc += k as f64 * *c as f64;
        }
        acc / self.total as f64
    }

    /// Standard error of the empirical mean.
    pub fn mean_se(&self) -> f64 {
        let m = self.mean();
        let mut var = 0.0;
        for (k, c) in self.counts.iter().enumerate() {
            var += (k as f64 - m).powi(2) * *c as f64;
        }
        (var / self.total as f64 / self.total as f64).sqrt()
    }

    /// Wilson 99% half-width of the mass at `k`.
    pub fn half_width(&self, k: usize) -> f64 {
        wilson_half_width(self.counts.get(k).copied().unwrap_or(0), self.total)
    }

    /// Total-variation distance to a model pmf, counting the model's
    /// truncation deficit as mass the sample does not carry.
    pub fn tv_to(&self, model: &DiscretePmf) -> f64 {
        let k_max = self.counts.len().max(model.masses().len());
        let mut acc = model.deficit();
        for k in 0..k_max {
            acc += (self.mass(k) - model.mass(k)).abs();
        }
        acc / 2.0
    }

    /// Converts to a model pmf carrying the Wilson half-widths.
    pub fn to_discrete(&self) -> DiscretePmf {
        let masses: Vec<f64> = (0..self.counts.len()).map(|k| self.mass(k)).collect();
        let ci: Vec<f64> = (0..self.counts.len()).map(|k| self.half_width(k)).collect();
        DiscretePmf::from_parts(masses, 0.0, PmfMode::Empirical, Some(ci))
    }
}

/// Where orbits start.
#[derive(Clone, Copy)]
pub enum StartLaw<'a> {
    /// The invariant (length) measure on the circle.
    Stationary,
    /// Exactly uniform inside a fixed set.
    Inside(&'a ConditionalStart),
}

/// Empirical pmf of the number of visits to `set` at times
/// `0..horizon`, starting from the invariant measure.
pub fn visit_count_pmf(
    sampler: &SymbolicSampler,
    set: &ScaledSet,
    horizon: u64,
    samples: u64,
    seed: u64,
    domain: u64,
) -> EmpiricalPmf {
    parallel_tally(samples, seed, domain, |mut rng, count, pmf: &mut EmpiricalPmf| {
        for _ in 0..count {
            let mut orbit = sampler.orbit_uniform(&mut rng);
            let mut hits = usize::from(orbit.is_in(set));
            for _ in 1..horizon {
                orbit.step();
                if orbit.is_in(set) {
                    hits += 1;
                }
            }
            pmf.record(hits);
        }
    })
}

#[derive(Debug, Clone, Default)]
struct CoupledTally {
    a: EmpiricalPmf,
    b: EmpiricalPmf,
    differing: u64,
}

impl Merge for CoupledTally {
    fn merge(&mut self, other: Self) {
        self.a.merge(other.a);
        self.b.merge(other.b);
        self.differing += other.differing;
    }
}

/// Counts visits of the *same* orbits to two sets over one shared
/// stream.  Returns both empirical pmfs and the number of orbits whose
/// two counts differ; every per-count gap between the pmfs is bounded by
/// that differing fraction by construction.
pub fn coupled_visit_pmfs(
    sampler: &SymbolicSampler,
    set_a: &ScaledSet,
    set_b: &ScaledSet,
    horizon: u64,
    samples: u64,
    seed: u64,
    domain: u64,
) -> (EmpiricalPmf, EmpiricalPmf, u64) {
    let tally: CoupledTally =
        parallel_tally(samples, seed, domain, |mut rng, count, t: &mut CoupledTally| {
            for _ in 0..count {
                let mut orbit = sampler.orbit_uniform(&mut rng);
                let mut hits_a = usize::from(orbit.is_in(set_a));
                let mut hits_b = usize::from(orbit.is_in(set_b));
                for _ in 1..horizon {
                    orbit.step();
                    if orbit.is_in(set_a) {
                        hits_a += 1;
                    }
                    if orbit.is_in(set_b) {
                        hits_b += 1;
                    }
                }
                t.a.record(hits_a);
                t.b.record(hits_b);
                if hits_a != hits_b {
                    t.differing += 1;
                }
            }
        });
    (tally.a, tally.b, tally.differing)
}

/// Raw tallies from conditional return sampling.
#[derive(Debug, Clone, Default)]
pub struct ReturnTally {
    /// `hist[c]` = samples with exactly `c` returns inside the window;
    /// the last bucket collects every higher count.
    pub hist: Vec<u64>,
    /// `times[r-1][i]` = samples whose `r`-th return happened at time `i`.
    pub times: Vec<Vec<u64>>,
    pub total: u64,
}

impl Merge for ReturnTally {
    fn merge(&mut self, other: Self) {
        if self.hist.is_empty() {
            *self = other;
            return;
        }
        for (a, b) in self.hist.iter_mut().zip(other.hist) {
            *a += b;
        }
        for (row, other_row) in self.times.iter_mut().zip(other.times) {
            for (a, b) in row.iter_mut().zip(other_row) {
                *a += b;
            }
        }
        self.total += other.total;
    }
}

/// Counts returns to `set` within `window` steps for starts uniform
/// inside `set`, recording the time of the `r`-th return for
/// `r < tracked_levels`.
pub fn return_tally(
    sampler: &SymbolicSampler,
    set: &ScaledSet,
    start: &ConditionalStart,
    window: u32,
    tracked_levels: usize,
    count_cap: usize,
    samples: u64,
    seed: u64,
    domain: u64,
) -> ReturnTally {
    parallel_tally(samples, seed, domain, |mut rng, count, tally: &mut ReturnTally| {
        if tally.hist.is_empty() {
            tally.hist = vec![0; count_cap + 1];
            tally.times = vec![vec![0; window as usize + 1]; tracked_levels];
        }
        for _ in 0..count {
            let mut orbit = sampler.orbit_in(start, &mut rng);
            let mut returns = 0usize;
            for i in 1..=window {
                orbit.step();
                if orbit.is_in(set) {
                    returns += 1;
                    if returns <= tracked_levels {
                        tally.times[returns - 1][i as usize] += 1;
                    }
                }
            }
            tally.hist[returns.min(count_cap)] += 1;
            tally.total += 1;
        }
    })
}

/// Short-return statistics over one window `K`.
///
/// `alpha_hat[l-1]` estimates the conditional probability of at least
/// `l - 1` returns within `K` steps (so `alpha_hat[0] = 1` exactly);
/// the vector extends two entries past `ell_max` so the cluster sizes
/// `lambda` can be formed by second differences.  `level_sets[l-2][i]`
/// estimates the probability that the `(l-1)`-th return lands exactly at
/// time `i`; each row sums to the matching `alpha_hat` entry by
/// construction of the tally.
#[derive(Debug, Clone)]
pub struct ClusterStats {
    pub window: u32,
    pub samples: u64,
    pub alpha_hat: Vec<f64>,
    /// Wilson 99% half-widths for `alpha_hat`.
    pub alpha_hat_hw: Vec<f64>,
    /// First differences of `alpha_hat`.
    pub alpha: Vec<f64>,
    /// Cluster sizes derived by the telescoping identity.
    pub lambda: Vec<f64>,
    /// Extremal index `1 - alpha_hat[1]`.
    pub alpha1: f64,
    pub alpha1_hw: f64,
    /// Rows `l = 2..=tracked`, columns `i = 0..=K`.
    pub level_sets: Vec<Vec<f64>>,
}

impl ClusterStats {
    /// Derived quantities as the shared cluster structure.
    pub fn derived(&self) -> Result<DerivedCluster> {
        cluster_from_tail(&self.alpha_hat)
    }
}

/// Estimates the short-return family at one window by conditional
/// sampling inside `set`.
pub fn cluster_stats(
    sampler: &SymbolicSampler,
    set: &ScaledSet,
    start: &ConditionalStart,
    window: u32,
    ell_max: usize,
    samples: u64,
    seed: u64,
    domain: u64,
) -> Result<ClusterStats> {
    if ell_max < 1 {
        return Err(Error::InvalidParameter(format!(
            "need ell_max >= 1, got {ell_max}"
        )));
    }
    // Track two levels past ell_max so lambda_1..lambda_ell_max exist.
    let cap = ell_max + 1;
    let tally = return_tally(
        sampler,
        set,
        start,
        window,
        ell_max.saturating_sub(1),
        cap,
        samples,
        seed,
        domain,
    );
    let n = tally.total;
    // Reverse-cumulative counts: tail_counts[l-1] = #{>= l-1 returns}.
    // The capped top histogram bucket already means ">= cap", so every
    // tail count up to index cap is exact.
    let mut tail_counts = vec![0u64; cap + 1];
    let mut acc = 0u64;
    for c in (0..=cap).rev() {
        acc += tally.hist[c];
        tail_counts[c] = acc;
    }
    let alpha_hat: Vec<f64> = tail_counts.iter().map(|c| *c as f64 / n as f64).collect();
    let alpha_hat_hw: Vec<f64> = tail_counts
        .iter()
        .map(|c| wilson_half_width(*c, n))
        .collect();
    let alpha: Vec<f64> = alpha_hat.windows(2).map(|p| p[0] - p[1]).collect();
    // The cluster-size derivation rejects the pure-clustering corner
    // where every start returned; surface that as an empty `lambda`
    // rather than failing the whole tally.
    let (alpha1, lambda) = match cluster_from_tail(&alpha_hat) {
        Ok(derived) => (derived.alpha1, derived.lambda),
        Err(_) => (1.0 - alpha_hat[1], Vec::new()),
    };
    let level_sets: Vec<Vec<f64>> = tally
        .times
        .iter()
        .map(|row| row.iter().map(|c| *c as f64 / n as f64).collect())
        .collect();
    Ok(ClusterStats {
        window,
        samples: n,
        alpha1,
        alpha1_hw: alpha_hat_hw[1],
        lambda,
        alpha,
        alpha_hat,
        alpha_hat_hw,
        level_sets,
    })
}

/// Cluster-size ratio estimates from unconditional window sampling.
#[derive(Debug, Clone)]
pub struct WindowClusterEstimate {
    /// `lambda[l-1]` estimates P(exactly `l` visits | at least one visit)
    /// over a window of `2K + 1` steps.
    pub lambda: Vec<f64>,
    /// Wilson 99% half-widths conditioned on the observed window hits.
    pub lambda_hw: Vec<f64>,
    /// Mean number of visits given at least one.
    pub mean_given_hit: f64,
    pub mean_given_hit_se: f64,
    /// Number of windows containing at least one visit.
    pub conditioning_hits: u64,
    pub samples: u64,
}

/// Estimates cluster sizes as the visit-count distribution of a window of
/// `2K + 1` steps conditioned on at least one visit, sampling starts from
/// the invariant measure.
pub fn window_cluster(
    sampler: &SymbolicSampler,
    set: &ScaledSet,
    half_window: u32,
    samples: u64,
    seed: u64,
    domain: u64,
) -> Result<WindowClusterEstimate> {
    let span = 2 * u64::from(half_window) + 1;
    let pmf = visit_count_pmf(sampler, set, span, samples, seed, domain);
    let hits = pmf.total() - pmf.counts()[0];
    if hits == 0 {
        return Err(Error::EmptySet(format!(
            "no window of {span} steps contained a visit in {samples} samples; \
             raise the sample budget"
        )));
    }
    let lambda: Vec<f64> = pmf.counts()[1..]
        .iter()
        .map(|c| *c as f64 / hits as f64)
        .collect();
    let lambda_hw: Vec<f64> = pmf.counts()[1..]
        .iter()
        .map(|c| wilson_half_width(*c, hits))
        .collect();
    let mean_given_hit: f64 = lambda
        .iter()
        .enumerate()
        .map(|(i, l)| (i + 1) as f64 * l)
        .sum();
    let var: f64 = lambda
        .iter()
        .enumerate()
        .map(|(i, l)| ((i + 1) as f64 - mean_given_hit).powi(2) * l)
        .sum();
    Ok(WindowClusterEstimate {
        mean_given_hit,
        mean_given_hit_se: (var / hits as f64).sqrt(),
        conditioning_hits: hits,
        samples: pmf.total(),
        lambda,
        lambda_hw,
    })
}

/// Probability of at least one visit to `set` at a time in
/// `lo..=hi`, with a Wilson 99% half-width.
pub fn hit_probability(
    sampler: &SymbolicSampler,
    set: &ScaledSet,
    start: StartLaw<'_>,
    lo: u32,
    hi: u32,
    samples: u64,
    seed: u64,
    domain: u64,
) -> (f64, f64) {
    #[derive(Default)]
    struct Tally {
        hits: u64,
        total: u64,
    }
    impl Merge for Tally {
        fn merge(&mut self, other: Self) {
            self.hits += other.hits;
            self.total += other.total;
        }
    }
    let tally = parallel_tally(samples, seed, domain, |mut rng, count, t: &mut Tally| {
        for _ in 0..count {
            let mut orbit = match start {
                StartLaw::Stationary => sampler.orbit_uniform(&mut rng),
                StartLaw::Inside(tables) => sampler.orbit_in(tables, &mut rng),
            };
            let mut hit = false;
            for i in 1..=hi {
                orbit.step();
                if i >= lo && orbit.is_in(set) {
                    hit = true;
                    break;
                }
            }
            t.hits += u64::from(hit);
            t.total += 1;
        }
    });
    (
        tally.hits as f64 / tally.total as f64,
        wilson_half_width(tally.hits, tally.total),
    )
}

/// The two extremal-index estimates with their half-widths.
#[derive(Debug, Clone)]
pub struct ExtremalIndexEstimate {
    /// Conditional route: fraction of starts in the set with no return
    /// within `K`.
    pub conditional: f64,
    pub conditional_hw: f64,
    /// Ratio route: P(first entry within `K`) / (K mu).
    pub ratio: f64,
    pub ratio_hw: f64,
    pub window: u32,
}

impl ExtremalIndexEstimate {
    /// Whether the two routes agree within their joint 99% interval.
    pub fn routes_agree(&self) -> bool {
        (self.conditional - self.ratio).abs()
            <= (self.conditional_hw.powi(2) + self.ratio_hw.powi(2)).sqrt()
    }
}

/// Estimates the extremal index by both routes.
///
/// The conditional route reuses `stats` (no-return fraction); the ratio
/// route draws `ratio_samples` fresh unconditional starts and divides the
/// first-entry probability by `K mu`.
pub fn extremal_index(
    sampler: &SymbolicSampler,
    set: &ScaledSet,
    stats: &ClusterStats,
    measure: f64,
    ratio_samples: u64,
    seed: u64,
    domain: u64,
) -> ExtremalIndexEstimate {
    let k = stats.window;
    let (p_entry, p_hw) = hit_probability(
        sampler,
        set,
        StartLaw::Stationary,
        1,
        k,
        ratio_samples,
        seed,
        domain,
    );
    let scale = f64::from(k) * measure;
    ExtremalIndexEstimate {
        conditional: stats.alpha1,
        conditional_hw: stats.alpha1_hw,
        ratio: p_entry / scale,
        ratio_hw: p_hw / scale,
        window: k,
    }
}

/// One synchronized-return estimate: the return window grows with the
/// scale instead of staying fixed.
#[derive(Debug, Clone)]
pub struct SyncReturnEstimate {
    /// The synchronized window `s_n`.
    pub window: u32,
    /// `beta[l-1]` estimates the conditional probability of at least
    /// `l - 1` returns before `s_n`.
    pub beta: Vec<f64>,
    pub beta_hw: Vec<f64>,
    pub samples: u64,
}

/// Estimates the synchronized return tail at one scale; the functional is
/// the short-return tail with `window = s_n`.
pub fn sync_returns(
    sampler: &SymbolicSampler,
    set: &ScaledSet,
    start: &ConditionalStart,
    window: u32,
    ell_max: usize,
    samples: u64,
    seed: u64,
    domain: u64,
) -> Result<SyncReturnEstimate> {
    let stats = cluster_stats(
        sampler, set, start, window, ell_max, samples, seed, domain,
    )?;
    Ok(SyncReturnEstimate {
        window,
        beta: stats.alpha_hat[..ell_max].to_vec(),
        beta_hw: stats.alpha_hat_hw[..ell_max].to_vec(),
        samples: stats.samples,
    })
}
