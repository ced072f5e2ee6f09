//! Piecewise-affine full-branch Markov maps of the circle.
//!
//! A map is given by an ordered partition of `[0, 1)` into half-open branch
//! domains; each branch is the affine orientation-preserving bijection from
//! its domain onto `[0, 1)`.  Full affine branches make normalized length
//! measure invariant and the branch coding a Bernoulli generator, and they
//! satisfy the bounded-distortion and big-image hypotheses of the
//! Gibbs-Markov setting with distortion constant 1, so exact rational
//! computations stand in for the usual estimates.

use alloc::format;
use alloc::vec::Vec;

use num_traits::{One, Zero};

use crate::interval::IntervalUnion;
use crate::math::rat_to_f64;
use crate::{Error, Rat, Result};

/// Maximum number of branches; keeps symbols in `u8` and exact state spaces
/// within the guard rails.
pub const MAX_BRANCHES: usize = 64;

/// One affine full branch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Branch {
    left: Rat,
    right: Rat,
}

impl Branch {
    /// Left endpoint of the domain.
    pub fn left(&self) -> &Rat {
        &self.left
    }

    /// Right endpoint of the domain.
    pub fn right(&self) -> &Rat {
        &self.right
    }

    /// Domain length; the slope is its reciprocal.
    pub fn length(&self) -> Rat {
        &self.right - &self.left
    }
}

/// A full-branch piecewise-affine Markov map of the circle.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseAffineMap {
    branches: Vec<Branch>,
    // Cached f64 mirrors for fast orbit iteration.
    lefts_f64: Vec<f64>,
    slopes_f64: Vec<f64>,
}

impl PiecewiseAffineMap {
    /// Builds a map from consecutive branch lengths, which must be positive
    /// and sum to exactly 1.
    pub fn from_branch_lengths(lengths: &[Rat]) -> Result<Self> {
        if lengths.len() < 2 {
            return Err(Error::InvalidPartition(format!(
                "need at least 2 branches, got {}",
                lengths.len()
            )));
        }
        if lengths.len() > MAX_BRANCHES {
            return Err(Error::InvalidPartition(format!(
                "too many branches: {} > {MAX_BRANCHES}",
                lengths.len()
            )));
        }
        let mut branches = Vec::with_capacity(lengths.len());
        let mut cursor = Rat::zero();
        for len in lengths {
            if len <= &Rat::zero() {
                return Err(Error::InvalidPartition(format!(
                    "branch length {len} is not positive"
                )));
            }
            let next = &cursor + len;
            branches.push(Branch {
                left: cursor,
                right: next.clone(),
            });
            cursor = next;
        }
        if cursor != Rat::one() {
            return Err(Error::InvalidPartition(format!(
                "branch lengths sum to {cursor}, expected 1"
            )));
        }
        let lefts_f64 = branches.iter().map(|b| rat_to_f64(&b.left)).collect();
        let slopes_f64 = branches
            .iter()
            .map(|b| 1.0 / rat_to_f64(&b.length()))
            .collect();
        Ok(Self {
            branches,
            lefts_f64,
            slopes_f64,
        })
    }

    /// The angle-doubling map: two branches of length 1/2.
    pub fn doubling() -> Self {
        Self::from_branch_lengths(&[crate::rat(1, 2), crate::rat(1, 2)]).expect("static partition")
    }

    /// The angle-tripling map: three branches of length 1/3.
    pub fn tripling() -> Self {
        let third = crate::rat(1, 3);
        Self::from_branch_lengths(&[third.clone(), third.clone(), third]).expect("static partition")
    }

    /// Number of branches (alphabet size of the coding).
    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    /// Longest branch length; cylinder diameters decay like powers of it.
    pub fn max_branch_length(&self) -> Rat {
        self.branches
            .iter()
            .map(Branch::length)
            .max()
            .expect("at least two branches")
    }

    /// Index of the branch whose domain contains `x in [0, 1)`.
    pub fn branch_index_exact(&self, x: &Rat) -> usize {
        debug_assert!(x >= &Rat::zero() && x < &Rat::one());
        // Last branch with left <= x.
        self.branches.partition_point(|b| &b.left <= x) - 1
    }

    /// Exact application of the map.
    pub fn apply_exact(&self, x: &Rat) -> Rat {
        let branch = &self.branches[self.branch_index_exact(x)];
        (x - &branch.left) / branch.length()
    }

    /// Branch index for a floating-point orbit point.
    #[inline]
    pub fn branch_index_f64(&self, x: f64) -> usize {
        // Branch counts are small; a linear scan beats binary search.
        let mut idx = 0;
        for (i, left) in self.lefts_f64.iter().enumerate().skip(1) {
            if x >= *left {
                idx = i;
            } else {
                break;
            }
        }
        idx
    }

    /// Floating-point application of the map, clamped back into `[0, 1)`
    /// when rounding lands exactly on 1.
    #[inline]
    pub fn apply_f64(&self, x: f64) -> f64 {
        let i = self.branch_index_f64(x);
        let y = (x - self.lefts_f64[i]) * self.slopes_f64[i];
        if y >= 1.0 {
            // Only reachable through rounding at the right edge of a branch.
            1.0 - f64::EPSILON
        } else if y < 0.0 {
            0.0
        } else {
            y
        }
    }

    /// Branch coding of the first `n` iterates: symbol `j` is the branch
    /// containing the `j`-th image of `x`.  The level-`n` cylinder of the
    /// returned word contains `x`.
    pub fn orbit_word_exact(&self, x: &Rat, n: usize) -> Vec<u8> {
        let mut word = Vec::with_capacity(n);
        let mut point = x.clone();
        for _ in 0..n {
            let idx = self.branch_index_exact(&point);
            word.push(idx as u8);
            point = (&point - &self.branches[idx].left) / self.branches[idx].length();
        }
        word
    }

    /// Exact preimage of a union: one affine pullback per branch.
    /// Preserves measure because every branch is onto.
    pub fn preimage(&self, u: &IntervalUnion) -> IntervalUnion {
        let mut out = IntervalUnion::empty();
        for branch in &self.branches {
            let len = branch.length();
            let pulled = u
                .pieces()
                .iter()
                .map(|(a, b)| (&branch.left + a * &len, &branch.left + b * &len));
            let piece = IntervalUnion::from_pieces(pulled).expect("pullback stays inside domain");
            out = out.union(&piece);
        }
        out
    }

    /// Exact forward image of a union.
    pub fn image(&self, u: &IntervalUnion) -> IntervalUnion {
        let mut out = IntervalUnion::empty();
        for branch in &self.branches {
            let dom = IntervalUnion::from_pieces([(branch.left.clone(), branch.right.clone())])
                .expect("branch domain is a valid interval");
            let clipped = u.intersect(&dom);
            if clipped.is_empty() {
                continue;
            }
            let len = branch.length();
            let pushed = clipped
                .pieces()
                .iter()
                .map(|(a, b)| ((a - &branch.left) / &len, (b - &branch.left) / &len));
            let piece = IntervalUnion::from_pieces(pushed).expect("image stays inside [0,1)");
            out = out.union(&piece);
        }
        out
    }

    /// Certified upper bound on the phi-mixing rate of the branch coding.
    ///
    /// For full-branch affine maps we take `phi(k) = 2 * eta^k` with `eta`
    /// the longest branch length — a conservative placeholder constant,
    /// certified exhaustively by the exact cylinder-correlation certificate
    /// in the `mixing` module rather than derived from general theory.
    pub fn phi_rate(&self) -> MixingRate {
        MixingRate::new(crate::rat(2, 1), self.max_branch_length())
            .expect("eta of a partition is in (0,1)")
    }

    /// Smallest cylinder level whose diameter bound `eta^k` is `<= r`.
    pub fn level_for_diameter(&self, r: &Rat) -> Result<u32> {
        if r <= &Rat::zero() {
            return Err(Error::InvalidParameter(format!(
                "diameter target must be positive, got {r}"
            )));
        }
        let eta = self.max_branch_length();
        let mut level = 0u32;
        let mut diam = Rat::one();
        while &diam > r {
            diam *= &eta;
            level += 1;
            if level > 4096 {
                return Err(Error::GuardExceeded {
                    detail: format!("cylinder level for diameter {r} exceeds guard"),
                    limit: 4096,
                });
            }
        }
        Ok(level)
    }
}

/// Exponential upper bound `phi(k) = C * eta^k` on the phi-mixing
/// coefficients of the branch coding, with geometric tail
/// `phi_tail(k) = sum_{j >= k} phi(j) = C * eta^k / (1 - eta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingRate {
    c: Rat,
    eta: Rat,
}

impl MixingRate {
    pub fn new(c: Rat, eta: Rat) -> Result<Self> {
        if c <= Rat::zero() {
            return Err(Error::InvalidParameter(format!("C must be positive, got {c}")));
        }
        if eta <= Rat::zero() || eta >= Rat::one() {
            return Err(Error::InvalidParameter(format!(
                "eta must lie in (0,1), got {eta}"
            )));
        }
        Ok(Self { c, eta })
    }

    pub fn c(&self) -> &Rat {
        &self.c
    }

    pub fn eta(&self) -> &Rat {
        &self.eta
    }

    /// Exact value of the bound at lag `k`.
    pub fn phi_exact(&self, k: u32) -> Rat {
        let mut pow = Rat::one();
        for _ in 0..k {
            pow *= &self.eta;
        }
        &self.c * pow
    }

    /// Exact geometric tail `sum_{j >= k} phi(j)`.
    pub fn phi_tail_exact(&self, k: u32) -> Rat {
        self.phi_exact(k) / (Rat::one() - &self.eta)
    }

    /// Floating-point value of the bound at lag `k`.
    pub fn phi(&self, k: u32) -> f64 {
        rat_to_f64(&self.phi_exact(k))
    }

    /// Floating-point tail value.
    pub fn phi_tail(&self, k: u32) -> f64 {
        rat_to_f64(&self.phi_tail_exact(k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat;

    #[test]
    fn doubling_map_applies_exactly() {
        let map = PiecewiseAffineMap::doubling();
        assert_eq!(map.apply_exact(&rat(3, 10)), rat(3, 5));
        assert_eq!(map.apply_exact(&rat(3, 4)), rat(1, 2));
        assert_eq!(map.apply_exact(&rat(0, 1)), rat(0, 1));
    }

    #[test]
    fn tripling_map_fixed_point_at_one_half() {
        let map = PiecewiseAffineMap::tripling();
        assert_eq!(map.apply_exact(&rat(1, 2)), rat(1, 2));
    }

    #[test]
    fn f64_application_matches_exact_on_dyadics() {
        let map = PiecewiseAffineMap::doubling();
        assert_eq!(map.apply_f64(0.3), 0.6);
        assert_eq!(map.apply_f64(0.75), 0.5);
        let y = map.apply_f64(0.999_999_999_999_999_9);
        assert!((0.0..1.0).contains(&y));
    }

    #[test]
    fn partition_must_sum_to_one() {
        let bad = PiecewiseAffineMap::from_branch_lengths(&[rat(1, 2), rat(1, 3)]);
        assert!(matches!(bad, Err(Error::InvalidPartition(_))));
        let good = PiecewiseAffineMap::from_branch_lengths(&[rat(1, 3), rat(2, 3)]);
        assert!(good.is_ok());
    }

    #[test]
    fn orbit_word_of_fixed_point_and_periodic_point() {
        let map = PiecewiseAffineMap::doubling();
        assert_eq!(map.orbit_word_exact(&rat(0, 1), 3), [0, 0, 0]);
        // 1/3 -> 2/3 -> 1/3: branch word alternates.
        assert_eq!(map.orbit_word_exact(&rat(1, 3), 4), [0, 1, 0, 1]);
        let ternary = PiecewiseAffineMap::tripling();
        assert_eq!(ternary.orbit_word_exact(&rat(1, 3), 2), [1, 0]);
    }

    #[test]
    fn preimage_of_half_circle_under_doubling() {
        let map = PiecewiseAffineMap::doubling();
        let u = IntervalUnion::from_pieces([(rat(0, 1), rat(1, 2))]).unwrap();
        let pre = map.preimage(&u);
        assert_eq!(
            pre.pieces(),
            &[(rat(0, 1), rat(1, 4)), (rat(1, 2), rat(3, 4))]
        );
        assert_eq!(map.preimage(&IntervalUnion::full()), IntervalUnion::full());
    }

    #[test]
    fn preimage_of_middle_third_under_tripling() {
        let map = PiecewiseAffineMap::tripling();
        let u = IntervalUnion::from_pieces([(rat(1, 3), rat(2, 3))]).unwrap();
        let pre = map.preimage(&u);
        assert_eq!(
            pre.pieces(),
            &[
                (rat(1, 9), rat(2, 9)),
                (rat(4, 9), rat(5, 9)),
                (rat(7, 9), rat(8, 9))
            ]
        );
    }

    #[test]
    fn preimage_preserves_measure() {
        let map = PiecewiseAffineMap::from_branch_lengths(&[rat(1, 3), rat(2, 3)]).unwrap();
        let u = IntervalUnion::from_pieces([(rat(1, 7), rat(3, 7)), (rat(5, 7), rat(6, 7))]).unwrap();
        assert_eq!(map.preimage(&u).measure(), u.measure());
    }

    #[test]
    fn image_of_a_small_interval_expands() {
        let map = PiecewiseAffineMap::doubling();
        let u = IntervalUnion::from_pieces([(rat(1, 4), rat(3, 8))]).unwrap();
        assert_eq!(map.image(&u).pieces(), &[(rat(1, 2), rat(3, 4))]);
        // Interval straddling the branch cut maps onto two pieces.
        let v = IntervalUnion::from_pieces([(rat(3, 8), rat(5, 8))]).unwrap();
        let img = map.image(&v);
        assert_eq!(
            img.pieces(),
            &[(rat(0, 1), rat(1, 4)), (rat(3, 4), rat(1, 1))]
        );
    }

    #[test]
    fn phi_rate_uses_longest_branch() {
        assert_eq!(PiecewiseAffineMap::doubling().phi_rate().eta(), &rat(1, 2));
        assert_eq!(PiecewiseAffineMap::tripling().phi_rate().eta(), &rat(1, 3));
        let skew = PiecewiseAffineMap::from_branch_lengths(&[rat(1, 3), rat(2, 3)]).unwrap();
        assert_eq!(skew.phi_rate().eta(), &rat(2, 3));
    }

    #[test]
    fn phi_tail_is_geometric_sum() {
        let rate = PiecewiseAffineMap::doubling().phi_rate();
        // phi(k) = 2 * 2^-k; tail at 3: 2 * (1/8) / (1/2) = 1/2.
        assert_eq!(rate.phi_exact(3), rat(1, 4));
        assert_eq!(rate.phi_tail_exact(3), rat(1, 2));
        assert!((rate.phi(6) - 2.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn diameter_levels() {
        let map = PiecewiseAffineMap::doubling();
        assert_eq!(map.level_for_diameter(&rat(1, 4)).unwrap(), 2);
        assert_eq!(map.level_for_diameter(&rat(1, 5)).unwrap(), 3);
        assert_eq!(map.level_for_diameter(&rat(1, 1)).unwrap(), 0);
    }
}
