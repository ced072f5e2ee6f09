//! Exact symbolic orbit sampling.
//!
//! Iterating a piecewise-affine expanding map in `f64` collapses onto the
//! fixed point of the rounding lattice within ~53 steps (for the binary
//! map every double is a dyadic rational, so the orbit reaches 0 exactly),
//! which destroys precisely the rare-event statistics this crate
//! estimates.  Orbits are therefore simulated on the symbolic side: under
//! a full-branch map with branch lengths `p_c`, a length-measure point has
//! i.i.d. digits with `P(digit = c) = p_c`, and the orbit position after
//! `t` steps is determined by digits `t+1, t+2, ...`.  The sampler keeps a
//! sliding window of the next `g` digits as an integer `V < m^g` — the
//! point's position under the order-preserving conjugacy `h` that sends
//! the map to the uniform base-`m` shift.  Membership of the current
//! point in `[a, b)` is the integer test
//! `ceil(h(a) m^g) <= V < ceil(h(b) m^g)`, where the thresholds are
//! computed exactly by running the branch expansion of each endpoint
//! (for uniform branch lengths `h` is the identity).
//!
//! The test is exact whenever the endpoints' branch expansions terminate
//! within `g` digits (every shipped preset).  Otherwise only points whose
//! first `g` digits all agree with an endpoint can be misclassified, an
//! event of probability at most `2^-100` per step, far below `2^-60` over
//! every orbit of every run here.
//!
//! Digits are drawn exactly: a uniform integer below the common
//! denominator of the branch lengths selects the digit through the
//! cumulative numerators.  Conditional starts (uniform inside a set `U`)
//! use exact inverse-CDF over the pieces of `U` — a uniform integer picks
//! the piece through the exact cumulative lengths, and the position inside
//! the piece is drawn exactly; sets of measure `2^-14` and below cost the
//! same as the full circle, where acceptance-rejection against `U` would
//! be hopeless.

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};

use rarelab_core::interval::IntervalUnion;
use rarelab_core::map::PiecewiseAffineMap;
use rarelab_core::rng::RngStream;
use rarelab_core::{Error, Rat, Result};

/// Number of low bits of the stream id reserved for batch indices.
pub const BATCH_BITS: u32 = 24;

/// Samples per parallel batch.  Batches own disjoint RNG streams and are
/// merged in index order, so results are independent of the worker count.
pub const BATCH_SIZE: u64 = 4096;

/// Exact uniform integer in `[0, n)` by rejection on the top range of
/// `u64`; the rejection region is shorter than `n`, so the loop almost
/// never iterates.
fn uniform_u64_below(rng: &mut RngStream, n: u64) -> u64 {
    debug_assert!(n > 0);
    let zone = u64::MAX - u64::MAX.wrapping_rem(n);
    loop {
        let r = rng.next_u64();
        if r < zone || zone == 0 {
            return r % n;
        }
    }
}

/// Exact uniform integer in `[0, n)` over the full 128-bit range.
fn uniform_u128_below(rng: &mut RngStream, n: u128) -> u128 {
    debug_assert!(n > 0);
    let zone = u128::MAX - u128::MAX.wrapping_rem(n);
    loop {
        let r = ((rng.next_u64() as u128) << 64) | rng.next_u64() as u128;
        if r < zone || zone == 0 {
            return r % n;
        }
    }
}

/// `ceil(x * scale)` for a nonnegative rational and integer scale.
fn ceil_scaled(x: &Rat, scale: &BigInt) -> Result<u128> {
    let num = x.numer() * scale;
    let den = x.denom();
    let q = (&num + (den - BigInt::one())) / den;
    q.to_u128().ok_or_else(|| Error::GuardExceeded {
        detail: format!("scaled endpoint {q} exceeds the 128-bit window"),
        limit: u64::MAX,
    })
}

/// A target set converted to window-integer ranges.
#[derive(Debug, Clone)]
pub struct ScaledSet {
    ranges: Vec<(u128, u128)>,
}

impl ScaledSet {
    /// Membership of the point whose upcoming digits are `window`.
    #[inline]
    pub fn contains(&self, window: u128) -> bool {
        // Presets have one or two arcs; a linear scan with early exit
        // beats binary search at these sizes.
        for (lo, hi) in &self.ranges {
            if window < *lo {
                return false;
            }
            if window < *hi {
                return true;
            }
        }
        false
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }
}

/// How to draw an exact uniform start inside one piece of a set.
#[derive(Debug, Clone)]
enum PieceDraw {
    /// The piece is `m`-adic: window `= base + uniform(span)` is exactly
    /// uniform, and later digits are unconditionally i.i.d.
    MAdic { base: u128, span: u128 },
    /// General rational piece: digits are generated one at a time from
    /// the exact conditional law; the constraint interval shrinks to the
    /// full circle after finitely many digits almost surely.
    Refine { lo: Rat, hi: Rat },
}

/// Exact inverse-CDF tables for uniform sampling inside a set.
#[derive(Debug, Clone)]
pub struct ConditionalStart {
    /// Cumulative piece lengths scaled to a common denominator.
    cumulative: Vec<u128>,
    total: u128,
    draws: Vec<PieceDraw>,
}

/// Exact digit-stream sampler for one map.
#[derive(Debug, Clone)]
pub struct SymbolicSampler {
    m: u32,
    /// Window length in digits.
    digits: u32,
    /// `m^digits`.
    pow_top: BigInt,
    /// `m^(digits-1)` as `u128`, for the general window update.
    pow_keep: u128,
    /// Binary fast path: `window = ((window << 1) | bit) & mask`.
    mask: u128,
    /// Digit law: cumulative numerators over `digit_den`.
    digit_cum: Vec<u64>,
    digit_den: u64,
    /// When the digit law is uniform over a power-of-two alphabet, digits
    /// come straight off a bit buffer.
    uniform_bits: Option<u32>,
    /// All branches have length `1/m`, i.e. the digit coordinate equals
    /// the circle coordinate.
    uniform_lengths: bool,
    branch_lows: Vec<Rat>,
    branch_lengths: Vec<Rat>,
}

impl SymbolicSampler {
    pub fn new(map: &PiecewiseAffineMap) -> Result<Self> {
        let m = map.branch_count() as u32;
        // Largest window with m^digits <= 2^120, so the update arithmetic
        // stays comfortably inside u128.
        let mut digits = 0u32;
        let mut pow: u128 = 1;
        while pow <= (1u128 << 120) / m as u128 {
            pow *= m as u128;
            digits += 1;
        }
        let pow_keep = pow / m as u128;
        // Exact digit law over the least common denominator.
        let mut den: BigInt = BigInt::one();
        for b in map.branches() {
            den = num_integer::lcm(den, b.length().denom().clone());
        }
        let digit_den = den.to_u64().ok_or_else(|| Error::GuardExceeded {
            detail: format!("branch-length common denominator {den} exceeds u64"),
            limit: u64::MAX,
        })?;
        let mut digit_cum = Vec::with_capacity(map.branch_count() + 1);
        let mut acc: u64 = 0;
        digit_cum.push(0);
        for b in map.branches() {
            let len = b.length();
            let num = (len.numer() * &den / len.denom()).to_u64().unwrap();
            acc += num;
            digit_cum.push(acc);
        }
        debug_assert_eq!(acc, digit_den);
        let uniform = digit_cum
            .windows(2)
            .all(|w| w[1] - w[0] == digit_den / m as u64);
        let uniform_bits = if uniform && (m as u64).is_power_of_two() && digit_den == m as u64 {
            Some((m as u64).trailing_zeros())
        } else {
            None
        };
        Ok(Self {
            m,
            digits,
            pow_top: BigInt::from(pow),
            pow_keep,
            mask: pow - 1,
            digit_cum,
            digit_den,
            uniform_bits,
            uniform_lengths: uniform,
            branch_lows: map.branches().iter().map(|b| b.left().clone()).collect(),
            branch_lengths: map.branches().iter().map(|b| b.length()).collect(),
        })
    }

    /// `ceil(h(x) * m^digits)` where `h` is the conjugacy to the uniform
    /// base-`m` shift: the branch expansion of `x` read as a base-`m`
    /// number, rounded up when a nonzero tail remains.
    fn conjugated_threshold(&self, x: &Rat) -> Result<u128> {
        if x >= &Rat::one() {
            return Ok(self.mask + 1);
        }
        if self.uniform_lengths {
            // h is the identity.
            return ceil_scaled(x, &self.pow_top);
        }
        let mut v: u128 = 0;
        let mut rem = x.clone();
        for _ in 0..self.digits {
            let d = self
                .branch_lows
                .partition_point(|low| low <= &rem)
                .saturating_sub(1);
            v = v * u128::from(self.m) + d as u128;
            rem = (rem - &self.branch_lows[d]) / &self.branch_lengths[d];
        }
        Ok(v + u128::from(!rem.is_zero()))
    }

    pub fn window_digits(&self) -> u32 {
        self.digits
    }

    /// Converts a set to window-integer ranges for membership tests.
    pub fn scale_set(&self, set: &IntervalUnion) -> Result<ScaledSet> {
        let mut ranges = Vec::with_capacity(set.pieces().len());
        for (a, b) in set.pieces() {
            let lo = self.conjugated_threshold(a)?;
            let hi = self.conjugated_threshold(b)?;
            if lo < hi {
                ranges.push((lo, hi));
            }
        }
        Ok(ScaledSet { ranges })
    }

    /// Builds the exact inverse-CDF tables for uniform starts inside `set`.
    pub fn conditional_start(&self, set: &IntervalUnion) -> Result<ConditionalStart> {
        if set.is_empty() {
            return Err(Error::EmptySet(format!(
                "cannot sample uniformly inside an empty set"
            )));
        }
        let mut den: BigInt = BigInt::one();
        for (a, b) in set.pieces() {
            den = num_integer::lcm(den, a.denom().clone());
            den = num_integer::lcm(den, b.denom().clone());
        }
        let mut cumulative = Vec::with_capacity(set.pieces().len());
        let mut draws = Vec::with_capacity(set.pieces().len());
        let mut acc: u128 = 0;
        for (a, b) in set.pieces() {
            let len = ((b - a) * Rat::from_integer(den.clone()))
                .to_integer()
                .to_u128()
                .ok_or_else(|| Error::GuardExceeded {
                    detail: format!("piece length numerator exceeds u128"),
                    limit: u64::MAX,
                })?;
            acc = acc.checked_add(len).ok_or_else(|| Error::GuardExceeded {
                detail: format!("cumulative piece length exceeds u128"),
                limit: u64::MAX,
            })?;
            cumulative.push(acc);
            // m-adic piece of a uniform-length map: both a*m^g and
            // (b-a)*m^g integral, and window integers are uniform in the
            // circle coordinate.  Non-uniform maps always refine.
            let base_num = a.numer() * &self.pow_top;
            let span_num = (b - a).numer() * &self.pow_top;
            let draw = if self.uniform_lengths
                && (&base_num % a.denom()).is_zero()
                && (&span_num % (b - a).denom()).is_zero()
            {
                PieceDraw::MAdic {
                    base: (base_num / a.denom()).to_u128().ok_or_else(|| {
                        Error::GuardExceeded {
                            detail: format!("scaled piece base exceeds u128"),
                            limit: u64::MAX,
                        }
                    })?,
                    span: (span_num / (b - a).denom()).to_u128().ok_or_else(|| {
                        Error::GuardExceeded {
                            detail: format!("scaled piece span exceeds u128"),
                            limit: u64::MAX,
                        }
                    })?,
                }
            } else {
                PieceDraw::Refine {
                    lo: a.clone(),
                    hi: b.clone(),
                }
            };
            draws.push(draw);
        }
        Ok(ConditionalStart {
            cumulative,
            total: acc,
            draws,
        })
    }

    /// Starts an orbit from the invariant (length) measure, consuming
    /// randomness from `rng`.
    pub fn orbit_uniform<'a>(&'a self, rng: &'a mut RngStream) -> Orbit<'a> {
        let mut orbit = Orbit {
            sampler: self,
            rng,
            bits: 0,
            nbits: 0,
            window: 0,
            constraint: None,
        };
        for _ in 0..self.digits {
            let d = orbit.next_digit();
            orbit.push(d);
        }
        orbit
    }

    /// Starts an orbit exactly uniformly distributed inside the set the
    /// tables were built from.
    pub fn orbit_in<'a>(&'a self, start: &ConditionalStart, rng: &'a mut RngStream) -> Orbit<'a> {
        let mut orbit = Orbit {
            sampler: self,
            rng,
            bits: 0,
            nbits: 0,
            window: 0,
            constraint: None,
        };
        let pick = uniform_u128_below(orbit.rng, start.total);
        let idx = start.cumulative.partition_point(|c| *c <= pick);
        match &start.draws[idx] {
            PieceDraw::MAdic { base, span } => {
                orbit.window = base + uniform_u128_below(orbit.rng, *span);
            }
            PieceDraw::Refine { lo, hi } => {
                orbit.constraint = Some((lo.clone(), hi.clone()));
                for _ in 0..self.digits {
                    let d = orbit.next_digit();
                    orbit.push(d);
                }
            }
        }
        orbit
    }
}

/// One running orbit: the digit window plus the RNG feeding it.
pub struct Orbit<'a> {
    sampler: &'a SymbolicSampler,
    rng: &'a mut RngStream,
    bits: u64,
    nbits: u32,
    window: u128,
    /// Exact conditional constraint left over from a non-`m`-adic start;
    /// cleared once the constraint interval reaches the full circle.
    constraint: Option<(Rat, Rat)>,
}

impl<'a> Orbit<'a> {
    /// The integer encoding the next `g` digits; the current point lies in
    /// `[window m^-g, (window + 1) m^-g)`.
    #[inline]
    pub fn window(&self) -> u128 {
        self.window
    }

    #[inline]
    pub fn is_in(&self, set: &ScaledSet) -> bool {
        set.contains(self.window)
    }

    /// Advances the orbit one step of the map.
    #[inline]
    pub fn step(&mut self) {
        let d = self.next_digit();
        self.push(d);
    }

    #[inline]
    fn push(&mut self, digit: u32) {
        let s = self.sampler;
        if s.m == 2 {
            self.window = ((self.window << 1) | digit as u128) & s.mask;
        } else {
            self.window = (self.window % s.pow_keep) * s.m as u128 + digit as u128;
        }
    }

    #[inline]
    fn next_digit(&mut self) -> u32 {
        if self.constraint.is_some() {
            return self.constrained_digit();
        }
        let s = self.sampler;
        if let Some(bits_per) = s.uniform_bits {
            if self.nbits < bits_per {
                self.bits = self.rng.next_u64();
                self.nbits = 64;
            }
            self.nbits -= bits_per;
            return ((self.bits >> self.nbits) & ((1 << bits_per) - 1)) as u32;
        }
        let v = uniform_u64_below(self.rng, s.digit_den);
        (s.digit_cum.partition_point(|c| *c <= v) - 1) as u32
    }

    /// Exact conditional digit for a start uniform on a non-`m`-adic
    /// interval: the digit law is the overlap of the constraint with each
    /// branch, drawn through a uniform integer over the exact common
    /// denominator; the constraint is then rescaled through the branch.
    fn constrained_digit(&mut self) -> u32 {
        let (lo, hi) = self.constraint.clone().unwrap();
        let s = self.sampler;
        let mut den: BigInt = BigInt::one();
        let mut overlaps: Vec<(u32, Rat)> = Vec::new();
        for c in 0..s.m {
            let b_lo = &s.branch_lows[c as usize];
            let b_hi = if (c as usize) + 1 < s.branch_lows.len() {
                s.branch_lows[c as usize + 1].clone()
            } else {
                Rat::one()
            };
            let o_lo = if &lo > b_lo { lo.clone() } else { b_lo.clone() };
            let o_hi = if hi < b_hi { hi.clone() } else { b_hi };
            if o_lo < o_hi {
                let len = &o_hi - &o_lo;
                den = num_integer::lcm(den, len.denom().clone());
                overlaps.push((c, len));
            }
        }
        // Draw the digit by exact cumulative numerators.
        let nums: Vec<BigInt> = overlaps
            .iter()
            .map(|(_, len)| len.numer() * &den / len.denom())
            .collect();
        let total: BigInt = nums.iter().sum();
        let total_u = total.to_u128().expect("constraint denominators stay small");
        let pick = uniform_u128_below(self.rng, total_u);
        let mut acc: u128 = 0;
        let mut chosen = overlaps[overlaps.len() - 1].0;
        for ((c, _), num) in overlaps.iter().zip(&nums) {
            acc += num.to_u128().unwrap();
            if pick < acc {
                chosen = *c;
                break;
            }
        }
        // Rescale the constraint through the chosen branch.
        let b_lo = &s.branch_lows[chosen as usize];
        let b_hi = if (chosen as usize) + 1 < s.branch_lows.len() {
            s.branch_lows[chosen as usize + 1].clone()
        } else {
            Rat::one()
        };
        let o_lo = if &lo > b_lo { lo.clone() } else { b_lo.clone() };
        let o_hi = if hi < b_hi { hi } else { b_hi };
        let p = &s.branch_lengths[chosen as usize];
        let new_lo = (&o_lo - b_lo) / p;
        let new_hi = (&o_hi - b_lo) / p;
        if new_lo.is_zero() && new_hi.is_one() {
            self.constraint = None;
        } else {
            self.constraint = Some((new_lo, new_hi));
        }
        chosen
    }
}

/// Deterministic batched parallel tally.
///
/// The sample space is cut into fixed batches of [`BATCH_SIZE`]; batch `i`
/// owns the RNG stream `(domain << BATCH_BITS) | i`, workers process whole
/// batches, and partial tallies merge in batch order.  The result is
/// byte-identical for every worker count, including 1.
pub fn parallel_tally<T, F>(samples: u64, seed: u64, domain: u64, worker: F) -> T
where
    T: Default + Send,
    F: Fn(RngStream, u64, &mut T) + Sync,
    T: Merge,
{
    use rayon::prelude::*;
    let batches = samples.div_ceil(BATCH_SIZE);
    assert!(
        batches < (1 << BATCH_BITS),
        "sample budget needs more batches than the stream layout allows"
    );
    let parts: Vec<T> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut tally = T::default();
            let count = BATCH_SIZE.min(samples - b * BATCH_SIZE);
            let rng = RngStream::new(seed, (domain << BATCH_BITS) | b);
            worker(rng, count, &mut tally);
            tally
        })
        .collect();
    let mut out = T::default();
    for part in parts {
        out.merge(part);
    }
    out
}

/// Associative merge of partial tallies.
pub trait Merge {
    fn merge(&mut self, other: Self);
}
