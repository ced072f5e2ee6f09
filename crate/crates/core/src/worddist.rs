//! Exact visit statistics of cylinder unions over long horizons.
//!
//! Under a full-branch piecewise-affine map, the digit sequence of a
//! length-measure-distributed point is i.i.d. with `P(digit = c)` equal
//! to the length of branch `c` (the measure of a level-`n` cylinder is
//! the product of its branch lengths, which the interval arithmetic in
//! [`crate::cylinder`] verifies independently).  Membership of the orbit
//! in a level-`n` cylinder union at time `t` depends only on digits
//! `t..t+n-1`, so visit counts over any horizon reduce to a sliding
//! window of `n-1` digits — a Markov chain with `m^(n-1)` states whose
//! transition weights are exact rationals.
//!
//! This complements [`crate::oracle`]: the orbit-refinement engine
//! handles arbitrary interval targets at short horizons, while this
//! module handles cylinder targets at horizons far beyond the refinement
//! guard.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Zero;

use crate::cylinder::CylinderUnion;
use crate::map::PiecewiseAffineMap;
use crate::oracle::ExactPmf;
use crate::{Error, Rat, Result};

/// Cap on the number of sliding-window states `m^(n-1)`.
pub const MAX_STATES: usize = 1 << 16;

/// Cap on DP horizons (number of window observations).
pub const MAX_HORIZON: usize = 1 << 20;

/// Sliding-window chain for one cylinder union: per-state hit lookup and
/// exact transition weights.
struct WindowChain {
    m: usize,
    /// Number of `(n-1)`-digit states.
    states: usize,
    /// `member[state * m + digit]`: whether the level-`n` word formed by
    /// the state followed by `digit` lies in the union.
    member: Vec<bool>,
    /// Branch lengths, the digit law.
    weights: Vec<Rat>,
}

impl WindowChain {
    fn build(map: &PiecewiseAffineMap, target: &CylinderUnion) -> Result<Self> {
        let m = map.branch_count();
        let n = target.level();
        if n == 0 {
            return Err(Error::InvalidParameter(format!(
                "cylinder union must have level >= 1"
            )));
        }
        let states = m
            .checked_pow(n as u32 - 1)
            .filter(|s| *s <= MAX_STATES)
            .ok_or(Error::GuardExceeded {
                detail: format!("window chain needs {m}^{} states", n - 1),
                limit: MAX_STATES as u64,
            })?;
        let mut member = vec![false; states * m];
        let mut word = vec![0u8; n];
        for (idx, slot) in member.iter_mut().enumerate() {
            // Decode idx base m into the level-n word (state digits then
            // the incoming digit).
            let mut rest = idx;
            for d in word.iter_mut().rev() {
                *d = (rest % m) as u8;
                rest /= m;
            }
            *slot = target.contains_word(&word);
        }
        let weights = map.branches().iter().map(|b| b.length()).collect();
        Ok(Self {
            m,
            states,
            member,
            weights,
        })
    }

    /// Distribution of the first `n-1` digits (the initial window state).
    fn initial_states(&self) -> Vec<Rat> {
        let mut dist = vec![Rat::zero(); self.states];
        // Build up digit by digit; with zero digits all mass sits on the
        // single empty state.
        let mut filled = 1usize;
        dist[0] = Rat::from_integer(1.into());
        while filled < self.states {
            let mut next = vec![Rat::zero(); self.states];
            for (s, p) in dist.iter().take(filled).enumerate() {
                if p.is_zero() {
                    continue;
                }
                for (c, w) in self.weights.iter().enumerate() {
                    next[s * self.m + c] += p * w;
                }
            }
            filled *= self.m;
            dist = next;
        }
        dist
    }
}

/// Exact distribution of the number of visits to `target` over times
/// `0..horizon`, starting from length measure.  Counts above `count_cap`
/// are lumped into the deficit.
pub fn visit_count_pmf(
    map: &PiecewiseAffineMap,
    target: &CylinderUnion,
    horizon: usize,
    count_cap: usize,
) -> Result<ExactPmf> {
    if horizon == 0 || horizon > MAX_HORIZON {
        return Err(Error::InvalidParameter(format!(
            "horizon must lie in 1..={MAX_HORIZON}, got {horizon}"
        )));
    }
    let chain = WindowChain::build(map, target)?;
    let cap = core::cmp::min(count_cap, horizon);
    // dist[state][c]: probability of state with c visits so far; bucket
    // cap+1 collects overflow.
    let mut dist: Vec<Vec<Rat>> = chain
        .initial_states()
        .into_iter()
        .map(|p| {
            let mut row = vec![Rat::zero(); cap + 2];
            row[0] = p;
            row
        })
        .collect();
    for _ in 0..horizon {
        let mut next: Vec<Vec<Rat>> = vec![vec![Rat::zero(); cap + 2]; chain.states];
        for (s, row) in dist.iter().enumerate() {
            for (c, p) in row.iter().enumerate() {
                if p.is_zero() {
                    continue;
                }
                for (digit, w) in chain.weights.iter().enumerate() {
                    let hit = chain.member[s * chain.m + digit];
                    let s_next = (s * chain.m + digit) % chain.states;
                    let c_next = if hit {
                        core::cmp::min(c + 1, cap + 1)
                    } else {
                        c
                    };
                    next[s_next][c_next] += p * w;
                }
            }
        }
        dist = next;
    }
    let mut masses = vec![Rat::zero(); cap + 1];
    let mut deficit = Rat::zero();
    for row in dist {
        for (c, p) in row.into_iter().enumerate() {
            if c <= cap {
                masses[c] += p;
            } else {
                deficit += p;
            }
        }
    }
    Ok(ExactPmf::new(masses, deficit))
}

/// Exact conditional return tails over long windows: entry `i` is the
/// probability that a length-measure point starting inside `target` makes
/// at least `i` returns within `window` steps.  Entry `0` is always 1, so
/// the vector has length `ell_max` and mirrors
/// [`crate::oracle::ReturnProfile::tail`], but is valid far beyond the
/// refinement guard.
pub fn return_tail_dp(
    map: &PiecewiseAffineMap,
    target: &CylinderUnion,
    window: usize,
    ell_max: usize,
) -> Result<Vec<Rat>> {
    if ell_max == 0 {
        return Err(Error::InvalidParameter(format!(
            "ell_max must be >= 1, got 0"
        )));
    }
    if window > MAX_HORIZON {
        return Err(Error::InvalidParameter(format!(
            "window {window} exceeds {MAX_HORIZON}"
        )));
    }
    let chain = WindowChain::build(map, target)?;
    let cap = ell_max - 1;
    // Condition on a visit at time 0: seed each member word with its
    // cylinder measure; the chain state after time 0 is the word's suffix.
    let mut start_mass = Rat::zero();
    let mut dist: Vec<Vec<Rat>> = vec![vec![Rat::zero(); cap + 1]; chain.states];
    for idx in 0..chain.states * chain.m {
        if !chain.member[idx] {
            continue;
        }
        let mut weight = Rat::from_integer(1.into());
        let mut rest = idx;
        let n = target.level();
        let mut digits = vec![0usize; n];
        for d in digits.iter_mut().rev() {
            *d = rest % chain.m;
            rest /= chain.m;
        }
        for &d in &digits {
            weight *= &chain.weights[d];
        }
        start_mass += &weight;
        dist[idx % chain.states][0] += weight;
    }
    if start_mass.is_zero() {
        return Err(Error::EmptySet(format!(
            "cylinder union has measure zero"
        )));
    }
    for _ in 0..window {
        let mut next: Vec<Vec<Rat>> = vec![vec![Rat::zero(); cap + 1]; chain.states];
        for (s, row) in dist.iter().enumerate() {
            for (c, p) in row.iter().enumerate() {
                if p.is_zero() {
                    continue;
                }
                for (digit, w) in chain.weights.iter().enumerate() {
                    let hit = chain.member[s * chain.m + digit];
                    let s_next = (s * chain.m + digit) % chain.states;
                    let c_next = if hit { core::cmp::min(c + 1, cap) } else { c };
                    next[s_next][c_next] += p * w;
                }
            }
        }
        dist = next;
    }
    // tails[i] = P(count >= i | start in target).
    let mut by_count = vec![Rat::zero(); cap + 1];
    for row in dist {
        for (c, p) in row.into_iter().enumerate() {
            by_count[c] += p;
        }
    }
    let mut tails = vec![Rat::zero(); ell_max];
    let mut acc = Rat::zero();
    for i in (0..ell_max).rev() {
        acc += &by_count[i];
        tails[i] = &acc / &start_mass;
    }
    Ok(tails)
}

/// Exact probability that the windows `i (2k+1) ..= i (2k+1) + 2k` for
/// `i = 0` and `i = j` both contain a visit to `target`.
///
/// Same quantity as [`crate::oracle::joint_block_prob`] but for cylinder
/// targets, valid far beyond the refinement guard.
pub fn joint_block_hit(
    map: &PiecewiseAffineMap,
    target: &CylinderUnion,
    k: usize,
    j: usize,
) -> Result<Rat> {
    if j == 0 {
        return Err(Error::InvalidParameter(format!(
            "block index must be >= 1, got 0"
        )));
    }
    let block = 2 * k + 1;
    let horizon = (j + 1) * block;
    if horizon > MAX_HORIZON {
        return Err(Error::InvalidParameter(format!(
            "joint block horizon {horizon} exceeds {MAX_HORIZON}"
        )));
    }
    let chain = WindowChain::build(map, target)?;
    // dist[state][hit0][hitj]
    let mut dist: Vec<[[Rat; 2]; 2]> = chain
        .initial_states()
        .into_iter()
        .map(|p| {
            let mut cell = [[Rat::zero(), Rat::zero()], [Rat::zero(), Rat::zero()]];
            cell[0][0] = p;
            cell
        })
        .collect();
    let late_start = j * block;
    for t in 0..horizon {
        let in_first = t < block;
        let in_late = t >= late_start;
        let mut next: Vec<[[Rat; 2]; 2]> =
            vec![
                [[Rat::zero(), Rat::zero()], [Rat::zero(), Rat::zero()]];
                chain.states
            ];
        for (s, cell) in dist.iter().enumerate() {
            for h0 in 0..2 {
                for hj in 0..2 {
                    let p = &cell[h0][hj];
                    if p.is_zero() {
                        continue;
                    }
                    for (digit, w) in chain.weights.iter().enumerate() {
                        let hit = chain.member[s * chain.m + digit];
                        let s_next = (s * chain.m + digit) % chain.states;
                        let h0n = if hit && in_first { 1 } else { h0 };
                        let hjn = if hit && in_late { 1 } else { hj };
                        next[s_next][h0n][hjn] += p * w;
                    }
                }
            }
        }
        dist = next;
    }
    let mut joint = Rat::zero();
    for cell in dist {
        joint += &cell[1][1];
    }
    Ok(joint)
}
