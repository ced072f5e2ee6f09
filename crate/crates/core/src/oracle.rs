//! Exact small-horizon statistics via orbit refinement.
//!
//! The engine partitions a start region into maximal pieces on which the
//! first `w` iterates are all affine and on which membership of every
//! iterate in a target union is constant.  Each leaf piece carries its
//! exact length and the bitmask of times at which its orbit visits the
//! target, so any functional of the visit pattern integrates exactly.
//!
//! Costs grow like the number of branch cylinders meeting the start
//! region: exponential in the horizon for the full circle (guarded), but
//! only `O(mu(U) * m^w)` when conditioning on a small set `U`.

use alloc::vec;
use alloc::format;
use alloc::vec::Vec;

use num_traits::{One, Signed, Zero};

use crate::compound::{DiscretePmf, PmfMode};
use crate::interval::IntervalUnion;
use crate::map::PiecewiseAffineMap;
use crate::math::rat_to_f64;
use crate::{Error, Rat, Result};

/// Hard cap on observation times (visit patterns are stored in a `u32`).
pub const MAX_STEPS: usize = 32;

/// Default cap on refined leaf pieces, matching the `m^w <= 2^24` guard on
/// exact horizons.
pub const MAX_LEAVES: u64 = 1 << 24;

/// Spec guard on the horizon of unconditional exact distributions.
pub const MAX_EXACT_HORIZON: usize = 24;

/// An exact probability mass function on `{0, 1, 2, ...}` with an explicit
/// truncation deficit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactPmf {
    masses: Vec<Rat>,
    deficit: Rat,
}

impl ExactPmf {
    pub fn new(masses: Vec<Rat>, deficit: Rat) -> Self {
        Self { masses, deficit }
    }

    pub fn masses(&self) -> &[Rat] {
        &self.masses
    }

    pub fn mass(&self, k: usize) -> Rat {
        self.masses.get(k).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn deficit(&self) -> &Rat {
        &self.deficit
    }

    /// Mean of the truncated part.
    pub fn mean(&self) -> Rat {
        let mut total = Rat::zero();
        for (k, mass) in self.masses.iter().enumerate() {
            total += Rat::from_integer(k.into()) * mass;
        }
        total
    }

    /// Exact total-variation distance, treating the deficits as extra mass
    /// at unspecified large values.
    pub fn tv_distance(&self, other: &Self) -> Rat {
        let len = core::cmp::max(self.masses.len(), other.masses.len());
        let mut sum = Rat::zero();
        for k in 0..len {
            sum += (self.mass(k) - other.mass(k)).abs();
        }
        sum += (&self.deficit - &other.deficit).abs();
        sum / Rat::from_integer(2.into())
    }

    /// Floating-point view tagged as exact.
    pub fn to_discrete(&self) -> DiscretePmf {
        DiscretePmf::from_parts(
            self.masses.iter().map(rat_to_f64).collect(),
            rat_to_f64(&self.deficit),
            PmfMode::Exact,
            None,
        )
    }
}

/// One refined leaf: exact length of the piece, visit-time bitmask
/// (bit `t` set iff the time-`t` image lies in the target), and the exact
/// final image interval under the last observed iterate.
pub struct OrbitLeaf<'a> {
    pub length: &'a Rat,
    pub visits: u32,
    pub image: &'a (Rat, Rat),
}

/// Refines the orbit structure of `start` over observation times
/// `0..steps-1` and feeds every leaf to `visit`.
pub fn refine_orbit<F>(
    map: &PiecewiseAffineMap,
    start: &IntervalUnion,
    target: &IntervalUnion,
    steps: usize,
    max_leaves: u64,
    visit: &mut F,
) -> Result<()>
where
    F: FnMut(OrbitLeaf<'_>),
{
    if steps == 0 || steps > MAX_STEPS {
        return Err(Error::InvalidParameter(format!(
            "observation window must lie in 1..={MAX_STEPS}, got {steps}"
        )));
    }
    let mut leaves = 0u64;
    for (a, b) in start.pieces() {
        let dom = (a.clone(), b.clone());
        let img = dom.clone();
        descend(map, target, 0, steps, &dom, &img, 0, max_leaves, &mut leaves, visit)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn descend<F>(
    map: &PiecewiseAffineMap,
    target: &IntervalUnion,
    t: usize,
    steps: usize,
    dom: &(Rat, Rat),
    img: &(Rat, Rat),
    mask: u32,
    max_leaves: u64,
    leaves: &mut u64,
    visit: &mut F,
) -> Result<()>
where
    F: FnMut(OrbitLeaf<'_>),
{
    // Split the current image against the target so that membership at
    // time `t` is constant on each part.
    for (sub, inside) in split_against(target, &img.0, &img.1) {
        let mask = if inside { mask | (1 << t) } else { mask };
        let sub_dom = pull_back(dom, img, &sub);
        if t + 1 == steps {
            *leaves += 1;
            if *leaves > max_leaves {
                return Err(Error::GuardExceeded {
                    detail: format!(
                        "orbit refinement over {steps} steps needs more than {max_leaves} pieces"
                    ),
                    limit: max_leaves,
                });
            }
            let length = &sub_dom.1 - &sub_dom.0;
            visit(OrbitLeaf {
                length: &length,
                visits: mask,
                image: &sub,
            });
            continue;
        }
        // Advance one step: split by branch domains and apply each branch.
        for branch in map.branches() {
            let lo = core::cmp::max(&sub.0, branch.left()).clone();
            let hi = core::cmp::min(&sub.1, branch.right()).clone();
            if lo >= hi {
                continue;
            }
            let len = branch.length();
            let next_img = ((&lo - branch.left()) / &len, (&hi - branch.left()) / &len);
            let clip = (lo, hi);
            let next_dom = pull_back(dom, img, &clip);
            descend(
                map, target, t + 1, steps, &next_dom, &next_img, mask, max_leaves, leaves, visit,
            )?;
        }
    }
    Ok(())
}

/// Pulls a sub-interval of the image back through the affine chart
/// `dom -> img`.
fn pull_back(dom: &(Rat, Rat), img: &(Rat, Rat), sub: &(Rat, Rat)) -> (Rat, Rat) {
    let scale = (&dom.1 - &dom.0) / (&img.1 - &img.0);
    (
        &dom.0 + (&sub.0 - &img.0) * &scale,
        &dom.0 + (&sub.1 - &img.0) * &scale,
    )
}

/// Splits `[c, d)` into maximal sub-intervals on which membership in `u`
/// is constant, in left-to-right order.
fn split_against(u: &IntervalUnion, c: &Rat, d: &Rat) -> Vec<((Rat, Rat), bool)> {
    let mut out = Vec::new();
    let mut cursor = c.clone();
    for (a, b) in u.pieces() {
        if b <= &cursor {
            continue;
        }
        if a >= d {
            break;
        }
        if a > &cursor {
            let stop = core::cmp::min(a, d).clone();
            out.push(((cursor.clone(), stop.clone()), false));
            cursor = stop;
        }
        if &cursor >= d {
            break;
        }
        let stop = core::cmp::min(b, d).clone();
        out.push(((cursor.clone(), stop.clone()), true));
        cursor = stop;
    }
    if &cursor < d {
        out.push(((cursor, d.clone()), false));
    }
    out
}

/// Exact distribution of the number of target visits over the first `w`
/// iterates, starting from normalized length measure on the circle.
///
/// Masses are exact rationals summing to 1 (counts above `k_max` are
/// reported in the deficit).  Refuses horizons with `w > 24` or more than
/// `2^24` refined pieces.
pub fn exact_rare_event_pmf(
    map: &PiecewiseAffineMap,
    u: &IntervalUnion,
    w: usize,
    k_max: usize,
) -> Result<ExactPmf> {
    if w == 0 || w > MAX_EXACT_HORIZON {
        return Err(Error::GuardExceeded {
            detail: format!("exact horizon w = {w} outside 1..={MAX_EXACT_HORIZON}"),
            limit: MAX_EXACT_HORIZON as u64,
        });
    }
    let cap = core::cmp::min(w, k_max);
    let mut masses = vec![Rat::zero(); cap + 1];
    let mut deficit = Rat::zero();
    refine_orbit(map, &IntervalUnion::full(), u, w, MAX_LEAVES, &mut |leaf| {
        let count = leaf.visits.count_ones() as usize;
        if count <= cap {
            masses[count] += leaf.length;
        } else {
            deficit += leaf.length;
        }
    })?;
    Ok(ExactPmf::new(masses, deficit))
}

/// Exact conditional short-return statistics of a set of positive measure.
///
/// `tail[l-1]` is the conditional probability, starting in `u`, of at
/// least `l - 1` returns to `u` within time `k` (so `tail[0] = 1`), and
/// `level_sets[l-1][i]` the conditional probability that the `(l-1)`-th
/// return happens exactly at time `i`; rows sum to the corresponding tail
/// entry.
#[derive(Debug, Clone)]
pub struct ReturnProfile {
    pub window: usize,
    pub tail: Vec<Rat>,
    pub level_sets: Vec<Vec<Rat>>,
}

impl ReturnProfile {
    /// `1 - tail[1]`: the exact extremal index of the family at this window.
    pub fn extremal_index(&self) -> Rat {
        Rat::one() - &self.tail[1]
    }

    /// Tail entries as `f64`.
    pub fn tail_f64(&self) -> Vec<f64> {
        self.tail.iter().map(rat_to_f64).collect()
    }
}

/// Computes the exact return profile of `u` up to `ell_max` return levels
/// within a window of `k` steps.
pub fn return_profile(
    map: &PiecewiseAffineMap,
    u: &IntervalUnion,
    k: usize,
    ell_max: usize,
) -> Result<ReturnProfile> {
    if u.is_empty() {
        return Err(Error::EmptySet(format!(
            "return profile needs a set of positive measure"
        )));
    }
    if ell_max < 1 {
        return Err(Error::InvalidParameter(format!("ell_max must be >= 1")));
    }
    let steps = k + 1;
    let mu = u.measure();
    let mut tail_raw = vec![Rat::zero(); ell_max];
    let mut level_raw = vec![vec![Rat::zero(); k + 1]; ell_max];
    refine_orbit(map, u, u, steps, MAX_LEAVES, &mut |leaf| {
        // Bit 0 records the start in u; returns are bits 1..=k.
        let mut seen = 0usize;
        tail_raw[0] += leaf.length;
        level_raw[0][0] += leaf.length;
        for t in 1..=k {
            if leaf.visits >> t & 1 == 1 {
                seen += 1;
                if seen < ell_max {
                    tail_raw[seen] += leaf.length;
                    level_raw[seen][t] += leaf.length;
                }
            }
        }
    })?;
    let tail: Vec<Rat> = tail_raw.into_iter().map(|m| m / &mu).collect();
    let level_sets: Vec<Vec<Rat>> = level_raw
        .into_iter()
        .map(|row| row.into_iter().map(|m| m / &mu).collect())
        .collect();
    Ok(ReturnProfile {
        window: k,
        tail,
        level_sets,
    })
}

/// Exact unconditional probability of entering `u` within times `1..=k`.
pub fn entry_probability(map: &PiecewiseAffineMap, u: &IntervalUnion, k: usize) -> Result<Rat> {
    if k == 0 {
        return Ok(Rat::zero());
    }
    // Union of the first k preimages; component counts stay within the
    // same m^k budget as the refinement engine.
    let mut pre = u.clone();
    let mut hit = IntervalUnion::empty();
    for _ in 0..k {
        pre = map.preimage(&pre);
        hit = hit.union(&pre);
    }
    Ok(hit.measure())
}

/// Exact probability that blocks `0` and `j` of length `2k+1` both contain
/// a visit to `u`.
///
/// Block `i` covers times `i*(2k+1) ..= i*(2k+1) + 2k`.  The first block
/// is refined exactly; the remaining gap is integrated by conditioning on
/// the final image, which is exact because every refined piece maps
/// affinely onto its image.
pub fn joint_block_prob(
    map: &PiecewiseAffineMap,
    u: &IntervalUnion,
    k: usize,
    j: usize,
) -> Result<Rat> {
    let block = 2 * k + 1;
    if j == 0 {
        return Err(Error::InvalidParameter(format!(
            "block index must be >= 1, got 0"
        )));
    }
    if (j + 1) * block > MAX_EXACT_HORIZON {
        return Err(Error::GuardExceeded {
            detail: format!(
                "joint block horizon (j+1)(2k+1) = {} exceeds {MAX_EXACT_HORIZON}",
                (j + 1) * block
            ),
            limit: MAX_EXACT_HORIZON as u64,
        });
    }
    if u.is_empty() {
        return Ok(Rat::zero());
    }
    // Entry window for block j, expressed relative to the end of block 0:
    // relative times (j-1)*block + 1 ..= j*block.
    let mut pre = u.clone();
    let mut window = IntervalUnion::empty();
    for t in 1..=(j * block) {
        pre = map.preimage(&pre);
        if t > (j - 1) * block {
            window = window.union(&pre);
        }
    }
    let mut joint = Rat::zero();
    refine_orbit(map, &IntervalUnion::full(), u, block, MAX_LEAVES, &mut |leaf| {
        if leaf.visits == 0 {
            return;
        }
        let img_len = &leaf.image.1 - &leaf.image.0;
        let overlap = clip_measure(&window, leaf.image);
        joint += leaf.length * overlap / img_len;
    })?;
    Ok(joint)
}

fn clip_measure(u: &IntervalUnion, interval: &(Rat, Rat)) -> Rat {
    let mut total = Rat::zero();
    for (a, b) in u.pieces() {
        let lo = core::cmp::max(a, &interval.0);
        let hi = core::cmp::min(b, &interval.1);
        if lo < hi {
            total += hi - lo;
        }
    }
    total
}

/// Smallest `k in 1..=k_max` whose `k`-th preimage meets `u`, if any.
pub fn period(
    map: &PiecewiseAffineMap,
    u: &IntervalUnion,
    k_max: usize,
) -> Result<Option<usize>> {
    if u.is_empty() {
        return Err(Error::EmptySet(format!("period of the empty set is undefined")));
    }
    let mut forward = u.clone();
    for k in 1..=k_max {
        forward = map.image(&forward);
        if !forward.intersect(u).is_empty() {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

/// Smallest `k in 1..=k_max` whose `k`-th preimage meets `u` in positive
/// measure, if any.  Agrees with [`period`] on unions of nondegenerate
/// half-open intervals.
pub fn essential_period(
    map: &PiecewiseAffineMap,
    u: &IntervalUnion,
    k_max: usize,
) -> Result<Option<usize>> {
    if u.measure() <= Rat::zero() {
        return Err(Error::EmptySet(format!(
            "essential period needs a set of positive measure"
        )));
    }
    let mut forward = u.clone();
    for k in 1..=k_max {
        forward = map.image(&forward);
        if forward.intersect(u).measure() > Rat::zero() {
            return Ok(Some(k));
        }
    }
    Ok(None)
}
