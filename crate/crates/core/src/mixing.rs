//! Exhaustive certification of the mixing inequality at finite levels.
//!
//! For prefix level `n`, suffix level `j`, and gap `k`, the claim is
//! `|mu(A ∩ T^(-(n+k)) B) - mu(A) mu(B)| <= phi(k) mu(A)` for every `A`
//! in the algebra generated by level-`n` cylinders and every `B` in the
//! algebra generated by level-`j` cylinders.
//!
//! The quantifier over all unions reduces exactly to a per-atom check.
//! Write `d[a][b]` for the discrepancy of an atom pair and `S+(a)`,
//! `S-(a)` for the sums of its positive and negative parts over `b`.
//! For a fixed union `A`, the worst `B` collects exactly the positive
//! (or exactly the negative) terms of each of its atoms, so
//! `max(S+(a), S-(a)) <= phi(k) mu(a)` for every atom is sufficient;
//! taking `A` a single atom shows it is necessary.  All comparisons are
//! exact rational arithmetic.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::map::{MixingRate, PiecewiseAffineMap};
use crate::{Error, Rat, Result};

/// Cap on atoms per side, `m^level`.
pub const MAX_ATOMS: usize = 4096;

/// Cap on words enumerated by the brute-force table.
pub const MAX_BRUTE_WORDS: u64 = 1 << 22;

/// Outcome of one `(n, j, k)` certification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixingCertificate {
    pub prefix_level: usize,
    pub suffix_level: usize,
    pub gap: usize,
    /// Largest `|d[a][b]|` over atom pairs.
    pub max_discrepancy: Rat,
    /// Smallest `phi(k) mu(a) - max(S+(a), S-(a))` over prefix atoms;
    /// the inequality holds for all unions iff this is >= 0.
    pub worst_slack: Rat,
    pub holds: bool,
}

/// Exact cylinder measures at `level` in digit-radix order.
fn lengths_at_level(map: &PiecewiseAffineMap, level: usize) -> Result<Vec<Rat>> {
    let m = map.branch_count();
    if level == 0
        || m.checked_pow(level as u32)
            .map_or(true, |n| n > MAX_ATOMS)
    {
        return Err(Error::GuardExceeded {
            detail: format!("cylinder level {level} has too many atoms"),
            limit: MAX_ATOMS as u64,
        });
    }
    let weights: Vec<Rat> = map.branches().iter().map(|b| b.length()).collect();
    let mut lengths = vec![Rat::one()];
    for _ in 0..level {
        let mut next = Vec::with_capacity(lengths.len() * m);
        for len in &lengths {
            for w in &weights {
                next.push(len * w);
            }
        }
        lengths = next;
    }
    Ok(lengths)
}

/// Joint measures `M[a][b] = mu(cyl_a ∩ T^(-(n+k)) cyl_b)`.
///
/// The joint set decomposes over the `m^k` middle digit words, and since
/// the measure of a cylinder is the product of its branch lengths, the
/// triple sum factorizes by distributivity; the middle factor
/// `(sum of branch lengths)^k` is evaluated explicitly rather than
/// assumed to be 1.
pub fn joint_table(
    map: &PiecewiseAffineMap,
    prefix_level: usize,
    suffix_level: usize,
    gap: usize,
) -> Result<Vec<Vec<Rat>>> {
    let pre = lengths_at_level(map, prefix_level)?;
    let suf = lengths_at_level(map, suffix_level)?;
    let total: Rat = map.branches().iter().map(|b| b.length()).sum();
    let mut middle = Rat::one();
    for _ in 0..gap {
        middle *= &total;
    }
    Ok(pre
        .iter()
        .map(|a| suf.iter().map(|b| a * &middle * b).collect())
        .collect())
}

/// Brute-force twin of [`joint_table`]: enumerates every word of length
/// `n + k + j` and accumulates exact lengths, without using any product
/// structure.  Slow; intended for cross-checking.
pub fn joint_table_brute(
    map: &PiecewiseAffineMap,
    prefix_level: usize,
    suffix_level: usize,
    gap: usize,
) -> Result<Vec<Vec<Rat>>> {
    let m = map.branch_count();
    let depth = prefix_level + gap + suffix_level;
    let words = (m as u64).checked_pow(depth as u32);
    if prefix_level == 0 || suffix_level == 0 || words.map_or(true, |w| w > MAX_BRUTE_WORDS) {
        return Err(Error::GuardExceeded {
            detail: format!("brute-force table over {m}^{depth} words"),
            limit: MAX_BRUTE_WORDS,
        });
    }
    // Branch lengths as integer numerators over a common denominator, so
    // the depth-first walk runs in machine integers.
    let mut denom = BigInt::one();
    for b in map.branches() {
        denom = denom.lcm(b.length().denom());
    }
    let numerators: Vec<u128> = map
        .branches()
        .iter()
        .map(|b| {
            (b.length() * Rat::from_integer(denom.clone()))
                .to_integer()
                .to_u128()
                .ok_or_else(|| {
                    Error::ArithmeticOverflow(format!("branch numerator exceeds u128"))
                })
        })
        .collect::<Result<_>>()?;
    // Accumulated numerators are bounded by denom^depth; require that it
    // fits alongside per-path products.
    let full_denom = denom.pow(depth as u32);
    if full_denom >= BigInt::one() << 127 {
        return Err(Error::ArithmeticOverflow(format!(
            "common denominator to the power {depth} exceeds the integer range"
        )));
    }
    let n_pre = m.pow(prefix_level as u32);
    let n_suf = m.pow(suffix_level as u32);
    let mut acc = vec![vec![0u128; n_suf]; n_pre];
    let mut stack: Vec<(usize, u128, usize, usize)> = vec![(0, 1, 0, 0)];
    while let Some((t, num, pre_idx, roll_idx)) = stack.pop() {
        if t == depth {
            acc[pre_idx][roll_idx] += num;
            continue;
        }
        for (c, w) in numerators.iter().enumerate() {
            let num = num * w;
            let pre_idx = if t < prefix_level {
                pre_idx * m + c
            } else {
                pre_idx
            };
            let roll_idx = (roll_idx * m + c) % n_suf;
            stack.push((t + 1, num, pre_idx, roll_idx));
        }
    }
    let table = acc
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|num| Rat::new(BigInt::from(num), full_denom.clone()))
                .collect()
        })
        .collect();
    Ok(table)
}

fn certificate_from_table(
    map: &PiecewiseAffineMap,
    rate: &MixingRate,
    prefix_level: usize,
    suffix_level: usize,
    gap: usize,
    table: &[Vec<Rat>],
) -> Result<MixingCertificate> {
    let pre = lengths_at_level(map, prefix_level)?;
    let suf = lengths_at_level(map, suffix_level)?;
    let phi = rate.phi_exact(gap as u32);
    let mut max_discrepancy = Rat::zero();
    let mut worst_slack: Option<Rat> = None;
    for (a, mu_a) in pre.iter().enumerate() {
        let mut pos = Rat::zero();
        let mut neg = Rat::zero();
        for (b, mu_b) in suf.iter().enumerate() {
            let d = &table[a][b] - mu_a * mu_b;
            if d.abs() > max_discrepancy {
                max_discrepancy = d.abs();
            }
            if d > Rat::zero() {
                pos += d;
            } else {
                neg -= d;
            }
        }
        let spread = core::cmp::max(pos, neg);
        let slack = &phi * mu_a - spread;
        if worst_slack.as_ref().map_or(true, |w| &slack < w) {
            worst_slack = Some(slack);
        }
    }
    let worst_slack = worst_slack.expect("atom list is nonempty");
    Ok(MixingCertificate {
        prefix_level,
        suffix_level,
        gap,
        max_discrepancy,
        holds: worst_slack >= Rat::zero(),
        worst_slack,
    })
}

/// Certifies the mixing inequality for one `(n, j, k)` via the
/// factorized exact table.
pub fn certify(
    map: &PiecewiseAffineMap,
    rate: &MixingRate,
    prefix_level: usize,
    suffix_level: usize,
    gap: usize,
) -> Result<MixingCertificate> {
    let table = joint_table(map, prefix_level, suffix_level, gap)?;
    certificate_from_table(map, rate, prefix_level, suffix_level, gap, &table)
}

/// Certifies via full word enumeration; slow, for cross-checks.
pub fn certify_brute(
    map: &PiecewiseAffineMap,
    rate: &MixingRate,
    prefix_level: usize,
    suffix_level: usize,
    gap: usize,
) -> Result<MixingCertificate> {
    let table = joint_table_brute(map, prefix_level, suffix_level, gap)?;
    certificate_from_table(map, rate, prefix_level, suffix_level, gap, &table)
}

/// Certifies every combination with `n <= n_max`, `j <= j_max`,
/// `k <= k_max`.
pub fn certify_grid(
    map: &PiecewiseAffineMap,
    rate: &MixingRate,
    n_max: usize,
    j_max: usize,
    k_max: usize,
) -> Result<Vec<MixingCertificate>> {
    let mut out = Vec::new();
    for n in 1..=n_max {
        for j in 1..=j_max {
            for k in 0..=k_max {
                out.push(certify(map, rate, n, j, k)?);
            }
        }
    }
    Ok(out)
}
