//! Cylinder sets of the branch coding.
//!
//! A level-`n` cylinder is the set of points whose first `n` branch symbols
//! spell a given word; for a full-branch affine map it is a half-open
//! interval whose length is the product of the branch lengths along the
//! word.  Unions of same-level cylinders approximate arbitrary interval
//! unions from inside and outside.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use num_traits::{One, Zero};

use crate::interval::IntervalUnion;
use crate::map::PiecewiseAffineMap;
use crate::{Error, Rat, Result};

/// Guard on the number of words an approximation may enumerate.
pub const MAX_WORDS: usize = 1 << 20;

/// A set of same-length words over the branch alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CylinderUnion {
    level: usize,
    words: BTreeSet<Vec<u8>>,
}

impl CylinderUnion {
    /// Builds a union from words, all of which must have length `level`.
    pub fn new<I>(level: usize, words: I) -> Result<Self>
    where
        I: IntoIterator<Item = Vec<u8>>,
    {
        let mut set = BTreeSet::new();
        for w in words {
            if w.len() != level {
                return Err(Error::InvalidParameter(format!(
                    "word of length {} in level-{level} cylinder union",
                    w.len()
                )));
            }
            set.insert(w);
        }
        Ok(Self { level, words: set })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn words(&self) -> impl Iterator<Item = &[u8]> {
        self.words.iter().map(Vec::as_slice)
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains_word(&self, word: &[u8]) -> bool {
        self.words.contains(word)
    }

    /// The union as an interval union.
    pub fn to_interval_union(&self, map: &PiecewiseAffineMap) -> Result<IntervalUnion> {
        let mut pieces = Vec::with_capacity(self.words.len());
        for word in &self.words {
            pieces.push(word_interval(map, word)?);
        }
        IntervalUnion::from_pieces(pieces)
    }

    /// Exact measure: sum of branch-length products over the words,
    /// computed from the cylinder intervals.
    pub fn measure(&self, map: &PiecewiseAffineMap) -> Result<Rat> {
        Ok(self.to_interval_union(map)?.measure())
    }
}

/// The half-open interval of points whose first symbols spell `word`.
pub fn word_interval(map: &PiecewiseAffineMap, word: &[u8]) -> Result<(Rat, Rat)> {
    let mut left = Rat::zero();
    let mut len = Rat::one();
    for &sym in word {
        let branch = map
            .branches()
            .get(sym as usize)
            .ok_or_else(|| Error::InvalidParameter(format!("symbol {sym} out of alphabet")))?;
        // Points continuing with `sym` occupy the sub-interval of the
        // current cylinder that the affine branch chart maps onto the
        // branch domain.
        left = &left + &len * branch.left();
        len *= branch.length();
    }
    let right = &left + &len;
    Ok((left, right))
}

/// All level-`level` cylinders entirely contained in `u` (inner
/// approximation).  The result is a subset of `u`.
pub fn inner_approximation(
    map: &PiecewiseAffineMap,
    u: &IntervalUnion,
    level: usize,
) -> Result<CylinderUnion> {
    collect_words(map, u, level, true)
}

/// All level-`level` cylinders meeting `u` (outer hull).  The result
/// contains `u`; if `u` is itself a union of level-`level` cylinders the
/// hull equals `u`.
pub fn outer_hull(
    map: &PiecewiseAffineMap,
    u: &IntervalUnion,
    level: usize,
) -> Result<CylinderUnion> {
    collect_words(map, u, level, false)
}

fn collect_words(
    map: &PiecewiseAffineMap,
    u: &IntervalUnion,
    level: usize,
    inner: bool,
) -> Result<CylinderUnion> {
    let mut words = Vec::new();
    let mut prefix = Vec::with_capacity(level);
    descend(
        map,
        u,
        level,
        inner,
        &Rat::zero(),
        &Rat::one(),
        &mut prefix,
        &mut words,
    )?;
    CylinderUnion::new(level, words)
}

#[allow(clippy::too_many_arguments)]
fn descend(
    map: &PiecewiseAffineMap,
    u: &IntervalUnion,
    level: usize,
    inner: bool,
    left: &Rat,
    len: &Rat,
    prefix: &mut Vec<u8>,
    out: &mut Vec<Vec<u8>>,
) -> Result<()> {
    let right = left + len;
    // Prune whole subtrees: descendants of a prefix cylinder are subsets
    // of it, so a prefix disjoint from `u` contributes nothing, and (for
    // the inner approximation only at full depth) a prefix inside `u`
    // contributes all of its descendants.
    let meets = u
        .pieces()
        .iter()
        .any(|(a, b)| core::cmp::max(a, left) < core::cmp::min(b, &right));
    if !meets {
        return Ok(());
    }
    if prefix.len() == level {
        if !inner || u.contains_interval(left, &right) {
            out.push(prefix.clone());
            if out.len() > MAX_WORDS {
                return Err(Error::GuardExceeded {
                    detail: format!("cylinder approximation at level {level} enumerates too many words"),
                    limit: MAX_WORDS as u64,
                });
            }
        }
        return Ok(());
    }
    for (sym, branch) in map.branches().iter().enumerate() {
        let child_left = left + len * branch.left();
        let child_len = len * branch.length();
        prefix.push(sym as u8);
        descend(map, u, level, inner, &child_left, &child_len, prefix, out)?;
        prefix.pop();
    }
    Ok(())
}
