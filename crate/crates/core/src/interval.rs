//! Exact set algebra on the circle `[0, 1)`.
//!
//! Every set is a finite union of half-open intervals `[a, b)` with exact
//! rational endpoints, stored sorted, pairwise disjoint, and with adjacent
//! pieces merged, so each set has a unique canonical representation and
//! structural equality is set equality.  Boundary points carry zero measure,
//! so the half-open convention never affects a computed quantity.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::{One, Signed, Zero};

use crate::{Error, Rat, Result};

/// A finite union of half-open rational intervals inside `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalUnion {
    pieces: Vec<(Rat, Rat)>,
}

impl IntervalUnion {
    /// The empty set.
    pub fn empty() -> Self {
        Self { pieces: Vec::new() }
    }

    /// The full circle `[0, 1)`.
    pub fn full() -> Self {
        Self {
            pieces: vec![(Rat::zero(), Rat::one())],
        }
    }

    /// Builds a union from arbitrary half-open pieces, which must satisfy
    /// `0 <= a < b <= 1`; overlapping and adjacent pieces are merged.
    pub fn from_pieces<I>(pieces: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Rat, Rat)>,
    {
        let mut raw: Vec<(Rat, Rat)> = Vec::new();
        for (a, b) in pieces {
            if a < Rat::zero() || b > Rat::one() {
                return Err(Error::InvalidInterval(format!(
                    "endpoints [{a}, {b}) outside [0, 1]"
                )));
            }
            if a >= b {
                return Err(Error::InvalidInterval(format!(
                    "empty or reversed interval [{a}, {b})"
                )));
            }
            raw.push((a, b));
        }
        Ok(Self::normalized(raw))
    }

    /// Builds the circle ball of the given radius around a center, reduced
    /// modulo 1; wraps into up to two pieces.  Radius `>= 1/2` gives the
    /// full circle, radius `<= 0` the empty set.
    pub fn ball(center: &Rat, radius: &Rat) -> Self {
        if radius <= &Rat::zero() {
            return Self::empty();
        }
        let half = Rat::new(1.into(), 2.into());
        if radius >= &half {
            return Self::full();
        }
        let c = reduce_mod_1(center);
        let lo = &c - radius;
        let hi = &c + radius;
        let mut raw = Vec::new();
        if lo < Rat::zero() {
            raw.push((Rat::zero(), hi));
            raw.push((lo + Rat::one(), Rat::one()));
        } else if hi > Rat::one() {
            raw.push((Rat::zero(), hi - Rat::one()));
            raw.push((lo, Rat::one()));
        } else {
            raw.push((lo, hi));
        }
        Self::normalized(raw)
    }

    fn normalized(mut raw: Vec<(Rat, Rat)>) -> Self {
        raw.retain(|(a, b)| a < b);
        raw.sort();
        let mut pieces: Vec<(Rat, Rat)> = Vec::with_capacity(raw.len());
        for (a, b) in raw {
            match pieces.last_mut() {
                Some(last) if a <= last.1 => {
                    if b > last.1 {
                        last.1 = b;
                    }
                }
                _ => pieces.push((a, b)),
            }
        }
        Self { pieces }
    }

    /// Sorted, disjoint, merged pieces.
    pub fn pieces(&self) -> &[(Rat, Rat)] {
        &self.pieces
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Number of maximal arcs on the circle.  A pair of pieces meeting at the
    /// seam (one ending at 1, the other starting at 0) forms a single arc.
    pub fn component_count(&self) -> usize {
        let n = self.pieces.len();
        if n >= 2
            && self.pieces[0].0.is_zero()
            && self.pieces[n - 1].1.is_one()
        {
            n - 1
        } else {
            n
        }
    }

    /// Exact Lebesgue measure.
    pub fn measure(&self) -> Rat {
        let mut total = Rat::zero();
        for (a, b) in &self.pieces {
            total += b - a;
        }
        total
    }

    /// Membership of a point (reduced modulo 1).
    pub fn contains(&self, x: &Rat) -> bool {
        let x = reduce_mod_1(x);
        // Last piece starting at or before x, if any.
        let idx = self.pieces.partition_point(|(a, _)| *a <= x);
        idx > 0 && x < self.pieces[idx - 1].1
    }

    /// Whether the interval `[a, b)` is entirely contained in this union.
    pub fn contains_interval(&self, a: &Rat, b: &Rat) -> bool {
        let idx = self.pieces.partition_point(|(pa, _)| pa <= a);
        idx > 0 && b <= &self.pieces[idx - 1].1
    }

    /// Whether `other` is a subset of `self`.
    pub fn contains_union(&self, other: &Self) -> bool {
        other
            .pieces
            .iter()
            .all(|(a, b)| self.contains_interval(a, b))
    }

    /// Set union.
    pub fn union(&self, other: &Self) -> Self {
        let mut raw = self.pieces.clone();
        raw.extend_from_slice(&other.pieces);
        Self::normalized(raw)
    }

    /// Set intersection.
    pub fn intersect(&self, other: &Self) -> Self {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.pieces.len() && j < other.pieces.len() {
            let (a1, b1) = &self.pieces[i];
            let (a2, b2) = &other.pieces[j];
            let lo = if a1 > a2 { a1 } else { a2 };
            let hi = if b1 < b2 { b1 } else { b2 };
            if lo < hi {
                out.push((lo.clone(), hi.clone()));
            }
            if b1 <= b2 {
                i += 1;
            } else {
                j += 1;
            }
        }
        // Pieces of an intersection of normalized unions are already
        // sorted and disjoint, but adjacent pieces may need merging.
        Self::normalized(out)
    }

    /// Complement within the circle.
    pub fn complement(&self) -> Self {
        let mut out = Vec::new();
        let mut cursor = Rat::zero();
        for (a, b) in &self.pieces {
            if &cursor < a {
                out.push((cursor.clone(), a.clone()));
            }
            cursor = b.clone();
        }
        if cursor < Rat::one() {
            out.push((cursor, Rat::one()));
        }
        Self { pieces: out }
    }

    /// Set difference `self \ other`.
    pub fn difference(&self, other: &Self) -> Self {
        self.intersect(&other.complement())
    }

    /// Symmetric difference.
    pub fn symmetric_difference(&self, other: &Self) -> Self {
        self.difference(other).union(&other.difference(self))
    }

    /// The open `r`-neighborhood in circle metric: every piece grows by `r`
    /// on both sides (half-open convention retained), then merges.
    pub fn grow(&self, r: &Rat) -> Self {
        if self.is_empty() || r <= &Rat::zero() {
            return self.clone();
        }
        let mut out = Self::empty();
        for (a, b) in &self.pieces {
            let lo = a - r;
            let hi = b + r;
            if &hi - &lo >= Rat::one() {
                return Self::full();
            }
            // Re-center as a ball to reuse the wrapping logic.
            let center = (&lo + &hi) / Rat::from_integer(2.into());
            let radius = (&hi - &lo) / Rat::from_integer(2.into());
            out = out.union(&Self::ball(&center, &radius));
        }
        out
    }

    /// The `r`-erosion: points at circle distance `> r` from the
    /// complement.  Pieces of length `<= 2r` vanish.
    pub fn shrink(&self, r: &Rat) -> Self {
        self.complement().grow(r).complement()
    }

    /// Measure gained by growing the set by `r`: `mu(B_r(U)) - mu(U)`.
    /// Nonnegative and nondecreasing in `r`.
    pub fn boundary_growth(&self, r: &Rat) -> Result<Rat> {
        if r <= &Rat::zero() {
            return Err(Error::InvalidParameter(format!(
                "boundary growth needs r > 0, got {r}"
            )));
        }
        Ok(self.grow(r).measure() - self.measure())
    }

    /// Inner and outer approximations at margin `r`:
    /// returns `(U_shrunk_by_r, U_grown_by_r)`.
    pub fn inner_outer(&self, r: &Rat) -> Result<(Self, Self)> {
        if r <= &Rat::zero() {
            return Err(Error::InvalidParameter(format!(
                "inner/outer margin must be positive, got {r}"
            )));
        }
        Ok((self.shrink(r), self.grow(r)))
    }

    /// Pieces as `f64` pairs for Monte Carlo membership tests.
    pub fn to_f64_pieces(&self) -> Vec<(f64, f64)> {
        self.pieces
            .iter()
            .map(|(a, b)| (crate::math::rat_to_f64(a), crate::math::rat_to_f64(b)))
            .collect()
    }
}

/// Reduces a rational to `[0, 1)` modulo 1.
pub fn reduce_mod_1(x: &Rat) -> Rat {
    let f = x.floor();
    let r = x - &f;
    if r.is_negative() {
        r + Rat::one()
    } else {
        r
    }
}
