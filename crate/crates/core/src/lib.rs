//! Exact and floating-point machinery for rare-event statistics of
//! piecewise-affine full-branch Markov maps of the circle.
//!
//! The crate is split along the exact/approximate line:
//!
//! * [`interval`], [`map`], [`cylinder`], [`oracle`], and [`mixing`] form the
//!   exact-rational layer: set algebra on finite unions of half-open
//!   intervals of the circle, branch-wise images and preimages, cylinder
//!   approximations, small-horizon entry-count distributions, and an
//!   exhaustive mixing-rate certificate.  Nothing in these modules touches
//!   floating point except on explicitly labelled export paths.
//! * [`compound`] and [`cluster`] compute compound Poisson / compound
//!   binomial laws and the cluster-size algebra in `f64` with compensated
//!   summation.
//! * [`target`] builds observables maximized on a null set, their superlevel
//!   sets, and exact threshold calibration.
//! * [`rng`] provides seedable, stream-indexed random number generators for
//!   reproducible parallel sampling (the sampling drivers live in the
//!   companion crate).
//!
//! The crate is `no_std` (with `alloc`); anything that needs files, threads,
//! or a CLI lives in the companion crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod cluster;
pub mod compound;
pub mod cylinder;
mod error;
pub mod interval;
pub mod map;
pub mod math;
pub mod mixing;
pub mod oracle;
pub mod rng;
pub mod target;
pub mod worddist;

pub use error::Error;

/// Exact rational scalar used for all symbolic computation.
pub type Rat = num_rational::BigRational;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Builds a rational from a numerator/denominator pair.
///
/// Convenience for tests and constant tables; panics on zero denominator.
pub fn rat(num: i64, den: i64) -> Rat {
    use num_bigint::BigInt;
    Rat::new(BigInt::from(num), BigInt::from(den))
}
