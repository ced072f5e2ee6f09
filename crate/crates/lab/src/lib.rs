//! Monte-Carlo laboratory for rare-event statistics of piecewise-affine
//! expanding circle maps, built on the exact layer in `rarelab-core`.
//!
//! The core crate supplies exact rational maps, target calibration, and
//! small-scale exact distributions; this crate adds exact-arithmetic orbit
//! sampling, the estimator battery with confidence intervals, the
//! verification checks comparing sampled laws against predictions and
//! finite-scale bounds, and the command-line front end with reproducible
//! CSV/JSON reports.

pub mod config;
pub mod estimators;
pub mod report;
pub mod sampling;
pub mod verify;
