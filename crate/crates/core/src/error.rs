use alloc::string::String;
use core::fmt;

/// Errors raised by the exact layer and the distribution builders.
#[derive(Debug, Clone, PartialEq, Eq)]
#[non_exhaustive]
pub enum Error {
    /// Branch lengths do not form a partition of the circle.
    InvalidPartition(String),
    /// An interval or union violates the half-open-in-`[0,1)` convention.
    InvalidInterval(String),
    /// A cluster-size distribution is not a probability vector.
    InvalidCluster(String),
    /// A scalar parameter is outside its admissible range.
    InvalidParameter(String),
    /// An exact computation was refused because its state space would
    /// exceed the configured guard.
    GuardExceeded { detail: String, limit: u64 },
    /// Threshold calibration cannot reach the requested measure.
    CalibrationUnreachable(String),
    /// A point declared periodic is not, or has a shorter period.
    NotPeriodic(String),
    /// Fixed-width exact arithmetic overflowed; the map's denominators are
    /// too large for the fast certificate path.
    ArithmeticOverflow(String),
    /// An operation requires a set of positive measure.
    EmptySet(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidPartition(s) => write!(f, "invalid branch partition: {s}"),
            Error::InvalidInterval(s) => write!(f, "invalid interval: {s}"),
            Error::InvalidCluster(s) => write!(f, "invalid cluster distribution: {s}"),
            Error::InvalidParameter(s) => write!(f, "invalid parameter: {s}"),
            Error::GuardExceeded { detail, limit } => {
                write!(f, "exact-computation guard exceeded (limit {limit}): {detail}")
            }
            Error::CalibrationUnreachable(s) => write!(f, "calibration unreachable: {s}"),
            Error::NotPeriodic(s) => write!(f, "not a periodic point: {s}"),
            Error::ArithmeticOverflow(s) => write!(f, "exact arithmetic overflow: {s}"),
            Error::EmptySet(s) => write!(f, "empty set: {s}"),
        }
    }
}

impl core::error::Error for Error {}
