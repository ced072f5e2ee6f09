//! Small numeric helpers shared across modules.

use crate::Rat;
use num_traits::ToPrimitive;

/// Compensated (Neumaier) accumulator for long `f64` sums.
///
/// Keeps a running correction term so that sums of many small masses do not
/// lose low-order bits; `total()` folds the correction back in.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    correction: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.correction += (self.sum - t) + value;
        } else {
            self.correction += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.correction
    }
}

/// Sums a slice with compensation.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for &v in values {
        acc.add(v);
    }
    acc.total()
}

/// Converts an exact rational to the nearest `f64`.
///
/// `BigRational::to_f64` scales numerator and denominator with exponent
/// awareness, so values as small as the calibration radii (denominators up
/// to 2^80) convert without overflow.
pub fn rat_to_f64(x: &Rat) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat;

    #[test]
    fn compensated_sum_recovers_low_order_mass() {
        // 1 followed by 1e-16 twenty times: naive summation loses the tail.
        let mut acc = CompensatedSum::new();
        acc.add(1.0);
        for _ in 0..20 {
            acc.add(1e-16);
        }
        assert!((acc.total() - (1.0 + 20e-16)).abs() < 1e-18);
    }

    #[test]
    fn rational_to_float_handles_tiny_values() {
        let tiny = rat(1, i64::MAX);
        assert!((rat_to_f64(&tiny) - 1.0 / i64::MAX as f64).abs() < 1e-30);
        assert_eq!(rat_to_f64(&rat(1, 2)), 0.5);
    }
}
