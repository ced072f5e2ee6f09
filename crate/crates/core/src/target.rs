//! Target sets, the log-distance observable, and threshold calibration.
//!
//! A target is a finite set of circle points (possibly a periodic orbit
//! or a Cantor-construction endpoint set).  The observable is
//! `x -> -log d(x, target)`, whose superlevel set at threshold `u` is the
//! union of circle balls of radius `e^(-u)` around the target points.
//! Calibration chooses the radius so that `window * measure = tau`
//! exactly, by monotone bisection over dyadic radii finished with an
//! exact affine solve on the final bracket.

use alloc::format;
use alloc::vec::Vec;

// `Float` supplies the f64 math methods in no_std builds; std builds
// resolve the inherent methods first, so the import may look unused.
#[allow(unused_imports)]
use num_traits::Float;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::interval::{reduce_mod_1, IntervalUnion};
use crate::map::PiecewiseAffineMap;
use crate::math::rat_to_f64;
use crate::{Error, Rat, Result};

/// Cap on Cantor construction depth (the point set has `2^(level+1) - 1`
/// elements).
pub const MAX_CANTOR_LEVEL: u32 = 16;

/// Bisection steps used during calibration; the final bracket is finer
/// than any statistical scale in play.
const CALIBRATION_STEPS: usize = 60;

/// Relative calibration tolerance accepted when the exact affine finish
/// cannot land (it always can for piecewise-affine measures, so this is
/// a safety net).
const CALIBRATION_TOL: (i64, i64) = (1, 1_000_000_000);

/// A measure-zero closed target on the circle, kept as a finite point
/// set with exact rational coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetSet {
    points: Vec<Rat>,
}

impl TargetSet {
    /// A finite point set; coordinates are reduced mod 1 and deduplicated.
    pub fn points(points: impl IntoIterator<Item = Rat>) -> Result<Self> {
        let mut reduced: Vec<Rat> = points.into_iter().map(|p| reduce_mod_1(&p)).collect();
        if reduced.is_empty() {
            return Err(Error::EmptySet(format!("target needs at least one point")));
        }
        reduced.sort();
        reduced.dedup();
        Ok(Self { points: reduced })
    }

    /// The forward orbit of a point of exact period `period` under `map`.
    ///
    /// Rejects points that do not return after exactly `period` steps or
    /// that return earlier.
    pub fn periodic_orbit(map: &PiecewiseAffineMap, point: &Rat, period: usize) -> Result<Self> {
        if period == 0 {
            return Err(Error::InvalidParameter(format!("period must be >= 1")));
        }
        let start = reduce_mod_1(point);
        let mut orbit = Vec::with_capacity(period);
        let mut x = start.clone();
        for step in 1..=period {
            orbit.push(x.clone());
            x = map.apply_exact(&x);
            if x == start && step < period {
                return Err(Error::NotPeriodic(format!(
                    "point returns after {step} steps, not the declared {period}"
                )));
            }
        }
        if x != start {
            return Err(Error::NotPeriodic(format!(
                "point does not return to itself after {period} steps"
            )));
        }
        Self::points(orbit)
    }

    /// Endpoints of the level-`level` middle-thirds construction,
    /// identified mod 1.
    pub fn cantor_endpoints(level: u32) -> Result<Self> {
        if level > MAX_CANTOR_LEVEL {
            return Err(Error::GuardExceeded {
                detail: format!("Cantor construction level {level} too deep"),
                limit: MAX_CANTOR_LEVEL as u64,
            });
        }
        let mut intervals = alloc::vec![(Rat::zero(), Rat::one())];
        for _ in 0..level {
            let mut next = Vec::with_capacity(intervals.len() * 2);
            for (a, b) in intervals {
                let third = (&b - &a) / Rat::from_integer(3.into());
                next.push((a.clone(), &a + &third));
                next.push((&b - &third, b.clone()));
            }
            intervals = next;
        }
        Self::points(
            intervals
                .into_iter()
                .flat_map(|(a, b)| [a, b]),
        )
    }

    pub fn point_list(&self) -> &[Rat] {
        &self.points
    }

    /// Exact circle distance from `x` to the target.
    pub fn distance(&self, x: &Rat) -> Rat {
        let x = reduce_mod_1(x);
        let half = Rat::new(1.into(), 2.into());
        let mut best: Option<Rat> = None;
        for p in &self.points {
            let diff = (&x - p).abs();
            let d = if diff > half {
                Rat::one() - diff
            } else {
                diff
            };
            if best.as_ref().map_or(true, |b| &d < b) {
                best = Some(d);
            }
        }
        best.expect("target is nonempty")
    }

    /// Union of circle balls of exact radius `r` around the target.
    pub fn balls(&self, radius: &Rat) -> IntervalUnion {
        let mut pieces = Vec::new();
        for p in &self.points {
            let ball = IntervalUnion::ball(p, radius);
            pieces.extend(ball.pieces().iter().cloned());
        }
        IntervalUnion::from_pieces(pieces).expect("ball pieces are canonical")
    }
}

/// The observable `x -> -log d(x, target)`, maximal (`+inf`) exactly on
/// the target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observable {
    target: TargetSet,
}

impl Observable {
    pub fn new(target: TargetSet) -> Self {
        Self { target }
    }

    pub fn target(&self) -> &TargetSet {
        &self.target
    }

    /// `-log d(x, target)`, `+inf` on the target itself.
    pub fn value(&self, x: &Rat) -> f64 {
        let d = self.target.distance(x);
        if d.is_zero() {
            f64::INFINITY
        } else {
            -rat_to_f64(&d).ln()
        }
    }

    /// Superlevel set `{value > u}`: balls of radius `e^(-u)`.
    ///
    /// The radius is the exact rational value of the `f64` nearest
    /// `e^(-u)`, so nesting in `u` is exact.
    pub fn superlevel_set(&self, u: f64) -> Result<IntervalUnion> {
        if !u.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "threshold must be finite, got {u}"
            )));
        }
        let radius =
            Rat::from_float((-u).exp()).ok_or_else(|| Error::InvalidParameter(format!(
                "threshold {u} produced a non-finite radius"
            )))?;
        Ok(self.target.balls(&radius))
    }

    /// Superlevel set at an exact radius `r = e^(-u)`.
    pub fn superlevel_set_radius(&self, radius: &Rat) -> IntervalUnion {
        self.target.balls(radius)
    }
}

/// Solves `window * measure(balls(r)) = tau` for the exact radius `r`.
///
/// The measure is continuous, piecewise affine, and nondecreasing in the
/// radius, so bisection brackets the solution and the final bracket is
/// resolved by an exact affine interpolation, which lands exactly unless
/// the bracket still straddles a breakpoint (then the best dyadic
/// endpoint within `1e-9` relative error is returned).
pub fn calibrate_radius(target: &TargetSet, window: u64, tau: &Rat) -> Result<Rat> {
    if window < 1 {
        return Err(Error::InvalidParameter(format!("window must be >= 1")));
    }
    if tau <= &Rat::zero() {
        return Err(Error::InvalidParameter(format!("tau must be > 0")));
    }
    let goal = tau / Rat::from_integer(window.into()); // target measure
    if goal >= Rat::one() {
        return Err(Error::CalibrationUnreachable(format!(
            "tau / window >= 1: no threshold reaches measure {}",
            goal
        )));
    }
    let measure_at = |r: &Rat| target.balls(r).measure();
    let mut lo = Rat::zero();
    let mut mu_lo = Rat::zero();
    let mut hi = Rat::new(1.into(), 2.into());
    let mut mu_hi = Rat::one(); // balls of radius 1/2 cover the circle
    for _ in 0..CALIBRATION_STEPS {
        // Exact affine interpolation on the current bracket.
        if mu_hi > mu_lo {
            let cand = &lo + (&goal - &mu_lo) * (&hi - &lo) / (&mu_hi - &mu_lo);
            if measure_at(&cand) == goal {
                return Ok(cand);
            }
        }
        let mid = (&lo + &hi) / Rat::from_integer(2.into());
        let mu_mid = measure_at(&mid);
        if mu_mid >= goal {
            hi = mid;
            mu_hi = mu_mid;
        } else {
            lo = mid;
            mu_lo = mu_mid;
        }
    }
    // Safety net: accept the bracket end within relative tolerance.
    let tol = Rat::new(CALIBRATION_TOL.0.into(), CALIBRATION_TOL.1.into()) * tau;
    let err = (Rat::from_integer(window.into()) * &mu_hi - tau).abs();
    if err <= tol {
        Ok(hi)
    } else {
        Err(Error::CalibrationUnreachable(format!(
            "bisection stalled at relative error {}",
            rat_to_f64(&(&err / tau))
        )))
    }
}

/// Calibrated threshold `u` with `window * measure({value > u})` within
/// calibration tolerance of `tau`.
pub fn calibrate_threshold(obs: &Observable, window: u64, tau: &Rat) -> Result<f64> {
    let radius = calibrate_radius(obs.target(), window, tau)?;
    Ok(-rat_to_f64(&radius).ln())
}

/// One calibrated scale of a nested family.
#[derive(Debug, Clone)]
pub struct CalibratedLevel {
    pub index: usize,
    /// Observation window `w_n`.
    pub window: u64,
    /// Exact ball radius `e^(-u_n)`.
    pub radius: Rat,
    /// Threshold `u_n = -log radius`.
    pub threshold: f64,
    /// The superlevel set `U_n`.
    pub set: IntervalUnion,
    /// Exact `measure(U_n)`.
    pub measure: Rat,
    pub diagnostics: LevelDiagnostics,
}

/// Boundary-size diagnostics of one scale, probed at `r = measure^2`.
#[derive(Debug, Clone)]
pub struct LevelDiagnostics {
    /// Probe radius `r_n`.
    pub probe_radius: Rat,
    /// `measure(outer \ inner) / measure(U_n)` at the probe radius.
    pub excess_ratio: Rat,
    /// `F(r)/r` where `F(r)` is the measure of the `r`-neighborhood of
    /// the boundary; bounded by 4x the number of circle arcs.
    pub boundary_rate: Rat,
    /// Number of circle arcs making up `U_n`.
    pub arcs: usize,
}

/// A calibrated nested family `U_0 ⊇ U_1 ⊇ ...` over strictly
/// increasing windows.
#[derive(Debug, Clone)]
pub struct ThresholdSchedule {
    pub tau: Rat,
    pub levels: Vec<CalibratedLevel>,
}

impl ThresholdSchedule {
    pub fn final_level(&self) -> &CalibratedLevel {
        self.levels.last().expect("schedule has at least one level")
    }
}

/// Geometric window schedule `w_n = w0 * factor^n`.
pub fn geometric_windows(w0: u64, factor: u64, scales: usize) -> Result<Vec<u64>> {
    if w0 < 1 || factor < 2 || scales < 1 {
        return Err(Error::InvalidParameter(format!(
            "geometric schedule needs w0 >= 1, factor >= 2, scales >= 1"
        )));
    }
    let mut windows = Vec::with_capacity(scales);
    let mut w = w0;
    for _ in 0..scales {
        windows.push(w);
        w = w.checked_mul(factor).ok_or_else(|| Error::ArithmeticOverflow(
            format!("window schedule overflows u64"),
        ))?;
    }
    Ok(windows)
}

/// Arithmetic window schedule `w_n = stride * (n + 1)`.
pub fn arithmetic_windows(stride: u64, scales: usize) -> Result<Vec<u64>> {
    if stride < 1 || scales < 1 {
        return Err(Error::InvalidParameter(format!(
            "arithmetic schedule needs stride >= 1 and scales >= 1"
        )));
    }
    Ok((1..=scales as u64).map(|n| stride * n).collect())
}

/// Calibrates a nested family over the given strictly increasing
/// windows and attaches boundary diagnostics per scale.
pub fn nested_family(
    obs: &Observable,
    tau: &Rat,
    windows: &[u64],
) -> Result<ThresholdSchedule> {
    if windows.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "schedule needs at least one window"
        )));
    }
    for pair in windows.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::InvalidParameter(format!(
                "windows must be strictly increasing, got {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    let mut levels: Vec<CalibratedLevel> = Vec::with_capacity(windows.len());
    for (index, &window) in windows.iter().enumerate() {
        let radius = calibrate_radius(obs.target(), window, tau).map_err(|e| {
            Error::CalibrationUnreachable(format!("scale {index}: {e}"))
        })?;
        let set = obs.superlevel_set_radius(&radius);
        let measure = set.measure();
        if let Some(prev) = levels.last() {
            if !prev.set.contains_union(&set) {
                return Err(Error::CalibrationUnreachable(format!(
                    "scale {index} is not nested in scale {}",
                    index - 1
                )));
            }
        }
        let probe = &measure * &measure;
        let (inner, outer) = set.inner_outer(&probe)?;
        let excess = outer.measure() - inner.measure();
        let diagnostics = LevelDiagnostics {
            probe_radius: probe.clone(),
            excess_ratio: &excess / &measure,
            boundary_rate: &excess / &probe,
            arcs: set.component_count(),
        };
        levels.push(CalibratedLevel {
            index,
            window,
            threshold: -rat_to_f64(&radius).ln(),
            radius,
            set,
            measure,
            diagnostics,
        });
    }
    Ok(ThresholdSchedule {
        tau: tau.clone(),
        levels,
    })
}

/// Nearest-integer horizon `round(tau / measure)` used for entry-time
/// experiments; ties round up.
pub fn entry_horizon(tau: &Rat, measure: &Rat) -> Result<u64> {
    if measure <= &Rat::zero() {
        return Err(Error::EmptySet(format!("horizon needs positive measure")));
    }
    let ratio = tau / measure;
    if ratio < Rat::new(1.into(), 2.into()) {
        return Err(Error::InvalidParameter(format!(
            "tau / measure = {} rounds to zero",
            rat_to_f64(&ratio)
        )));
    }
    // floor(x + 1/2) rounds to nearest with ties up.
    let shifted = ratio + Rat::new(1.into(), 2.into());
    let n = shifted
        .floor()
        .to_integer()
        .to_u64()
        .ok_or_else(|| Error::ArithmeticOverflow(format!("horizon overflows u64")))?;
    Ok(n.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat;

    fn fixed_point() -> Observable {
        Observable::new(TargetSet::points([rat(0, 1)]).unwrap())
    }

    #[test]
    fn superlevel_of_fixed_point_is_wrapped_ball() {
        // Exact radius path: threshold log 4 means radius 1/4.
        let exact = fixed_point().superlevel_set_radius(&rat(1, 4));
        let expect =
            IntervalUnion::from_pieces([(rat(0, 1), rat(1, 4)), (rat(3, 4), rat(1, 1))]).unwrap();
        assert_eq!(exact, expect);
        // Float threshold path: exp(-log 4) may be off by one ulp, so
        // compare up to a negligible symmetric difference.
        let from_u = fixed_point().superlevel_set(4.0f64.ln()).unwrap();
        let gap = from_u.symmetric_difference(&expect).measure();
        assert!(rat_to_f64(&gap) < 1e-15);
    }

    #[test]
    fn superlevel_of_period_two_orbit() {
        let map = PiecewiseAffineMap::doubling();
        let target = TargetSet::periodic_orbit(&map, &rat(1, 3), 2).unwrap();
        assert_eq!(target.point_list(), &[rat(1, 3), rat(2, 3)]);
        let u = Observable::new(target).superlevel_set_radius(&rat(1, 8));
        let expect = IntervalUnion::from_pieces([
            (rat(5, 24), rat(11, 24)),
            (rat(13, 24), rat(19, 24)),
        ])
        .unwrap();
        assert_eq!(u, expect);
        assert_eq!(u.measure(), rat(1, 2));
    }

    #[test]
    fn superlevel_sets_nest_in_the_threshold() {
        let obs = Observable::new(TargetSet::points([rat(1, 3), rat(4, 5)]).unwrap());
        let mut prev = obs.superlevel_set(1.0).unwrap();
        for i in 1..20 {
            let next = obs.superlevel_set(1.0 + 0.37 * i as f64).unwrap();
            assert!(prev.contains_union(&next), "step {i}");
            prev = next;
        }
    }

    #[test]
    fn observable_value_examples() {
        let obs = fixed_point();
        assert_eq!(obs.value(&rat(0, 1)), f64::INFINITY);
        assert!((obs.value(&rat(1, 4)) - 4.0f64.ln()).abs() < 1e-12);
        // Circle distance: 7/8 is 1/8 away from 0 across the wrap.
        assert!((obs.value(&rat(7, 8)) - 8.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn periodic_orbit_validation() {
        let map = PiecewiseAffineMap::doubling();
        assert!(TargetSet::periodic_orbit(&map, &rat(1, 3), 2).is_ok());
        // Wrong declared period (actual period divides or differs).
        assert!(TargetSet::periodic_orbit(&map, &rat(1, 3), 3).is_err());
        assert!(TargetSet::periodic_orbit(&map, &rat(0, 1), 2).is_err());
        // Non-periodic point.
        assert!(TargetSet::periodic_orbit(&map, &rat(1, 5), 2).is_err());
        // Fixed point is a valid period-1 orbit.
        assert!(TargetSet::periodic_orbit(&map, &rat(0, 1), 1).is_ok());
    }

    #[test]
    fn cantor_endpoint_counts() {
        assert_eq!(
            TargetSet::cantor_endpoints(1).unwrap().point_list(),
            &[rat(0, 1), rat(1, 3), rat(2, 3)]
        );
        // Level M keeps 2^(M+1) - 1 distinct points after 0 ~ 1.
        for m in 0..6 {
            let n = TargetSet::cantor_endpoints(m).unwrap().point_list().len();
            assert_eq!(n, (1 << (m + 1)) - 1, "level {m}");
        }
    }

    #[test]
    fn calibration_closed_form_examples() {
        let target = TargetSet::points([rat(0, 1)]).unwrap();
        // w = 100, tau = 1: radius 1/200, u = log 200.
        let r = calibrate_radius(&target, 100, &rat(1, 1)).unwrap();
        assert_eq!(r, rat(1, 200));
        let u = calibrate_threshold(&fixed_point(), 100, &rat(1, 1)).unwrap();
        assert!((u - 200.0f64.ln()).abs() < 1e-12);
        // w = 10, tau = 2: radius 1/10, u = log 10.
        assert_eq!(calibrate_radius(&target, 10, &rat(2, 1)).unwrap(), rat(1, 10));
        // Doubling the window adds log 2 to the threshold: radii halve.
        let r1 = calibrate_radius(&target, 64, &rat(1, 1)).unwrap();
        let r2 = calibrate_radius(&target, 128, &rat(1, 1)).unwrap();
        assert_eq!(r1, rat(2, 1) * &r2);
    }

    #[test]
    fn calibration_lands_exactly_on_multi_point_targets() {
        let target = TargetSet::cantor_endpoints(3).unwrap();
        for &w in &[50u64, 400, 3000] {
            let r = calibrate_radius(&target, w, &rat(1, 1)).unwrap();
            let mu = target.balls(&r).measure();
            assert_eq!(Rat::from_integer(w.into()) * mu, rat(1, 1), "w={w}");
        }
    }

    #[test]
    fn calibration_rejects_unreachable_goals() {
        let target = TargetSet::points([rat(0, 1)]).unwrap();
        assert!(calibrate_radius(&target, 1, &rat(1, 1)).is_err());
        assert!(calibrate_radius(&target, 10, &rat(0, 1)).is_err());
        assert!(calibrate_radius(&target, 0, &rat(1, 1)).is_err());
    }

    #[test]
    fn nested_family_fixed_point_closed_form() {
        // w_n = 10 * 2^n, tau = 1: mu(U_n) = 2^(-n)/10.
        let windows = geometric_windows(10, 2, 5).unwrap();
        assert_eq!(windows, [10, 20, 40, 80, 160]);
        let schedule = nested_family(&fixed_point(), &rat(1, 1), &windows).unwrap();
        for (n, level) in schedule.levels.iter().enumerate() {
            assert_eq!(level.measure, rat(1, 10 * (1 << n)));
            assert_eq!(
                Rat::from_integer(level.window.into()) * &level.measure,
                rat(1, 1)
            );
            // One circle arc: excess at probe mu^2 is 4 mu^2 exactly.
            assert_eq!(level.diagnostics.arcs, 1);
            assert_eq!(level.diagnostics.boundary_rate, rat(4, 1));
            assert_eq!(level.diagnostics.excess_ratio, rat(4, 1) * &level.measure);
        }
        // Thresholds increase along the family.
        for pair in schedule.levels.windows(2) {
            assert!(pair[0].threshold < pair[1].threshold);
            assert!(pair[0].set.contains_union(&pair[1].set));
        }
    }

    #[test]
    fn window_schedules_validate() {
        assert!(geometric_windows(0, 2, 3).is_err());
        assert!(geometric_windows(1, 1, 3).is_err());
        assert_eq!(arithmetic_windows(7, 3).unwrap(), [7, 14, 21]);
        assert!(nested_family(&fixed_point(), &rat(1, 1), &[10, 10]).is_err());
    }

    #[test]
    fn entry_horizon_rounds_to_nearest() {
        assert_eq!(entry_horizon(&rat(1, 1), &rat(1, 100)).unwrap(), 100);
        // 1 / (3/1000) = 333.33: rounds down.
        assert_eq!(entry_horizon(&rat(1, 1), &rat(3, 1000)).unwrap(), 333);
        // 2 / (3/1000) = 666.67: rounds up.
        assert_eq!(entry_horizon(&rat(2, 1), &rat(3, 1000)).unwrap(), 667);
        // Ties round up: 1 / (2/5) = 2.5 -> 3.
        assert_eq!(entry_horizon(&rat(1, 1), &rat(2, 5)).unwrap(), 3);
        assert!(entry_horizon(&rat(1, 100), &rat(1, 2)).is_err());
    }
}
