//! Property tests for the exact layer: circle-set algebra, branch-wise
//! dynamics, cylinder coding, the compound-law engines, and the cluster
//! algebra.  Everything here runs on exact rationals unless the quantity
//! under test is itself floating point.

use std::collections::BTreeSet;

use num_traits::{One, Zero};
use proptest::prelude::*;

use rarelab_core::cluster::cluster_from_tail_exact;
use rarelab_core::compound::{
    polya_aeppli, tv_distance, ClusterSizeDist, CompoundBinomialSpec, CompoundPoissonSpec,
};
use rarelab_core::cylinder::{inner_approximation, outer_hull, CylinderUnion};
use rarelab_core::interval::IntervalUnion;
use rarelab_core::map::PiecewiseAffineMap;
use rarelab_core::oracle;
use rarelab_core::worddist;
use rarelab_core::{rat, Rat};

/// A rational in [0, 1) with a small denominator.
fn small_rat() -> impl Strategy<Value = Rat> {
    (0i64..240, 1i64..=4).prop_map(|(n, scale)| rat(n % (60 * scale), 60 * scale))
}

/// An arbitrary union of up to four raw (possibly degenerate, possibly
/// overlapping, possibly wrapped) intervals.
fn arb_union() -> impl Strategy<Value = IntervalUnion> {
    proptest::collection::vec((small_rat(), small_rat()), 0..4).prop_map(|raw| {
        let pieces: Vec<(Rat, Rat)> = raw.into_iter().filter(|(a, b)| a < b).collect();
        IntervalUnion::from_pieces(pieces).unwrap()
    })
}

/// A full-branch map with 2 or 3 branches and small rational lengths.
fn arb_map() -> impl Strategy<Value = PiecewiseAffineMap> {
    prop_oneof![
        Just(PiecewiseAffineMap::doubling()),
        Just(PiecewiseAffineMap::tripling()),
        (1i64..5).prop_map(|k| {
            PiecewiseAffineMap::from_branch_lengths(&[rat(k, 6), rat(6 - k, 6)]).unwrap()
        }),
        Just(PiecewiseAffineMap::from_branch_lengths(&[rat(1, 5), rat(2, 5), rat(2, 5)]).unwrap()),
    ]
}

proptest! {
    #[test]
    fn union_intersection_measures_are_modular(a in arb_union(), b in arb_union()) {
        // mu(A u B) + mu(A n B) = mu(A) + mu(B), exactly.
        let lhs = a.union(&b).measure() + a.intersect(&b).measure();
        prop_assert_eq!(lhs, a.measure() + b.measure());
    }

    #[test]
    fn complement_is_involutive_and_additive(a in arb_union()) {
        prop_assert_eq!(a.complement().complement(), a.clone());
        prop_assert_eq!(a.complement().measure() + a.measure(), Rat::one());
        prop_assert!(a.intersect(&a.complement()).is_empty());
    }

    #[test]
    fn symmetric_difference_is_a_metric(a in arb_union(), b in arb_union(), c in arb_union()) {
        let dab = a.symmetric_difference(&b).measure();
        let dba = b.symmetric_difference(&a).measure();
        prop_assert_eq!(&dab, &dba);
        let dac = a.symmetric_difference(&c).measure();
        let dcb = c.symmetric_difference(&b).measure();
        prop_assert!(dab <= dac + dcb);
        prop_assert_eq!(a.symmetric_difference(&a).measure(), Rat::zero());
    }

    #[test]
    fn grow_shrink_sandwich(a in arb_union(), r in (1i64..20).prop_map(|n| rat(1, 20 * n))) {
        let grown = a.grow(&r);
        let shrunk = a.shrink(&r);
        prop_assert!(grown.contains_union(&a));
        prop_assert!(a.contains_union(&shrunk));
        // Re-growing a shrink stays inside the original grow.
        prop_assert!(grown.contains_union(&shrunk.grow(&r)));
    }

    #[test]
    fn preimage_preserves_measure(map in arb_map(), a in arb_union()) {
        // The branch lengths are exactly the invariant-measure weights, so
        // pulling back along all branches preserves measure exactly.
        let pre = map.preimage(&a);
        prop_assert_eq!(pre.measure(), a.measure());
    }

    #[test]
    fn preimage_of_image_contains_the_set(map in arb_map(), a in arb_union()) {
        let img = map.image(&a);
        prop_assert!(map.preimage(&img).contains_union(&a));
    }

    #[test]
    fn preimage_respects_boolean_algebra(map in arb_map(), a in arb_union(), b in arb_union()) {
        let lhs = map.preimage(&a.intersect(&b));
        let rhs = map.preimage(&a).intersect(&map.preimage(&b));
        prop_assert_eq!(lhs, rhs);
        let lhs = map.preimage(&a.union(&b));
        let rhs = map.preimage(&a).union(&map.preimage(&b));
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn cylinder_coding_sandwiches_the_set(
        map in arb_map(),
        a in arb_union(),
        level in 1usize..7,
    ) {
        let inner = inner_approximation(&map, &a, level).unwrap();
        let hull = outer_hull(&map, &a, level).unwrap();
        let inner_set = inner.to_interval_union(&map).unwrap();
        let hull_set = hull.to_interval_union(&map).unwrap();
        prop_assert!(a.contains_union(&inner_set));
        prop_assert!(hull_set.contains_union(&a));
        // The sandwich gap is at most two boundary cylinders per arc.
        let gap = hull_set.measure() - inner_set.measure();
        let diam = map.max_branch_length();
        let mut bound = Rat::zero();
        let per_arc = rat(2, 1) * num_traits::pow::pow(diam, level);
        for _ in 0..a.component_count() {
            bound += &per_arc;
        }
        prop_assert!(gap <= bound);
    }

    #[test]
    fn orbit_word_lands_in_its_cylinder(map in arb_map(), x in small_rat(), n in 1usize..8) {
        let word = map.orbit_word_exact(&x, n);
        let (lo, hi) = rarelab_core::cylinder::word_interval(&map, &word).unwrap();
        prop_assert!(&x >= &lo && &x < &hi);
    }

    #[test]
    fn refinement_and_digit_engines_agree(
        map in prop_oneof![
            Just(PiecewiseAffineMap::doubling()),
            Just(PiecewiseAffineMap::from_branch_lengths(&[rat(1, 3), rat(2, 3)]).unwrap()),
        ],
        bits in proptest::collection::vec(any::<bool>(), 4),
        horizon in 1usize..9,
    ) {
        // Random level-2 cylinder union (possibly empty -> skip).
        let words: BTreeSet<Vec<u8>> = bits
            .iter()
            .enumerate()
            .filter(|(_, keep)| **keep)
            .map(|(i, _)| vec![(i / 2) as u8, (i % 2) as u8])
            .collect();
        prop_assume!(!words.is_empty());
        let target = CylinderUnion::new(2, words).unwrap();
        let set = target.to_interval_union(&map).unwrap();
        let dp = worddist::visit_count_pmf(&map, &target, horizon, horizon).unwrap();
        let refine = oracle::exact_rare_event_pmf(&map, &set, horizon, horizon).unwrap();
        prop_assert_eq!(dp.masses(), refine.masses());
    }

    #[test]
    fn entry_count_mean_identity(map in arb_map(), a in arb_union(), w in 1usize..10) {
        prop_assume!(!a.is_empty());
        let pmf = oracle::exact_rare_event_pmf(&map, &a, w, w).unwrap();
        let expected = Rat::from_integer((w as i64).into()) * a.measure();
        prop_assert_eq!(pmf.mean(), expected);
    }

    #[test]
    fn compound_poisson_recursion_matches_convolution(
        theta_num in 1u32..=4,
        s_num in 1u32..=40,
    ) {
        let theta = f64::from(theta_num) / 4.0;
        let s = f64::from(s_num) / 8.0;
        let spec = polya_aeppli(theta, s).unwrap();
        let fast = spec.pmf(30);
        let slow = spec.pmf_by_convolution(30);
        for k in 0..=30 {
            prop_assert!((fast.mass(k) - slow.mass(k)).abs() < 1e-12,
                "k={} fast={} slow={}", k, fast.mass(k), slow.mass(k));
        }
    }

    #[test]
    fn single_trial_compound_binomial_is_the_per_trial_law(
        p_num in 0u32..=8,
        theta_num in 1u32..=4,
    ) {
        let p = f64::from(p_num) / 8.0;
        let theta = f64::from(theta_num) / 4.0;
        let cluster = ClusterSizeDist::geometric(theta).unwrap();
        let spec = CompoundBinomialSpec::new(1, p, cluster.clone()).unwrap();
        let pmf = spec.pmf(12);
        prop_assert!((pmf.mass(0) - (1.0 - p)).abs() < 1e-14);
        // Only the masses inside the computed range are meaningful.
        for (idx, lambda) in cluster.probs().iter().take(11).enumerate() {
            prop_assert!((pmf.mass(idx + 1) - p * lambda).abs() < 1e-14);
        }
    }

    #[test]
    fn tv_distance_is_a_bounded_metric(
        s1 in 1u32..=16,
        s2 in 1u32..=16,
        s3 in 1u32..=16,
    ) {
        let pmf = |n: u32| {
            CompoundPoissonSpec::new(f64::from(n) / 4.0, ClusterSizeDist::unit())
                .unwrap()
                .pmf(40)
        };
        let (a, b, c) = (pmf(s1), pmf(s2), pmf(s3));
        let dab = tv_distance(&a, &b);
        prop_assert!((0.0..=1.0).contains(&dab));
        prop_assert!((dab - tv_distance(&b, &a)).abs() < 1e-15);
        prop_assert!(dab <= tv_distance(&a, &c) + tv_distance(&c, &b) + 1e-15);
        if s1 == s2 {
            prop_assert!(dab < 1e-15);
        }
    }

    #[test]
    fn cluster_algebra_telescopes(raw in proptest::collection::vec(1i64..100, 3..8)) {
        // Build a strictly decreasing exact tail 1 = t_1 > t_2 > ... > 0 from
        // random increments, then check the telescoping identities.
        let total: i64 = raw.iter().sum();
        let mut tail = vec![Rat::one()];
        let mut acc = total;
        for step in &raw[..raw.len() - 1] {
            acc -= step;
            tail.push(rat(acc, total));
        }
        let derived = cluster_from_tail_exact(&tail).unwrap();
        // alpha_1 = 1 - tail[1].
        prop_assert_eq!(derived.alpha1.clone(), Rat::one() - &tail[1]);
        // Sum of ell * lambda_ell telescopes to (sum of alpha_ell) / alpha_1;
        // with the finite cutoff the partial sums match exactly.
        let ell_sum: Rat = derived
            .lambda
            .iter()
            .enumerate()
            .map(|(i, l)| Rat::from_integer(((i + 1) as i64).into()) * l)
            .sum();
        let alphas: Vec<Rat> = tail.windows(2).map(|w| &w[0] - &w[1]).collect();
        let mut expect = Rat::zero();
        let last = alphas.len() - 1;
        for (i, alpha) in alphas.iter().enumerate() {
            if i < last {
                expect += alpha;
            }
        }
        // Trailing correction: lambda stops at len-2 terms, so the final
        // alpha contributes only through the last difference.
        expect -= Rat::from_integer((last as i64).into()) * &alphas[last];
        prop_assert_eq!(ell_sum * &derived.alpha1, expect);
    }

    #[test]
    fn return_tails_are_monotone_and_start_at_one(
        map in arb_map(),
        a in arb_union(),
        k in 1usize..10,
    ) {
        prop_assume!(!a.is_empty());
        let profile = oracle::return_profile(&map, &a, k, 5).unwrap();
        prop_assert_eq!(profile.tail[0].clone(), Rat::one());
        for pair in profile.tail.windows(2) {
            prop_assert!(pair[0] >= pair[1]);
        }
        for (tail, row) in profile.tail.iter().zip(&profile.level_sets) {
            let row_sum: Rat = row.iter().sum();
            prop_assert_eq!(&row_sum, tail);
        }
    }
}

#[test]
fn poisson_zero_mass_matches_extreme_value_form() {
    // Internal consistency: the compound engine's zero mass equals
    // exp(-intensity) for unit clusters and exp(-s) in general.
    for s in [0.25f64, 0.5, 1.0, 2.0] {
        let unit = CompoundPoissonSpec::new(s, ClusterSizeDist::unit())
            .unwrap()
            .pmf(10);
        assert!((unit.mass(0) - (-s).exp()).abs() < 1e-14);
        let pa = polya_aeppli(0.5, s).unwrap().pmf(10);
        assert!((pa.mass(0) - (-s).exp()).abs() < 1e-14);
    }
}

#[test]
fn mixing_inequality_bounds_self_intersections() {
    // For a union of level-n cylinders U and j >= n, the certified mixing
    // rate bounds mu(U n T^-j U) <= mu(U) (mu(U) + phi(j - n)).
    let map = PiecewiseAffineMap::doubling();
    let rate = map.phi_rate();
    let words: BTreeSet<Vec<u8>> = [vec![0u8, 0, 1], vec![1u8, 0, 1], vec![1u8, 1, 1]]
        .into_iter()
        .collect();
    let target = CylinderUnion::new(3, words).unwrap();
    let u = target.to_interval_union(&map).unwrap();
    let mu = u.measure();
    for j in 3usize..=12 {
        let mut pre = u.clone();
        for _ in 0..j {
            pre = map.preimage(&pre);
        }
        let joint = u.intersect(&pre).measure();
        let bound = &mu * (&mu + rate.phi_exact((j - 3) as u32));
        assert!(joint <= bound, "j={j}: {joint} > {bound}");
    }
}
