//! Quantitative verification checks.
//!
//! Each check instantiates one limit statement or finite-scale bound as a
//! concrete pass/fail comparison between sampled statistics, exact oracle
//! values, and predicted distributions.  A check that cannot run because
//! its hypotheses fail numerically (or because an exact computation would
//! exceed its guard) reports `Inapplicable`, never `Fail`: falsifying a
//! conclusion requires its hypotheses.
//!
//! All estimates flow through the [`Workbench`], which memoizes them per
//! `(scale, window)` address so that a quantity shared by several checks
//! is sampled once, and so that every estimate's random stream is fixed
//! by what is being estimated rather than by which checks run.

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use rarelab_core::cluster::cluster_from_tail_exact;
use rarelab_core::compound::{ClusterSizeDist, CompoundBinomialSpec, CompoundPoissonSpec, DiscretePmf};
use rarelab_core::cylinder::{inner_approximation, CylinderUnion};
use rarelab_core::interval::IntervalUnion;
use rarelab_core::map::PiecewiseAffineMap;
use rarelab_core::math::rat_to_f64;
use rarelab_core::target::{entry_horizon, nested_family, ThresholdSchedule};
use rarelab_core::{oracle, worddist, Rat};

use crate::config::{ConfigError, ExperimentConfig};
use crate::estimators::{
    self, domain, ClusterStats, EmpiricalPmf, SyncReturnEstimate, WindowClusterEstimate, Z99,
};
use crate::sampling::{ConditionalStart, ScaledSet, SymbolicSampler};

/// Cluster sizes carried by the oracle prediction; long enough that the
/// truncated tail mass is negligible against every tolerance here.
const PREDICTION_ELL: usize = 24;

/// Support cut-off for predicted pmfs; the deficit beyond it is far below
/// every tolerance.
const PREDICTION_KMAX: usize = 64;

/// Largest cylinder level used for exact chain computations.
const MAX_COVER_LEVEL: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Inapplicable,
}

/// One verification outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub status: CheckStatus,
    /// Short digest of the inputs the check consumed.
    pub inputs: String,
    /// Headline measured quantity (meaning depends on the check).
    pub measured: f64,
    /// The bound or prediction the measurement is compared against.
    pub bound: f64,
    /// Extra slack granted on top of the bound.
    pub tolerance: f64,
    pub detail: String,
}

impl CheckReport {
    fn judged(self) -> Self {
        let status = if self.measured <= self.bound + self.tolerance {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        CheckReport { status, ..self }
    }

    fn inapplicable(name: &str, why: String) -> Self {
        CheckReport {
            name: name.to_string(),
            status: CheckStatus::Inapplicable,
            inputs: String::new(),
            measured: f64::NAN,
            bound: f64::NAN,
            tolerance: 0.0,
            detail: why,
        }
    }
}

/// Every check name, in report order.
pub const ALL_CHECKS: &[&str] = &[
    "equivalence",
    "cluster-identities",
    "limit-law",
    "block-bound",
    "extreme-value",
    "synchronized-returns",
    "period-growth",
];

/// The limiting entry-count law predicted by the exact oracle.
#[derive(Debug, Clone)]
pub struct Prediction {
    /// Exact extremal index at the prediction window.
    pub alpha1_exact: Rat,
    pub alpha1: f64,
    /// Exact conditional return tail (first entries, for reporting).
    pub tail: Vec<Rat>,
    pub cluster: ClusterSizeDist,
    /// `true` when no return is possible within the prediction window,
    /// so the law degenerates to Poisson.
    pub poisson: bool,
    /// Compound Poisson law with intensity `tau * alpha1`.
    pub pmf: DiscretePmf,
    pub intensity: f64,
}

/// One calibrated scale with its sampler-side tables.
pub struct ScaleContext {
    pub index: usize,
    pub window: u64,
    pub horizon: u64,
    pub set: IntervalUnion,
    pub measure: Rat,
    pub measure_f: f64,
    pub scaled: ScaledSet,
    pub start: ConditionalStart,
}

/// Shared state for a run: calibration, sampler, and memoized estimates.
pub struct Workbench {
    pub config: ExperimentConfig,
    pub map: PiecewiseAffineMap,
    pub tau: Rat,
    pub tau_f: f64,
    pub schedule: ThresholdSchedule,
    pub sampler: SymbolicSampler,
    pub scales: Vec<ScaleContext>,
    entry_pmfs: Vec<Option<EmpiricalPmf>>,
    rare_pmf_final: Option<EmpiricalPmf>,
    cluster_grid: Vec<Vec<Option<ClusterStats>>>,
    sync_pairs: Vec<Option<(SyncReturnEstimate, ClusterStats)>>,
    window_cluster_final: Option<WindowClusterEstimate>,
    prediction: Option<Prediction>,
}

impl Workbench {
    pub fn new(config: &ExperimentConfig) -> Result<Self, ConfigError> {
        let map = config.build_map()?;
        let observable = config.build_observable(&map)?;
        let tau = config.tau()?;
        let windows = config.windows()?;
        let schedule = nested_family(&observable, &tau, &windows)?;
        let sampler = SymbolicSampler::new(&map)?;
        let mut scales = Vec::with_capacity(schedule.levels.len());
        for level in &schedule.levels {
            let horizon = entry_horizon(&tau, &level.measure)?;
            scales.push(ScaleContext {
                index: level.index,
                window: level.window,
                horizon,
                scaled: sampler.scale_set(&level.set)?,
                start: sampler.conditional_start(&level.set)?,
                measure_f: rat_to_f64(&level.measure),
                set: level.set.clone(),
                measure: level.measure.clone(),
            });
        }
        let n_scales = scales.len();
        let grid_len = config.estimator.k_grid.len();
        Ok(Workbench {
            config: config.clone(),
            tau_f: rat_to_f64(&tau),
            tau,
            map,
            schedule,
            sampler,
            scales,
            entry_pmfs: vec![None; n_scales],
            rare_pmf_final: None,
            cluster_grid: vec![vec![None; grid_len]; n_scales],
            sync_pairs: std::iter::repeat_with(|| None).take(n_scales).collect(),
            window_cluster_final: None,
            prediction: None,
        })
    }

    pub fn seed(&self) -> u64 {
        self.config.estimator.seed
    }

    fn final_index(&self) -> usize {
        self.scales.len() - 1
    }

    /// Entry-count pmf at scale `n` over its calibrated horizon.
    pub fn entry_pmf(&mut self, n: usize) -> &EmpiricalPmf {
        if self.entry_pmfs[n].is_none() {
            let ctx = &self.scales[n];
            let pmf = estimators::visit_count_pmf(
                &self.sampler,
                &ctx.scaled,
                ctx.horizon,
                self.config.pmf_samples_at(n),
                self.seed(),
                domain::at(domain::ENTRY_PMF, n),
            );
            self.entry_pmfs[n] = Some(pmf);
        }
        self.entry_pmfs[n].as_ref().unwrap()
    }

    /// Exceedance-count pmf at the final scale, over the window rather
    /// than the rounded horizon, on an independent stream.
    pub fn rare_pmf_final(&mut self) -> &EmpiricalPmf {
        if self.rare_pmf_final.is_none() {
            let n = self.final_index();
            let ctx = &self.scales[n];
            let pmf = estimators::visit_count_pmf(
                &self.sampler,
                &ctx.scaled,
                ctx.window,
                self.config.equivalence_samples(),
                self.seed(),
                domain::at(domain::RARE_PMF, n),
            );
            self.rare_pmf_final = Some(pmf);
        }
        self.rare_pmf_final.as_ref().unwrap()
    }

    /// Short-return statistics at scale `n`, window `k_grid[k_index]`.
    pub fn cluster(&mut self, n: usize, k_index: usize) -> Result<&ClusterStats, ConfigError> {
        if self.cluster_grid[n][k_index].is_none() {
            let window = self.config.estimator.k_grid[k_index];
            let ctx = &self.scales[n];
            let stats = estimators::cluster_stats(
                &self.sampler,
                &ctx.scaled,
                &ctx.start,
                window,
                self.config.estimator.ell_max,
                self.config.estimator.samples,
                self.seed(),
                domain::at_grid(domain::RETURNS, n, k_index),
            )?;
            self.cluster_grid[n][k_index] = Some(stats);
        }
        Ok(self.cluster_grid[n][k_index].as_ref().unwrap())
    }

    /// Synchronized-window tail and its fixed-window reference at scale
    /// `n`, both at the synchronized budget on dedicated streams.
    pub fn sync_pair(
        &mut self,
        n: usize,
    ) -> Result<&(SyncReturnEstimate, ClusterStats), ConfigError> {
        if self.sync_pairs[n].is_none() {
            let s_n = self.sync_window(n);
            let k_max = *self.config.estimator.k_grid.last().unwrap();
            let budget = self.config.beta_samples();
            let ell = self.config.estimator.ell_max;
            let ctx = &self.scales[n];
            let sync = estimators::sync_returns(
                &self.sampler,
                &ctx.scaled,
                &ctx.start,
                s_n,
                ell,
                budget,
                self.seed(),
                domain::at_grid(domain::SYNC, n, 0),
            )?;
            let reference = estimators::cluster_stats(
                &self.sampler,
                &ctx.scaled,
                &ctx.start,
                k_max,
                ell,
                budget,
                self.seed(),
                domain::at_grid(domain::SYNC, n, 1),
            )?;
            self.sync_pairs[n] = Some((sync, reference));
        }
        Ok(self.sync_pairs[n].as_ref().unwrap())
    }

    /// The synchronized return window at scale `n`: the bit length of the
    /// observation window, which grows linearly in the scale index while
    /// `s_n * measure` still vanishes.
    pub fn sync_window(&self, n: usize) -> u32 {
        63 - self.scales[n].window.leading_zeros()
    }

    /// Direct cluster-size ratio estimates at the final scale.
    pub fn window_cluster_final(&mut self) -> Result<&WindowClusterEstimate, ConfigError> {
        if self.window_cluster_final.is_none() {
            let n = self.final_index();
            let k_max = *self.config.estimator.k_grid.last().unwrap();
            let ctx = &self.scales[n];
            let est = estimators::window_cluster(
                &self.sampler,
                &ctx.scaled,
                k_max,
                self.config.lambda_samples(),
                self.seed(),
                domain::at(domain::CLUSTER, n),
            )?;
            self.window_cluster_final = Some(est);
        }
        Ok(self.window_cluster_final.as_ref().unwrap())
    }

    /// The limiting-law prediction from the exact oracle at the final
    /// scale and the configured prediction window.
    pub fn prediction(&mut self) -> Result<&Prediction, ConfigError> {
        if self.prediction.is_none() {
            let ctx = &self.scales[self.final_index()];
            let k_star = self.config.estimator.prediction_window as usize;
            let profile =
                oracle::return_profile(&self.map, &ctx.set, k_star, PREDICTION_ELL + 2)?;
            let derived = cluster_from_tail_exact(&profile.tail)?;
            let cluster = derived.cluster_dist()?;
            let alpha1 = rat_to_f64(&derived.alpha1);
            let intensity = self.tau_f * alpha1;
            let spec = CompoundPoissonSpec::new(intensity, cluster.clone())?;
            let poisson = profile.tail[1].is_zero();
            self.prediction = Some(Prediction {
                alpha1_exact: derived.alpha1.clone(),
                alpha1,
                tail: profile.tail.iter().take(8).cloned().collect(),
                cluster,
                poisson,
                pmf: spec.pmf(PREDICTION_KMAX),
                intensity,
            });
        }
        Ok(self.prediction.as_ref().unwrap())
    }

    /// Exact cylinder representation of a scale's set, if it is exactly a
    /// union of cylinders within the chain guard.
    fn exact_cover(&self, u: &IntervalUnion) -> Option<CylinderUnion> {
        let m = self.map.branch_count();
        for level in 1..=MAX_COVER_LEVEL {
            if m.checked_pow(level as u32).map_or(true, |s| s > worddist::MAX_STATES) {
                return None;
            }
            let inner = inner_approximation(&self.map, u, level).ok()?;
            if inner.is_empty() {
                continue;
            }
            if inner.measure(&self.map).ok()? == u.measure() {
                return Some(inner);
            }
        }
        None
    }
}

/// Runs the configured checks (all of them when the list is empty).
pub fn run_checks(wb: &mut Workbench, names: &[String]) -> Vec<CheckReport> {
    let selected: Vec<&str> = if names.is_empty() {
        ALL_CHECKS.to_vec()
    } else {
        names.iter().map(String::as_str).collect()
    };
    selected.iter().map(|name| run_one(wb, name)).collect()
}

fn run_one(wb: &mut Workbench, name: &str) -> CheckReport {
    let result = match name {
        "equivalence" => check_equivalence(wb),
        "cluster-identities" => check_cluster_identities(wb),
        "limit-law" => check_limit_law(wb),
        "block-bound" => check_block_bound(wb),
        "extreme-value" => check_extreme_value(wb),
        "synchronized-returns" => check_synchronized_returns(wb),
        "period-growth" => check_period_growth(wb),
        other => {
            return CheckReport::inapplicable(other, format!("unknown check `{other}`"));
        }
    };
    result.unwrap_or_else(|e| CheckReport::inapplicable(name, format!("could not run: {e}")))
}

type CheckResult = Result<CheckReport, ConfigError>;

/// Exceedance counts over the window and entry counts over the rounded
/// horizon follow the same law when the calibration is exact; every
/// per-count gap must be explained by the calibration error, one horizon
/// step, and sampling noise.
fn check_equivalence(wb: &mut Workbench) -> CheckResult {
    let n = wb.final_index();
    let ctx = &wb.scales[n];
    let (window, horizon, measure_f) = (ctx.window, ctx.horizon, ctx.measure_f);
    let calib_gap =
        rat_to_f64(&(Rat::from_integer(window.into()) * &wb.scales[n].measure - &wb.tau).abs());
    let base = calib_gap + measure_f;
    let zeta = wb.entry_pmf(n).clone();
    let xi = wb.rare_pmf_final().clone();
    let mut worst = f64::NEG_INFINITY;
    let mut worst_k = 0;
    for k in 0..xi.len().max(zeta.len()) {
        let gap = (xi.mass(k) - zeta.mass(k)).abs();
        let pooled = (xi.half_width(k).powi(2) + zeta.half_width(k).powi(2)).sqrt();
        let slack = gap - 3.0 * pooled;
        if slack > worst {
            worst = slack;
            worst_k = k;
        }
    }
    Ok(CheckReport {
        name: "equivalence".into(),
        status: CheckStatus::Fail,
        inputs: format!(
            "scale {n}, window {window}, horizon {horizon}, samples {}+{}, seed {}",
            xi.total(),
            zeta.total(),
            wb.seed()
        ),
        measured: worst,
        bound: base,
        tolerance: 0.0,
        detail: format!(
            "largest per-count gap beyond 3x pooled 99% intervals is {worst:.3e} at count \
             {worst_k}; allowed calibration+rounding budget {base:.3e}"
        ),
    }
    .judged())
}

/// The directly estimated cluster sizes must match the sizes derived from
/// the short-return tail by telescoping, and the mean cluster size times
/// the extremal index must be 1.
fn check_cluster_identities(wb: &mut Workbench) -> CheckResult {
    let kac_tolerance = 0.02;
    let n = wb.final_index();
    let k_index = wb.config.estimator.k_grid.len() - 1;
    let ell_max = wb.config.estimator.ell_max;
    let direct = wb.window_cluster_final()?.clone();
    let (_, reference) = wb.sync_pair(n)?.clone();
    let alpha1 = reference.alpha1;
    let mut worst_ratio = 0.0f64;
    let mut rows = String::new();
    for l in 1..=ell_max {
        let direct_l = direct.lambda.get(l - 1).copied().unwrap_or(0.0);
        let direct_hw = direct.lambda_hw.get(l - 1).copied().unwrap_or(0.0);
        let derived_l = reference.lambda.get(l - 1).copied().unwrap_or(0.0);
        // First-order error propagation through
        // (a_l - 2 a_{l+1} + a_{l+2}) / alpha1.
        let hw = &reference.alpha_hat_hw;
        let derived_hw = (hw[l - 1] + 2.0 * hw[l] + hw[l + 1]) / alpha1
            + derived_l.abs() * hw[1] / alpha1;
        let joint = (direct_hw.powi(2) + derived_hw.powi(2)).sqrt();
        let gap = (direct_l - derived_l).abs();
        let ratio = gap / joint;
        worst_ratio = worst_ratio.max(ratio);
        rows.push_str(&format!(
            "l={l}: direct {direct_l:.5} vs derived {derived_l:.5} (joint 99% {joint:.5}); "
        ));
    }
    // Kac-style normalization: mean cluster size times extremal index.
    let kac = direct.mean_given_hit * alpha1;
    let kac_gap = (kac - 1.0).abs();
    let kac_ci = Z99 * direct.mean_given_hit_se * alpha1
        + direct.mean_given_hit * reference.alpha1_hw;
    let pass = worst_ratio <= 1.0 && kac_gap <= kac_tolerance;
    Ok(CheckReport {
        name: "cluster-identities".into(),
        status: if pass {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        inputs: format!(
            "scale {n}, window {}, direct samples {} ({} windows hit), tail samples {}, seed {}",
            wb.config.estimator.k_grid[k_index],
            direct.samples,
            direct.conditioning_hits,
            reference.samples,
            wb.seed()
        ),
        measured: worst_ratio,
        bound: 1.0,
        tolerance: 0.0,
        detail: format!(
            "{rows}mean-size normalization: {kac:.4} vs 1 (gap {kac_gap:.4}, 99% interval \
             {kac_ci:.4}, pinned tolerance {kac_tolerance})"
        ),
    })
}

/// Entry-count laws converge to the compound Poisson prediction built
/// from the exact oracle: total-variation distances must decrease
/// strictly across the family and end below the configured threshold.
fn check_limit_law(wb: &mut Workbench) -> CheckResult {
    // Hypothesis diagnostics: the boundary-excess ratio must not grow,
    // and the arc count times the measure must vanish along the family.
    let excess: Vec<f64> = wb
        .schedule
        .levels
        .iter()
        .map(|l| rat_to_f64(&l.diagnostics.excess_ratio))
        .collect();
    let arc_mass: Vec<f64> = wb
        .schedule
        .levels
        .iter()
        .map(|l| l.diagnostics.arcs as f64 * rat_to_f64(&l.measure))
        .collect();
    let excess_ok = excess.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let arcs_ok = arc_mass.windows(2).all(|w| w[1] < w[0]);
    if !excess_ok || !arcs_ok {
        return Ok(CheckReport::inapplicable(
            "limit-law",
            format!(
                "small-boundary hypotheses not confirmed numerically: excess ratios {excess:?}, \
                 arc masses {arc_mass:?}"
            ),
        ));
    }
    let prediction = wb.prediction()?;
    let model = prediction.pmf.clone();
    let label = if prediction.poisson {
        format!("Poisson({:.4})", prediction.intensity)
    } else {
        format!(
            "compound Poisson(intensity {:.4}, mean cluster {:.4})",
            prediction.intensity,
            prediction.cluster.mean()
        )
    };
    let scales = wb.scales.len();
    let mut tvs = Vec::with_capacity(scales);
    for n in 0..scales {
        tvs.push(wb.entry_pmf(n).tv_to(&model));
    }
    let decreasing = tvs.windows(2).all(|w| w[1] < w[0]);
    let final_tv = *tvs.last().unwrap();
    let tv_final = wb.config.verify.tv_final;
    // Coupled inner-cylinder route: resampling the final scale against
    // its exact cylinder representation on one shared stream bounds every
    // per-count gap by the fraction of orbits that ever distinguish the
    // two sets, which in turn is bounded by horizon * measure(U \ V).
    let coupled_note = coupled_route_note(wb)?;
    let pass = decreasing && final_tv < tv_final;
    Ok(CheckReport {
        name: "limit-law".into(),
        status: if pass {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        inputs: format!(
            "{scales} scales, prediction {label}, pmf budgets {:?}, seed {}",
            (0..scales).map(|n| wb.config.pmf_samples_at(n)).collect::<Vec<_>>(),
            wb.seed()
        ),
        measured: final_tv,
        bound: tv_final,
        tolerance: 0.0,
        detail: format!(
            "total variation by scale {tvs:?}, strictly decreasing: {decreasing}; {coupled_note}"
        ),
    })
}

fn coupled_route_note(wb: &mut Workbench) -> Result<String, ConfigError> {
    let n = wb.final_index();
    let u = wb.scales[n].set.clone();
    let Some(cover) = wb.exact_cover(&u) else {
        return Ok("inner-cylinder route: no exact cylinder cover within the guard".into());
    };
    let v = cover.to_interval_union(&wb.map)?;
    let missing = u.difference(&v).measure();
    let horizon = wb.scales[n].horizon;
    let bound = rat_to_f64(&(Rat::from_integer(horizon.into()) * &missing));
    let scaled_u = wb.scales[n].scaled.clone();
    let scaled_v = wb.sampler.scale_set(&v)?;
    let samples = wb.config.estimator.samples.min(100_000);
    let (pmf_u, pmf_v, differing) = estimators::coupled_visit_pmfs(
        &wb.sampler,
        &scaled_u,
        &scaled_v,
        horizon,
        samples,
        wb.seed(),
        domain::at(domain::COUPLED, n),
    );
    let mut worst_gap = 0.0f64;
    for k in 0..pmf_u.len().max(pmf_v.len()) {
        worst_gap = worst_gap.max((pmf_u.mass(k) - pmf_v.mass(k)).abs());
    }
    let diff_frac = differing as f64 / pmf_u.total() as f64;
    let allowance = bound + 3.0 * estimators::wilson_half_width(differing, pmf_u.total());
    Ok(format!(
        "inner-cylinder route (level {}): worst per-count gap {worst_gap:.3e}, differing-orbit \
         fraction {diff_frac:.3e}, bound horizon*measure-gap = {bound:.3e} (+noise {allowance:.3e})",
        cover.level()
    ))
}

/// Finite-scale block-approximation bound: the exact entry-count pmf of a
/// cylinder target must lie within the evaluated four-term error bound of
/// the matching compound binomial law, with unit leading constant.
fn check_block_bound(wb: &mut Workbench) -> CheckResult {
    let level = wb.config.verify.block_level as usize;
    let k = wb.config.verify.block_window as usize;
    let delta = wb.config.verify.block_gap as usize;
    // The cylinder containing the first target point.
    let point = wb
        .config
        .build_observable(&wb.map)?
        .target()
        .point_list()
        .first()
        .cloned()
        .ok_or_else(|| rarelab_core::Error::EmptySet("no target point".into()))?;
    let word = wb.map.orbit_word_exact(&point, level);
    let cyl = CylinderUnion::new(level, [word.clone()])?;
    let mu = cyl.measure(&wb.map)?;
    let mu_f = rat_to_f64(&mu);
    let horizon = entry_horizon(&wb.tau, &mu)? as usize;
    let block = 2 * k + 1;
    let trials = ((horizon as f64) / block as f64).round().max(1.0) as u64;
    let j0 = level / block + 2;

    // Per-block visit law, exactly.
    let window_pmf = worddist::visit_count_pmf(&wb.map, &cyl, block, block)?;
    let p = Rat::one() - window_pmf.mass(0);
    let p_f = rat_to_f64(&p);
    let lambdas: Vec<f64> = (1..=block)
        .map(|l| rat_to_f64(&(window_pmf.mass(l) / &p)))
        .collect();
    let cb = CompoundBinomialSpec::new(trials, p_f, ClusterSizeDist::new(lambdas)?)?
        .pmf(PREDICTION_KMAX);

    // Exact entry-count pmf over the full horizon.
    let cap = horizon.min(40);
    let exact = worddist::visit_count_pmf(&wb.map, &cyl, horizon, cap)?;
    let mut measured = 0.0f64;
    let mut worst_k = 0;
    for kk in 0..=cap {
        let gap = (rat_to_f64(&exact.mass(kk)) - cb.mass(kk)).abs();
        if gap > measured {
            measured = gap;
            worst_k = kk;
        }
    }

    // The four bound terms, exactly, with unit leading constant.
    let rate = wb.map.phi_rate();
    let term_phi = rate.phi_exact((delta / 2) as u32);
    let term_delta = Rat::from_integer(((2 * k + 2) * delta).into()) * &mu;
    let term_tail = rate.phi_tail_exact(k as u32);
    let mut joint_sum = Rat::new(0.into(), 1.into());
    for j in 1..=j0 {
        joint_sum += worddist::joint_block_hit(&wb.map, &cyl, k, j)?;
    }
    let weight = &wb.tau / (Rat::from_integer(block.into()) * &mu);
    let term_joint = weight * joint_sum;
    let rhs = rat_to_f64(&(&term_phi + &term_delta + &term_tail + &term_joint));
    let ratio = measured / rhs;

    // Range condition stated with the bound; the pinned desk-scale
    // parameters sit outside it, and the bound is evaluated regardless —
    // the comparison is still exact and the condition is reported.
    let in_range = (delta * block) as f64 * mu_f < wb.tau_f;
    // Monotonicity of the two delta-dependent terms across a doubled gap.
    let mono = rate.phi_exact(delta as u32) <= term_phi
        && Rat::from_integer(((2 * k + 2) * 2 * delta).into()) * &mu >= term_delta;

    Ok(CheckReport {
        name: "block-bound".into(),
        status: CheckStatus::Fail,
        inputs: format!(
            "cylinder level {level} (word {word:?}), half-window {k}, gap {delta}, horizon \
             {horizon}, trials {trials}, per-block success {p_f:.5}"
        ),
        measured,
        bound: rhs,
        tolerance: 0.0,
        detail: format!(
            "worst exact gap {measured:.3e} at count {worst_k}; bound terms: mixing {:.4}, \
             separation {:.4}, tail {:.4}, short-range joint {:.4}; measured/bound ratio \
             {ratio:.3e} (unit leading constant); stated gap-range condition satisfied: \
             {in_range}; gap-term monotonicity across doubled separation: {mono}",
            rat_to_f64(&term_phi),
            rat_to_f64(&term_delta),
            rat_to_f64(&term_tail),
            rat_to_f64(&term_joint),
        ),
    }
    .judged())
}

/// The no-event probability at the final scale must match the predicted
/// `exp(-alpha1 * tau)` within the configured tolerance.
fn check_extreme_value(wb: &mut Workbench) -> CheckResult {
    let n = wb.final_index();
    let tau_f = wb.tau_f;
    let prediction = wb.prediction()?;
    let predicted = (-prediction.alpha1 * tau_f).exp();
    let engine_zero = prediction.pmf.mass(0);
    let pmf = wb.entry_pmf(n);
    let measured_zero = pmf.mass(0);
    let hw = pmf.half_width(0);
    let samples = pmf.total();
    let tolerance = wb.config.verify.evl_tolerance;
    Ok(CheckReport {
        name: "extreme-value".into(),
        status: CheckStatus::Fail,
        inputs: format!("scale {n}, samples {samples}, seed {}", wb.seed()),
        measured: (measured_zero - predicted).abs(),
        bound: tolerance,
        tolerance: 0.0,
        detail: format!(
            "empirical no-event probability {measured_zero:.5} (99% half-width {hw:.5}) vs \
             predicted {predicted:.5}; distribution-engine zero mass {engine_zero:.10} agrees \
             with the closed form to {:.1e}",
            (engine_zero - predicted).abs()
        ),
    }
    .judged())
}

/// Synchronized-window return tails must approach the fixed-window tails
/// as the scale deepens: the measured gaps follow the exact finite-scale
/// gaps (computed by the cylinder chain when available), decrease
/// strictly, and end within the joint confidence interval of the exact
/// final gap.
fn check_synchronized_returns(wb: &mut Workbench) -> CheckResult {
    let scales = wb.scales.len();
    let k_max = *wb.config.estimator.k_grid.last().unwrap();
    // Hypothesis: the synchronized window stays short against the scale.
    let last_product =
        wb.sync_window(scales - 1) as f64 * wb.scales[scales - 1].measure_f;
    if last_product >= 0.05 {
        return Ok(CheckReport::inapplicable(
            "synchronized-returns",
            format!("synchronized window times measure is {last_product:.3} >= 0.05"),
        ));
    }
    let mut gaps = Vec::with_capacity(scales);
    let mut joints = Vec::with_capacity(scales);
    for n in 0..scales {
        let (sync, reference) = wb.sync_pair(n)?;
        let beta2 = sync.beta.get(1).copied().unwrap_or(0.0);
        let beta2_hw = sync.beta_hw.get(1).copied().unwrap_or(0.0);
        let alpha2 = reference.alpha_hat[1];
        let alpha2_hw = reference.alpha_hat_hw[1];
        gaps.push((beta2 - alpha2).abs());
        joints.push((beta2_hw.powi(2) + alpha2_hw.powi(2)).sqrt());
    }
    // Exact finite-scale gaps via the cylinder chain, where available.
    let mut exact_gaps: Vec<Option<f64>> = Vec::with_capacity(scales);
    for n in 0..scales {
        let u = wb.scales[n].set.clone();
        let s_n = wb.sync_window(n) as usize;
        let value = wb.exact_cover(&u).and_then(|cover| {
            let beta = worddist::return_tail_dp(&wb.map, &cover, s_n, 2).ok()?;
            let alpha = worddist::return_tail_dp(&wb.map, &cover, k_max as usize, 2).ok()?;
            Some(rat_to_f64(&(&beta[1] - &alpha[1]).abs()))
        });
        exact_gaps.push(value);
    }
    let all_exact = exact_gaps.iter().all(Option::is_some);
    let measured_decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    let final_gap = *gaps.last().unwrap();
    let final_joint = *joints.last().unwrap();
    let (anchored_ok, final_anchor, exact_note) = if all_exact {
        let exact: Vec<f64> = exact_gaps.iter().map(|g| g.unwrap()).collect();
        let exact_decreasing = exact.windows(2).all(|w| w[1] < w[0]);
        let within = gaps
            .iter()
            .zip(&exact)
            .zip(&joints)
            .all(|((g, e), j)| (g - e).abs() <= *j);
        (
            exact_decreasing && within,
            *exact.last().unwrap(),
            format!(
                "exact finite-scale gaps {exact:?} (strictly decreasing: {exact_decreasing}, \
                 every measurement within its joint interval of the exact value: {within})"
            ),
        )
    } else {
        // Without the exact chain the finite-scale gap is bounded
        // structurally: the two tails differ by the first-return mass in
        // `(s, K]`, and each of those return probabilities is at most
        // `measure + arcs^2 / 2^j` for an exponentially mixing binary
        // family.
        let s_final = wb.sync_window(scales - 1);
        let allowance = f64::from(k_max - s_final) * wb.scales[scales - 1].measure_f
            + 4.0 * 0.5f64.powi(s_final as i32);
        (
            true,
            allowance,
            format!(
                "exact chain route unavailable; structural tail allowance {allowance:.3e} \
                 covers returns in ({s_final}, {k_max}]"
            ),
        )
    };
    let final_ok = final_gap <= final_anchor + final_joint;
    let pass = measured_decreasing && anchored_ok && final_ok;
    Ok(CheckReport {
        name: "synchronized-returns".into(),
        status: if pass {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        inputs: format!(
            "windows {:?} vs fixed {k_max}, budget {} per estimate, seed {}",
            (0..scales).map(|n| wb.sync_window(n)).collect::<Vec<_>>(),
            wb.config.beta_samples(),
            wb.seed()
        ),
        measured: final_gap,
        bound: final_anchor + final_joint,
        tolerance: 0.0,
        detail: format!(
            "measured gaps {gaps:?} (strictly decreasing: {measured_decreasing}), joint 99% \
             intervals {joints:?}; {exact_note}"
        ),
    })
}

/// Certified period growth dictates the prediction family: unbounded
/// essential period selects the Poisson law, bounded period the compound
/// law; the certified periods must match the oracle prediction.
fn check_period_growth(wb: &mut Workbench) -> CheckResult {
    let k_star = wb.config.estimator.prediction_window;
    let cap = (2 * k_star + 2) as usize;
    let mut periods: Vec<Option<usize>> = Vec::with_capacity(wb.scales.len());
    for ctx in &wb.scales {
        periods.push(oracle::essential_period(&wb.map, &ctx.set, cap)?);
    }
    let prediction = wb.prediction()?;
    let poisson = prediction.poisson;
    // Treat "no period up to the cap" as the cap itself for trend
    // comparisons; the cap exceeds every bound we assert against.
    let values: Vec<usize> = periods.iter().map(|p| p.unwrap_or(cap + 1)).collect();
    let final_period = *values.last().unwrap();
    let (pass, requirement) = if poisson {
        let growing = values.windows(2).all(|w| w[1] > w[0]);
        let cleared = final_period > 2 * k_star as usize;
        (
            growing && cleared,
            format!(
                "Poisson selected: periods must grow strictly and clear twice the prediction \
                 window ({})",
                2 * k_star
            ),
        )
    } else {
        let bounded = values.iter().all(|p| *p == values[0]);
        let inside = final_period <= k_star as usize;
        (
            bounded && inside,
            format!(
                "compound law selected: periods must stay constant and within the prediction \
                 window ({k_star})"
            ),
        )
    };
    // Cross-validation against a declared orbit period, when the target
    // carries one.
    let declared = wb.config.target.period;
    let declared_note = match declared {
        Some(p) if !poisson => {
            let consistent = final_period == p as usize;
            format!("; declared orbit period {p}, certified {final_period}, consistent: {consistent}")
        }
        _ => String::new(),
    };
    Ok(CheckReport {
        name: "period-growth".into(),
        status: if pass {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        inputs: format!("period cap {cap}, prediction window {k_star}"),
        measured: final_period as f64,
        bound: if poisson { 2.0 * f64::from(k_star) } else { f64::from(k_star) },
        tolerance: 0.0,
        detail: format!(
            "certified essential periods {values:?} (cap {cap} means none found); {requirement}\
             {declared_note}"
        ),
    })
}
