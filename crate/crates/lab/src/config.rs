//! Declarative experiment configuration.
//!
//! All measures and endpoints are written as exact fraction strings
//! (`"1/2"`, `"0"`, `"3/7"`) so that exactness survives serialization:
//! the resolved config embedded in every run re-parses to the identical
//! experiment.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use rarelab_core::map::PiecewiseAffineMap;
use rarelab_core::target::{Observable, TargetSet};
use rarelab_core::Rat;

/// A configuration or file error with enough context to locate the field.
#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Parse(String),
    Field { field: String, detail: String },
    Core(rarelab_core::Error),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "config io error: {e}"),
            ConfigError::Parse(e) => write!(f, "config parse error: {e}"),
            ConfigError::Field { field, detail } => {
                write!(f, "config field `{field}`: {detail}")
            }
            ConfigError::Core(e) => write!(f, "config rejected by exact layer: {e}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<std::io::Error> for ConfigError {
    fn from(e: std::io::Error) -> Self {
        ConfigError::Io(e)
    }
}

impl From<rarelab_core::Error> for ConfigError {
    fn from(e: rarelab_core::Error) -> Self {
        ConfigError::Core(e)
    }
}

fn parse_rat(field: &str, s: &str) -> Result<Rat, ConfigError> {
    Rat::from_str(s.trim()).map_err(|e| ConfigError::Field {
        field: field.to_string(),
        detail: format!("`{s}` is not an exact fraction: {e}"),
    })
}

/// Complete declarative description of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub map: MapConfig,
    pub target: TargetConfig,
    pub schedule: ScheduleConfig,
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

/// Branch lengths of the piecewise-affine full-branch map.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    /// Exact fractions summing to 1, in branch order.
    pub branches: Vec<String>,
}

/// The rare set: metric balls shrink around this target.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub kind: TargetKind,
    /// `kind = "points"`: the finite target set, exact fractions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<String>>,
    /// `kind = "periodic-orbit"`: one point of the orbit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<String>,
    /// `kind = "periodic-orbit"`: its exact period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<u32>,
    /// `kind = "cantor"`: construction depth of the endpoint set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    Points,
    PeriodicOrbit,
    Cantor,
}

/// The scale schedule: window lengths `w_n = w0 * growth^n`, with the
/// threshold at each scale calibrated so `w_n * mu(U_n)` equals `tau`
/// exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Target mean number of events per window, exact fraction.
    pub tau: String,
    pub base_window: u64,
    pub scales: u32,
    /// Geometric growth factor between consecutive windows (>= 2).
    pub growth: u64,
}

/// Monte-Carlo budgets and the short-return window grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Default sample count per estimate.
    pub samples: u64,
    pub seed: u64,
    /// Short-return windows `K` for the cluster statistics.
    pub k_grid: Vec<u32>,
    /// Largest cluster size tracked explicitly.
    pub ell_max: usize,
    /// Window for the exact-oracle cluster prediction; must stay inside
    /// the refinement guard of the exact layer.
    #[serde(default = "default_prediction_window")]
    pub prediction_window: u32,
    /// Optional per-scale sample counts for the entry-time histograms
    /// (coarse scales need more samples for a clean convergence trend).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pmf_samples: Option<Vec<u64>>,
    /// Optional larger budget for the cluster-size ratio estimator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_samples: Option<u64>,
    /// Optional budget for the synchronized-return trend estimates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_samples: Option<u64>,
    /// Optional large budget for the hitting-time ratio estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_samples: Option<u64>,
    /// Optional budget for the window/horizon equivalence comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equivalence_samples: Option<u64>,
}

fn default_prediction_window() -> u32 {
    12
}

/// Which verification checks to run and their thresholds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Check names; empty list means all.
    #[serde(default)]
    pub checks: Vec<String>,
    /// Final-scale total-variation threshold for the limit-law check.
    #[serde(default = "default_tv_final")]
    pub tv_final: f64,
    /// Tolerance for the extreme-value zero-event probability.
    #[serde(default = "default_evl_tolerance")]
    pub evl_tolerance: f64,
    /// Cylinder level for the block-approximation bound check.
    #[serde(default = "default_block_level")]
    pub block_level: u32,
    /// Half-window `K` for the block-approximation bound check.
    #[serde(default = "default_block_window")]
    pub block_window: u32,
    /// Separation `Delta` for the block-approximation bound check.
    #[serde(default = "default_block_gap")]
    pub block_gap: u32,
}

fn default_tv_final() -> f64 {
    0.03
}
fn default_evl_tolerance() -> f64 {
    0.01
}
fn default_block_level() -> u32 {
    6
}
fn default_block_window() -> u32 {
    3
}
fn default_block_gap() -> u32 {
    12
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            checks: Vec::new(),
            tv_final: default_tv_final(),
            evl_tolerance: default_evl_tolerance(),
            block_level: default_block_level(),
            block_window: default_block_window(),
            block_gap: default_block_gap(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.map.branches.is_empty() {
            return Err(ConfigError::Field {
                field: "map.branches".into(),
                detail: "at least one branch required".into(),
            });
        }
        if self.schedule.scales == 0 {
            return Err(ConfigError::Field {
                field: "schedule.scales".into(),
                detail: "need at least one scale".into(),
            });
        }
        if self.schedule.growth < 2 {
            return Err(ConfigError::Field {
                field: "schedule.growth".into(),
                detail: "geometric growth factor must be >= 2".into(),
            });
        }
        if self.estimator.samples == 0 {
            return Err(ConfigError::Field {
                field: "estimator.samples".into(),
                detail: "sample budget must be positive".into(),
            });
        }
        if self.estimator.ell_max < 1 {
            return Err(ConfigError::Field {
                field: "estimator.ell_max".into(),
                detail: "must track at least one cluster size".into(),
            });
        }
        if self.estimator.k_grid.is_empty() {
            return Err(ConfigError::Field {
                field: "estimator.k_grid".into(),
                detail: "need at least one short-return window".into(),
            });
        }
        if self.estimator.k_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::Field {
                field: "estimator.k_grid".into(),
                detail: "windows must be strictly increasing".into(),
            });
        }
        if let Some(per_scale) = &self.estimator.pmf_samples {
            if per_scale.len() != self.schedule.scales as usize {
                return Err(ConfigError::Field {
                    field: "estimator.pmf_samples".into(),
                    detail: format!(
                        "expected {} per-scale entries, got {}",
                        self.schedule.scales,
                        per_scale.len()
                    ),
                });
            }
        }
        match self.target.kind {
            TargetKind::Points => {
                if self.target.points.as_ref().map_or(true, Vec::is_empty) {
                    return Err(ConfigError::Field {
                        field: "target.points".into(),
                        detail: "kind \"points\" needs a nonempty point list".into(),
                    });
                }
            }
            TargetKind::PeriodicOrbit => {
                if self.target.point.is_none() || self.target.period.is_none() {
                    return Err(ConfigError::Field {
                        field: "target".into(),
                        detail: "kind \"periodic-orbit\" needs `point` and `period`".into(),
                    });
                }
            }
            TargetKind::Cantor => {
                if self.target.level.is_none() {
                    return Err(ConfigError::Field {
                        field: "target.level".into(),
                        detail: "kind \"cantor\" needs a construction level".into(),
                    });
                }
            }
        }
        // Surface malformed fractions and inconsistent exact data at load
        // time rather than mid-run: dry-run the exact constructors.
        let map = self.build_map()?;
        self.build_observable(&map)?;
        self.tau()?;
        Ok(())
    }

    /// Builds the exact map from the branch fractions.
    pub fn build_map(&self) -> Result<PiecewiseAffineMap, ConfigError> {
        let lengths: Vec<Rat> = self
            .map
            .branches
            .iter()
            .map(|s| parse_rat("map.branches", s))
            .collect::<Result<_, _>>()?;
        Ok(PiecewiseAffineMap::from_branch_lengths(&lengths)?)
    }

    /// Builds the target observable.
    pub fn build_observable(&self, map: &PiecewiseAffineMap) -> Result<Observable, ConfigError> {
        let target = match self.target.kind {
            TargetKind::Points => {
                let pts: Vec<Rat> = self
                    .target
                    .points
                    .as_ref()
                    .unwrap()
                    .iter()
                    .map(|s| parse_rat("target.points", s))
                    .collect::<Result<_, _>>()?;
                TargetSet::points(pts)?
            }
            TargetKind::PeriodicOrbit => {
                let point = parse_rat("target.point", self.target.point.as_ref().unwrap())?;
                TargetSet::periodic_orbit(map, &point, self.target.period.unwrap() as usize)?
            }
            TargetKind::Cantor => TargetSet::cantor_endpoints(self.target.level.unwrap())?,
        };
        Ok(Observable::new(target))
    }

    /// Parses the per-window event rate `tau`.
    pub fn tau(&self) -> Result<Rat, ConfigError> {
        let tau = parse_rat("schedule.tau", &self.schedule.tau)?;
        if tau <= Rat::new(0.into(), 1.into()) {
            return Err(ConfigError::Field {
                field: "schedule.tau".into(),
                detail: "must be positive".into(),
            });
        }
        Ok(tau)
    }

    /// The geometric window sequence `w0 * growth^n`.
    pub fn windows(&self) -> Result<Vec<u64>, ConfigError> {
        Ok(rarelab_core::target::geometric_windows(
            self.schedule.base_window,
            self.schedule.growth,
            self.schedule.scales as usize,
        )?)
    }

    /// Sample budget for the entry-time histogram at scale index `n`.
    pub fn pmf_samples_at(&self, n: usize) -> u64 {
        self.estimator
            .pmf_samples
            .as_ref()
            .and_then(|v| v.get(n).copied())
            .unwrap_or(self.estimator.samples)
    }

    pub fn lambda_samples(&self) -> u64 {
        self.estimator
            .lambda_samples
            .unwrap_or(self.estimator.samples)
    }

    pub fn beta_samples(&self) -> u64 {
        self.estimator.beta_samples.unwrap_or(self.estimator.samples)
    }

    pub fn ratio_samples(&self) -> u64 {
        self.estimator.ratio_samples.unwrap_or(self.estimator.samples)
    }

    pub fn equivalence_samples(&self) -> u64 {
        self.estimator
            .equivalence_samples
            .unwrap_or(self.estimator.samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXED_POINT: &str = r#"
        [map]
        branches = ["1/2", "1/2"]

        [target]
        kind = "points"
        points = ["0"]

        [schedule]
        tau = "1"
        base_window = 256
        scales = 4
        growth = 4

        [estimator]
        samples = 1000
        seed = 7
        k_grid = [5, 10, 20]
        ell_max = 5
    "#;

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml_str(FIXED_POINT).unwrap();
        let text = cfg.to_toml_string();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(text, back.to_toml_string());
    }

    #[test]
    fn builds_exact_map_and_target() {
        let cfg = ExperimentConfig::from_toml_str(FIXED_POINT).unwrap();
        let map = cfg.build_map().unwrap();
        assert_eq!(map.branch_count(), 2);
        let obs = cfg.build_observable(&map).unwrap();
        assert_eq!(obs.target().point_list().len(), 1);
        assert_eq!(cfg.windows().unwrap(), vec![256, 1024, 4096, 16384]);
    }

    #[test]
    fn rejects_unknown_fields_with_diagnostic() {
        let bad = FIXED_POINT.replace("seed = 7", "seed = 7\nbogus = 1");
        let err = ExperimentConfig::from_toml_str(&bad).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn rejects_inexact_fraction() {
        let bad = FIXED_POINT.replace("tau = \"1\"", "tau = \"0.5x\"");
        let err = ExperimentConfig::from_toml_str(&bad).unwrap_err();
        assert!(err.to_string().contains("tau"), "{err}");
    }

    #[test]
    fn rejects_decreasing_window_grid() {
        let bad = FIXED_POINT.replace("[5, 10, 20]", "[5, 20, 10]");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn periodic_orbit_kind_requires_period() {
        let bad = FIXED_POINT
            .replace("kind = \"points\"", "kind = \"periodic-orbit\"")
            .replace("points = [\"0\"]", "point = \"1/3\"");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
        let good = bad.replace("point = \"1/3\"", "point = \"1/3\"\nperiod = 2");
        let cfg = ExperimentConfig::from_toml_str(&good).unwrap();
        let map = cfg.build_map().unwrap();
        let obs = cfg.build_observable(&map).unwrap();
        assert_eq!(obs.target().point_list().len(), 2);
    }
}
