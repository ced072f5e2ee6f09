//! Deterministic run artifacts.
//!
//! A run directory holds plain CSV tables, a JSON copy of the check
//! reports, the fully resolved configuration, and a summary keyed by a
//! digest of that configuration.  Nothing here depends on time, host,
//! thread count, or map iteration order, so rerunning a command into a
//! fresh directory reproduces every file byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ExperimentConfig};
use crate::verify::{CheckReport, CheckStatus};

/// 64-bit FNV-1a digest, hex encoded; stable across platforms.
pub fn digest(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// One calibrated scale, with the exact measure kept as a fraction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub scale: usize,
    pub window: u64,
    pub threshold: f64,
    /// Exact `measure(U_n)` as a fraction string.
    pub measure: String,
    /// Exact `window * measure` as a fraction string.
    pub product: String,
    pub arcs: usize,
}

/// One scalar estimate with its 99% confidence interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateRow {
    pub quantity: String,
    pub scale: usize,
    /// Return/observation window the estimate refers to (0 if not windowed).
    pub window: u64,
    /// Cluster size or count index the estimate refers to (0 if scalar).
    pub index: usize,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_samples: u64,
    pub seed: u64,
    /// Empty, or a short reason the row deserves suspicion.
    pub flag: String,
}

impl EstimateRow {
    /// Flags rows whose interval is too wide to carry information.
    pub fn flagged(mut self) -> Self {
        let hw = (self.ci_high - self.ci_low) / 2.0;
        if !self.estimate.is_finite() {
            self.flag = "not-finite".into();
        } else if hw > 0.25 * self.estimate.abs().max(0.04) {
            self.flag = "wide-interval".into();
        }
        self
    }
}

/// One pmf mass point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PmfRow {
    pub count: usize,
    pub mass: f64,
    pub half_width: f64,
}

/// Roll-up of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_digest: String,
    pub seed: u64,
    pub scales: usize,
    pub checks_pass: usize,
    pub checks_fail: usize,
    pub checks_inapplicable: usize,
    /// "pass" when nothing failed.
    pub status: String,
}

impl RunSummary {
    pub fn from_checks(
        config_digest: String,
        seed: u64,
        scales: usize,
        checks: &[CheckReport],
    ) -> Self {
        let count = |s: CheckStatus| checks.iter().filter(|c| c.status == s).count();
        let fail = count(CheckStatus::Fail);
        RunSummary {
            config_digest,
            seed,
            scales,
            checks_pass: count(CheckStatus::Pass),
            checks_fail: fail,
            checks_inapplicable: count(CheckStatus::Inapplicable),
            status: if fail == 0 { "pass" } else { "fail" }.into(),
        }
    }
}

/// Writes the artifact files of one run directory.
pub struct RunWriter {
    dir: PathBuf,
}

impl RunWriter {
    pub fn new(dir: &Path) -> Result<Self, ConfigError> {
        fs::create_dir_all(dir)?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<(), ConfigError> {
        let path = self.dir.join(name);
        let mut writer = csv::Writer::from_path(&path)
            .map_err(|e| ConfigError::Parse(format!("cannot write {}: {e}", path.display())))?;
        for row in rows {
            writer
                .serialize(row)
                .map_err(|e| ConfigError::Parse(format!("cannot serialize row: {e}")))?;
        }
        writer
            .flush()
            .map_err(|e| ConfigError::Parse(format!("cannot flush {}: {e}", path.display())))?;
        Ok(())
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), ConfigError> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| ConfigError::Parse(format!("cannot serialize {name}: {e}")))?;
        fs::write(self.dir.join(name), text + "\n")?;
        Ok(())
    }

    /// Writes the resolved configuration and returns its digest.
    pub fn write_config(&self, config: &ExperimentConfig) -> Result<String, ConfigError> {
        let text = config.to_toml_string();
        fs::write(self.dir.join("config.toml"), &text)?;
        Ok(digest(text.as_bytes()))
    }

    pub fn write_thresholds(&self, rows: &[ThresholdRow]) -> Result<(), ConfigError> {
        self.csv("thresholds.csv", rows)
    }

    pub fn write_estimates(&self, rows: &[EstimateRow]) -> Result<(), ConfigError> {
        self.csv("estimates.csv", rows)
    }

    pub fn write_pmf(&self, scale: usize, rows: &[PmfRow]) -> Result<(), ConfigError> {
        self.csv(&format!("entry_pmf_scale_{scale}.csv"), rows)
    }

    pub fn write_checks(&self, checks: &[CheckReport]) -> Result<(), ConfigError> {
        #[derive(Serialize)]
        struct CheckRow<'a> {
            name: &'a str,
            status: &'a str,
            measured: f64,
            bound: f64,
            tolerance: f64,
            inputs: &'a str,
        }
        let rows: Vec<CheckRow<'_>> = checks
            .iter()
            .map(|c| CheckRow {
                name: &c.name,
                status: status_str(c.status),
                measured: c.measured,
                bound: c.bound,
                tolerance: c.tolerance,
                inputs: &c.inputs,
            })
            .collect();
        self.csv("checks.csv", &rows)?;
        self.json("checks.json", &checks)
    }

    pub fn write_summary(&self, summary: &RunSummary) -> Result<(), ConfigError> {
        self.json("summary.json", summary)
    }
}

pub fn status_str(status: CheckStatus) -> &'static str {
    match status {
        CheckStatus::Pass => "pass",
        CheckStatus::Fail => "fail",
        CheckStatus::Inapplicable => "inapplicable",
    }
}

/// Merged view over several run directories.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MergedReport {
    pub runs: Vec<MergedRun>,
    pub checks_pass: usize,
    pub checks_fail: usize,
    pub checks_inapplicable: usize,
    pub status: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MergedRun {
    pub run: String,
    pub summary: RunSummary,
    pub checks: Vec<CheckReport>,
}

/// Reads `summary.json` and `checks.json` from each run directory and
/// writes a combined table and summary into `out`.
pub fn merge_runs(out: &Path, runs: &[PathBuf]) -> Result<MergedReport, ConfigError> {
    let mut merged = Vec::with_capacity(runs.len());
    for run in runs {
        let summary: RunSummary = read_json(&run.join("summary.json"))?;
        let checks: Vec<CheckReport> = read_json(&run.join("checks.json"))?;
        merged.push(MergedRun {
            run: run.display().to_string(),
            summary,
            checks,
        });
    }
    let count = |s: CheckStatus| {
        merged
            .iter()
            .flat_map(|r| &r.checks)
            .filter(|c| c.status == s)
            .count()
    };
    let fail = count(CheckStatus::Fail);
    let report = MergedReport {
        checks_pass: count(CheckStatus::Pass),
        checks_fail: fail,
        checks_inapplicable: count(CheckStatus::Inapplicable),
        status: if fail == 0 { "pass" } else { "fail" }.into(),
        runs: merged,
    };
    let writer = RunWriter::new(out)?;
    #[derive(Serialize)]
    struct MergedRow<'a> {
        run: &'a str,
        name: &'a str,
        status: &'a str,
        measured: f64,
        bound: f64,
    }
    let rows: Vec<MergedRow<'_>> = report
        .runs
        .iter()
        .flat_map(|r| {
            r.checks.iter().map(move |c| MergedRow {
                run: &r.run,
                name: &c.name,
                status: status_str(c.status),
                measured: c.measured,
                bound: c.bound,
            })
        })
        .collect();
    writer.csv("merged_checks.csv", &rows)?;
    writer.json("merged.json", &report)?;
    Ok(report)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError::Parse(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| ConfigError::Parse(format!("cannot parse {}: {e}", path.display())))
}
