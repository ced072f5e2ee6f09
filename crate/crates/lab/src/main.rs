//! Command-line driver: calibrate, estimate, verify, report.
//!
//! Exit codes: 0 success, 1 at least one verification check failed,
//! 2 configuration or calibration error.  Results are byte-identical for
//! any `--threads` value.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rarelab::config::{ConfigError, ExperimentConfig};
use rarelab::estimators::{self, domain, Z99};
use rarelab::report::{
    self, status_str, EstimateRow, PmfRow, RunSummary, RunWriter, ThresholdRow,
};
use rarelab::verify::{self, Workbench};

#[derive(Parser)]
#[command(
    name = "rarelab",
    version,
    about = "Numerical laboratory for rare-event limit laws of circle maps"
)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores); never affects the results.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Directory for run artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Calibrate the nested family and print the threshold table.
    Calibrate,
    /// Run the estimators and write the estimate tables.
    Estimate,
    /// Run verification checks; exits 1 if any check fails.
    Verify,
    /// Merge previously written run directories into one report.
    Report {
        /// Run directories to merge.
        runs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        // Ignore the error when a pool already exists (repeated in-process
        // invocations under tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, ConfigError> {
    match cli.cmd {
        Cmd::Report { runs } => {
            let out = cli
                .out
                .ok_or_else(|| ConfigError::Parse("report requires --out".into()))?;
            if runs.is_empty() {
                return Err(ConfigError::Parse("report requires at least one run".into()));
            }
            let merged = report::merge_runs(&out, &runs)?;
            println!(
                "merged {} runs: {} pass, {} fail, {} inapplicable",
                merged.runs.len(),
                merged.checks_pass,
                merged.checks_fail,
                merged.checks_inapplicable
            );
            Ok(if merged.checks_fail == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        cmd => {
            let path = cli
                .config
                .ok_or_else(|| ConfigError::Parse("--config is required".into()))?;
            let mut config = ExperimentConfig::from_path(&path)?;
            if let Some(seed) = cli.seed {
                config.estimator.seed = seed;
            }
            match cmd {
                Cmd::Calibrate => cmd_calibrate(&config, cli.out.as_deref()),
                Cmd::Estimate => cmd_estimate(&config, cli.out.as_deref()),
                Cmd::Verify => cmd_verify(&config, cli.out.as_deref()),
                Cmd::Report { .. } => unreachable!("handled above"),
            }
        }
    }
}

fn threshold_rows(wb: &Workbench) -> Vec<ThresholdRow> {
    wb.schedule
        .levels
        .iter()
        .map(|level| {
            let product = rarelab_core::Rat::from_integer(level.window.into()) * &level.measure;
            ThresholdRow {
                scale: level.index,
                window: level.window,
                threshold: level.threshold,
                measure: level.measure.to_string(),
                product: product.to_string(),
                arcs: level.diagnostics.arcs,
            }
        })
        .collect()
}

fn cmd_calibrate(config: &ExperimentConfig, out: Option<&Path>) -> Result<ExitCode, ConfigError> {
    let wb = Workbench::new(config)?;
    let rows = threshold_rows(&wb);
    println!("scale  window    threshold   measure           window*measure  arcs");
    for r in &rows {
        println!(
            "{:<6} {:<9} {:<11.6} {:<17} {:<15} {}",
            r.scale, r.window, r.threshold, r.measure, r.product, r.arcs
        );
    }
    if let Some(dir) = out {
        let writer = RunWriter::new(dir)?;
        writer.write_config(config)?;
        writer.write_thresholds(&rows)?;
        println!("wrote {}", writer.dir().display());
    }
    Ok(ExitCode::SUCCESS)
}

fn pmf_rows(pmf: &estimators::EmpiricalPmf) -> Vec<PmfRow> {
    (0..pmf.len())
        .map(|k| PmfRow {
            count: k,
            mass: pmf.mass(k),
            half_width: pmf.half_width(k),
        })
        .collect()
}

fn cmd_estimate(config: &ExperimentConfig, out: Option<&Path>) -> Result<ExitCode, ConfigError> {
    let mut wb = Workbench::new(config)?;
    let seed = wb.seed();
    let scales = wb.scales.len();
    let final_n = scales - 1;
    let mut rows: Vec<EstimateRow> = Vec::new();
    let mut pmf_tables: Vec<(usize, Vec<PmfRow>)> = Vec::new();

    // Entry-count histograms and no-event probabilities, per scale.
    for n in 0..scales {
        let window = wb.scales[n].window;
        let pmf = wb.entry_pmf(n).clone();
        pmf_tables.push((n, pmf_rows(&pmf)));
        rows.push(
            EstimateRow {
                quantity: "no-event-probability".into(),
                scale: n,
                window,
                index: 0,
                estimate: pmf.mass(0),
                ci_low: pmf.mass(0) - pmf.half_width(0),
                ci_high: pmf.mass(0) + pmf.half_width(0),
                n_samples: pmf.total(),
                seed,
                flag: String::new(),
            }
            .flagged(),
        );
    }

    // Short-return tails and derived cluster sizes across the window
    // grid, at the final scale.
    let k_grid = config.estimator.k_grid.clone();
    for (k_index, &k) in k_grid.iter().enumerate() {
        let stats = wb.cluster(final_n, k_index)?.clone();
        for i in 1..stats.alpha_hat.len() {
            rows.push(
                EstimateRow {
                    quantity: "return-tail".into(),
                    scale: final_n,
                    window: u64::from(k),
                    index: i,
                    estimate: stats.alpha_hat[i],
                    ci_low: stats.alpha_hat[i] - stats.alpha_hat_hw[i],
                    ci_high: stats.alpha_hat[i] + stats.alpha_hat_hw[i],
                    n_samples: stats.samples,
                    seed,
                    flag: String::new(),
                }
                .flagged(),
            );
        }
        for (l, lam) in stats.lambda.iter().enumerate() {
            rows.push(EstimateRow {
                quantity: "cluster-size-derived".into(),
                scale: final_n,
                window: u64::from(k),
                index: l + 1,
                estimate: *lam,
                ci_low: f64::NAN,
                ci_high: f64::NAN,
                n_samples: stats.samples,
                seed,
                flag: String::new(),
            });
        }
    }

    // Direct cluster sizes over the widest window.
    let direct = wb.window_cluster_final()?.clone();
    let k_max = u64::from(*k_grid.last().unwrap());
    for (l, lam) in direct.lambda.iter().enumerate() {
        rows.push(
            EstimateRow {
                quantity: "cluster-size-direct".into(),
                scale: final_n,
                window: k_max,
                index: l + 1,
                estimate: *lam,
                ci_low: lam - direct.lambda_hw[l],
                ci_high: lam + direct.lambda_hw[l],
                n_samples: direct.samples,
                seed,
                flag: String::new(),
            }
            .flagged(),
        );
    }
    rows.push(EstimateRow {
        quantity: "mean-cluster-size".into(),
        scale: final_n,
        window: k_max,
        index: 0,
        estimate: direct.mean_given_hit,
        ci_low: direct.mean_given_hit - Z99 * direct.mean_given_hit_se,
        ci_high: direct.mean_given_hit + Z99 * direct.mean_given_hit_se,
        n_samples: direct.conditioning_hits,
        seed,
        flag: String::new(),
    });

    // Extremal index by both routes at the final scale.
    let stats = wb.cluster(final_n, k_grid.len() - 1)?.clone();
    let measure_f = wb.scales[final_n].measure_f;
    let extremal = estimators::extremal_index(
        &wb.sampler,
        &wb.scales[final_n].scaled,
        &stats,
        measure_f,
        config.ratio_samples(),
        seed,
        domain::at(domain::RATIO, final_n),
    );
    for (quantity, est, hw) in [
        (
            "extremal-index-conditional",
            extremal.conditional,
            extremal.conditional_hw,
        ),
        ("extremal-index-ratio", extremal.ratio, extremal.ratio_hw),
    ] {
        rows.push(
            EstimateRow {
                quantity: quantity.into(),
                scale: final_n,
                window: u64::from(extremal.window),
                index: 0,
                estimate: est,
                ci_low: est - hw,
                ci_high: est + hw,
                n_samples: if quantity.ends_with("ratio") {
                    config.ratio_samples()
                } else {
                    stats.samples
                },
                seed,
                flag: if extremal.routes_agree() {
                    String::new()
                } else {
                    "routes-disagree".into()
                },
            }
            .flagged(),
        );
    }

    // Synchronized return tails per scale.
    for n in 0..scales {
        let s_n = wb.sync_window(n);
        let (sync, _) = wb.sync_pair(n)?.clone();
        for (i, b) in sync.beta.iter().enumerate().skip(1) {
            rows.push(
                EstimateRow {
                    quantity: "sync-return-tail".into(),
                    scale: n,
                    window: u64::from(s_n),
                    index: i,
                    estimate: *b,
                    ci_low: b - sync.beta_hw[i],
                    ci_high: b + sync.beta_hw[i],
                    n_samples: sync.samples,
                    seed,
                    flag: String::new(),
                }
                .flagged(),
            );
        }
    }

    let flagged = rows.iter().filter(|r| !r.flag.is_empty()).count();
    println!(
        "{} estimates across {} scales ({} flagged)",
        rows.len(),
        scales,
        flagged
    );
    for r in rows.iter().filter(|r| !r.flag.is_empty()) {
        println!(
            "  flagged: {} scale {} window {} index {}: {} ({})",
            r.quantity, r.scale, r.window, r.index, r.estimate, r.flag
        );
    }
    if let Some(dir) = out {
        let writer = RunWriter::new(dir)?;
        let digest = writer.write_config(config)?;
        writer.write_thresholds(&threshold_rows(&wb))?;
        writer.write_estimates(&rows)?;
        for (n, table) in &pmf_tables {
            writer.write_pmf(*n, table)?;
        }
        writer.write_summary(&RunSummary::from_checks(digest, seed, scales, &[]))?;
        println!("wrote {}", writer.dir().display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(config: &ExperimentConfig, out: Option<&Path>) -> Result<ExitCode, ConfigError> {
    let mut wb = Workbench::new(config)?;
    let checks = verify::run_checks(&mut wb, &config.verify.checks);
    for c in &checks {
        println!(
            "{:<13} {:<22} measured {:>12.5e}  bound {:>12.5e}",
            status_str(c.status),
            c.name,
            c.measured,
            c.bound + c.tolerance
        );
    }
    let failed = checks
        .iter()
        .filter(|c| c.status == verify::CheckStatus::Fail)
        .count();
    if let Some(dir) = out {
        let writer = RunWriter::new(dir)?;
        let digest = writer.write_config(config)?;
        writer.write_thresholds(&threshold_rows(&wb))?;
        writer.write_checks(&checks)?;
        writer.write_summary(&RunSummary::from_checks(
            digest,
            wb.seed(),
            wb.scales.len(),
            &checks,
        ))?;
        println!("wrote {}", writer.dir().display());
    }
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
