use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use mfon_cli::checks::{calibrate, limit_check, stein_diagnostics};
use mfon_cli::manifest::{usage, RunOptions, RunManifest, StatisticChoice, UsageError};
use mfon_cli::run::{run_sample, worker_count, SampleRun};
use mfon_cli::tables::{density_csv, rate_function_csv, thermo_scan};
use mfon_core::model::Regime;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "mfon", version, about = "Mean-field O(N) spin model experiments")]
struct Cli {
    /// Log level: error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ManifestSource {
    /// JSON run manifest; excludes the other run options.
    #[arg(long, conflicts_with = "config")]
    manifest: Option<PathBuf>,
    /// Flat `key = value` config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    options: RunOptions,
}

impl ManifestSource {
    fn resolve(self) -> anyhow::Result<RunManifest> {
        if let Some(path) = self.manifest {
            if self.options != RunOptions::default() {
                return usage("run options cannot be combined with --manifest");
            }
            return RunManifest::load(&path);
        }
        let base = match &self.config {
            Some(path) => RunOptions::load(path)?,
            None => RunOptions::default(),
        };
        self.options.over(base).build()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate b, magnetization, free energy and Φ″ over a β grid.
    ThermoScan {
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 0.0)]
        beta_min: f64,
        #[arg(long)]
        beta_max: f64,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        /// CSV destination (stdout if absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run chains and write samples.csv, summary.json and manifest.json.
    Sample {
        #[command(flatten)]
        source: ManifestSource,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a sample run with its limit law.
    LimitCheck {
        /// Directory written by `sample`.
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        regime: Regime,
        /// Component of the subcritical vector to test.
        #[arg(long, default_value_t = 0)]
        component: usize,
        /// JSON report destination (stdout if absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the drift and quadratic variation of exchangeable pairs.
    SteinDiagnostics {
        #[command(flatten)]
        source: ManifestSource,
        /// Pairs drawn from each recorded configuration.
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        /// Directory for report.json and bins.csv (report to stdout if absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate the rate function I_β(r).
    RateFunction {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 10.0)]
        r_max: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate the critical limit density and its CDF.
    Density {
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 60.0)]
        t_max: f64,
        #[arg(long, default_value_t = 121)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate c_N from a critical run with β = N.
    Calibrate {
        #[command(flatten)]
        source: ManifestSource,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Runs a command; `Ok(false)` means a check failed.
fn execute(command: Command) -> anyhow::Result<bool> {
    match command {
        Command::ThermoScan { dim, beta_min, beta_max, step, out } => {
            let scan = thermo_scan(dim, beta_min, beta_max, step)?;
            emit(out.as_deref(), &scan.to_csv())?;
            match scan.beta_c {
                Some(b) => log::info!("first ordered beta: {b} (N = {dim})"),
                None => log::info!("no ordered beta in range"),
            }
            Ok(scan.failed_rows == 0)
        }
        Command::Sample { source, out } => {
            let m = source.resolve()?;
            let run = run_sample(&m, worker_count(m.chains))?;
            let summary = run.write_dir(&out)?;
            log::info!("{} samples written to {}", summary.samples, out.display());
            Ok(true)
        }
        Command::LimitCheck { dir, regime, component, out } => {
            let run = SampleRun::read_dir(&dir)?;
            let report = limit_check(&run, regime, component)?;
            emit(out.as_deref(), &json(&report)?)?;
            Ok(report.pass)
        }
        Command::SteinDiagnostics { source, pairs, out } => {
            let m = source.resolve()?;
            let report = stein_diagnostics(&m, pairs, worker_count(m.chains))?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join("report.json"), json(&report)?)?;
                    let mut bins = Vec::new();
                    mfon_core::stats::write_bins_csv(&report.bins, &mut bins)?;
                    std::fs::write(dir.join("bins.csv"), bins)?;
                }
                None => print!("{}", json(&report)?),
            }
            Ok(report.pass)
        }
        Command::RateFunction { dim, beta, r_max, points, out } => {
            emit(out.as_deref(), &rate_function_csv(dim, beta, r_max, points)?)?;
            Ok(true)
        }
        Command::Density { dim, t_max, points, out } => {
            emit(out.as_deref(), &density_csv(dim, t_max, points)?)?;
            Ok(true)
        }
        Command::Calibrate { mut source, out } => {
            if source.manifest.is_none() {
                source.options.statistic = source.options.statistic.or(Some(StatisticChoice::Critical));
            }
            let m = source.resolve()?;
            let c = calibrate(&m, worker_count(m.chains))?;
            emit(out.as_deref(), &json(&c)?)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
