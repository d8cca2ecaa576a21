//! Run manifests and the flat `key = value` configuration they are built
//! from.

use std::fmt;
use std::path::Path;

use anyhow::Context;
use clap::Args;
use mfon_core::limits::WStatistic;
use mfon_core::model::{ModelParams, Regime};
use mfon_core::thermo::solve_fixed_point;
use serde::{Deserialize, Serialize};

pub const ARTIFACT_VERSION: &str = "mfon-1";

/// A configuration or usage mistake, reported with exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(UsageError(msg.into()).into())
}

/// Everything that determines the bytes of a sampling run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub master_seed: u64,
    pub params: ModelParams<f64>,
    pub chains: usize,
    pub burn_in_sweeps: u64,
    pub thin_sweeps: u64,
    pub samples_per_chain: usize,
    pub statistic: WStatistic<f64>,
    pub artifact_version: String,
}

impl RunManifest {
    /// Rejects zero counts, invalid parameters and a statistic whose regime
    /// does not match `β`.
    pub fn validate(&self) -> Result<(), UsageError> {
        let err = |m: String| Err(UsageError(m));
        if self.artifact_version != ARTIFACT_VERSION {
            return err(format!("artifact version {:?}, expected {ARTIFACT_VERSION:?}", self.artifact_version));
        }
        for (name, v) in [
            ("chains", self.chains as u64),
            ("burn_in_sweeps", self.burn_in_sweeps),
            ("thin_sweeps", self.thin_sweeps),
            ("samples_per_chain", self.samples_per_chain as u64),
        ] {
            if v == 0 {
                return err(format!("{name} must be at least 1"));
            }
        }
        if self.chains > u32::MAX as usize {
            return err(format!("too many chains: {}", self.chains));
        }
        self.params.validate().map_err(|e| UsageError(e.to_string()))?;
        self.statistic.check(&self.params).map_err(|e| UsageError(e.to_string()))
    }

    pub fn regime(&self) -> Regime {
        self.statistic.regime()
    }

    pub fn total_samples(&self) -> usize {
        self.chains * self.samples_per_chain
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// Which statistic to record; `auto` follows the regime of `β`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StatisticChoice {
    Auto,
    Subcritical,
    Supercritical,
    Critical,
}

/// Partial run configuration, read from a flat TOML file and from flags.
/// Flags win over the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    /// Spin dimension N.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Number of sites.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<u64>,
    #[arg(long)]
    pub thin: Option<u64>,
    /// Samples recorded per chain.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, value_enum)]
    pub statistic: Option<StatisticChoice>,
    /// Fixed point for the supercritical statistic (solved if absent).
    #[arg(long)]
    pub b: Option<f64>,
    /// Scale of the critical statistic (default 1).
    #[arg(long)]
    pub c_n: Option<f64>,
}

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_CHAINS: usize = 1;
pub const DEFAULT_BURN_IN: u64 = 200;
pub const DEFAULT_THIN: u64 = 1;
pub const DEFAULT_SAMPLES: usize = 1000;

impl RunOptions {
    pub fn from_toml(text: &str) -> Result<Self, UsageError> {
        toml::from_str(text).map_err(|e| UsageError(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self::from_toml(&text).map_err(|e| UsageError(format!("{}: {}", path.display(), e.0)))?)
    }

    /// Fields set in `self` override those of `base`.
    pub fn over(self, base: RunOptions) -> RunOptions {
        RunOptions {
            dim: self.dim.or(base.dim),
            beta: self.beta.or(base.beta),
            n: self.n.or(base.n),
            seed: self.seed.or(base.seed),
            chains: self.chains.or(base.chains),
            burn_in: self.burn_in.or(base.burn_in),
            thin: self.thin.or(base.thin),
            samples: self.samples.or(base.samples),
            statistic: self.statistic.or(base.statistic),
            b: self.b.or(base.b),
            c_n: self.c_n.or(base.c_n),
        }
    }

    pub fn build(&self) -> anyhow::Result<RunManifest> {
        let (Some(dim), Some(beta), Some(n)) = (self.dim, self.beta, self.n) else {
            return usage("dim, beta and n are required");
        };
        let params = ModelParams::new(dim, beta, n).map_err(|e| UsageError(e.to_string()))?;
        let choice = match self.statistic.unwrap_or(StatisticChoice::Auto) {
            StatisticChoice::Auto => match params.regime() {
                Regime::Subcritical => StatisticChoice::Subcritical,
                Regime::Critical => StatisticChoice::Critical,
                Regime::Supercritical => StatisticChoice::Supercritical,
            },
            c => c,
        };
        let statistic = match choice {
            StatisticChoice::Subcritical => WStatistic::Subcritical,
            StatisticChoice::Critical => WStatistic::Critical { c_n: self.c_n.unwrap_or(1.0) },
            StatisticChoice::Supercritical => {
                if params.regime() != Regime::Supercritical {
                    return usage(format!("supercritical statistic requested but beta = {beta} <= N = {dim}"));
                }
                let b = match self.b {
                    Some(b) => b,
                    None => solve_fixed_point(dim, beta)?,
                };
                WStatistic::Supercritical { b }
            }
            StatisticChoice::Auto => unreachable!(),
        };
        let m = RunManifest {
            master_seed: self.seed.unwrap_or(DEFAULT_SEED),
            params,
            chains: self.chains.unwrap_or(DEFAULT_CHAINS),
            burn_in_sweeps: self.burn_in.unwrap_or(DEFAULT_BURN_IN),
            thin_sweeps: self.thin.unwrap_or(DEFAULT_THIN),
            samples_per_chain: self.samples.unwrap_or(DEFAULT_SAMPLES),
            statistic,
            artifact_version: ARTIFACT_VERSION.to_string(),
        };
        m.validate()?;
        Ok(m)
    }
}
