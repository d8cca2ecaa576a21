//! Parallel chain execution and the on-disk layout of a sampling run.
//!
//! A run directory holds
//!
//! - `manifest.json`, the [`RunManifest`];
//! - `samples.csv`, header `chain,index,w` (scalar statistics) or
//!   `chain,index,w1,…,wN` (the subcritical vector), one row per record;
//! - `summary.json`, a [`RunSummary`].

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};
use mfon_core::model::Regime;
use mfon_core::sampler::ChainState;
use mfon_core::stats::EmpiricalSummary;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::manifest::{usage, RunManifest};

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "MFON_WORKERS";

/// Workers for `chains` chains: `MFON_WORKERS` if set, else the available
/// parallelism, capped by the chain count.
pub fn worker_count(chains: usize) -> usize {
    let wanted = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    wanted.min(chains).max(1)
}

/// Runs `job(chain)` for every chain on a pool of `workers` threads and
/// returns the results in chain order.
pub fn run_chains<T, J>(chains: usize, workers: usize, job: J) -> anyhow::Result<Vec<T>>
where
    T: Send,
    J: Fn(usize) -> anyhow::Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    pool.install(|| (0..chains).into_par_iter().map(&job).collect())
}

/// Chain `chain` of a manifest after burn-in. Supercritical chains start
/// aligned, the others from independent uniform spins.
pub fn start_chain(manifest: &RunManifest, chain: usize) -> anyhow::Result<ChainState<f64>> {
    let (p, seed, idx) = (manifest.params, manifest.master_seed, chain as u64);
    let mut state = match manifest.params.regime() {
        Regime::Supercritical => ChainState::from_aligned(p, seed, idx)?,
        _ => ChainState::from_uniform(p, seed, idx)?,
    };
    state.sweeps(manifest.burn_in_sweeps);
    Ok(state)
}

/// Output of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord {
    pub chain: usize,
    /// Row-major, `width` values per record.
    pub values: Vec<f64>,
    pub vmf_acceptance: f64,
}

/// Summary written next to the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub regime: Regime,
    pub width: usize,
    pub samples: usize,
    /// One summary per component of the statistic.
    pub components: Vec<EmpiricalSummary<f64>>,
    /// Sample mean of `|W|²`.
    pub mean_norm_sq: f64,
    /// Smallest vMF acceptance rate over the chains.
    pub min_vmf_acceptance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRun {
    pub manifest: RunManifest,
    pub width: usize,
    pub chains: Vec<ChainRecord>,
}

/// Runs every chain of `manifest` and records its statistic.
pub fn run_sample(manifest: &RunManifest, workers: usize) -> anyhow::Result<SampleRun> {
    manifest.validate()?;
    let width = manifest.statistic.width(manifest.params.dim);
    let chains = run_chains(manifest.chains, workers, |chain| {
        let mut state = start_chain(manifest, chain)?;
        let mut values = Vec::with_capacity(width * manifest.samples_per_chain);
        for _ in 0..manifest.samples_per_chain {
            state.sweeps(manifest.thin_sweeps);
            values.extend(state.statistic(&manifest.statistic));
        }
        log::debug!("chain {chain} done, vmf acceptance {:.4}", state.vmf_acceptance_rate());
        Ok(ChainRecord { chain, values, vmf_acceptance: state.vmf_acceptance_rate() })
    })?;
    Ok(SampleRun { manifest: manifest.clone(), width, chains })
}

impl SampleRun {
    /// Component `j` of every chain, one series per chain.
    pub fn component_chains(&self, j: usize) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.values.iter().skip(j).step_by(self.width).copied().collect()).collect()
    }

    /// Component `j` of all chains concatenated in chain order.
    pub fn pooled_component(&self, j: usize) -> Vec<f64> {
        self.component_chains(j).concat()
    }

    /// `|W|²` per record, one series per chain.
    pub fn norm_sq_chains(&self) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.values.chunks(self.width).map(|w| w.iter().map(|x| x * x).sum()).collect()).collect()
    }

    pub fn summary(&self) -> anyhow::Result<RunSummary> {
        let components = (0..self.width)
            .map(|j| {
                let series = self.component_chains(j);
                let refs: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
                EmpiricalSummary::from_chains(&refs)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let norm_sq = self.norm_sq_chains().concat();
        Ok(RunSummary {
            regime: self.manifest.regime(),
            width: self.width,
            samples: norm_sq.len(),
            components,
            mean_norm_sq: norm_sq.iter().sum::<f64>() / norm_sq.len() as f64,
            min_vmf_acceptance: self.chains.iter().map(|c| c.vmf_acceptance).fold(1.0, f64::min),
        })
    }

    pub fn samples_csv(&self) -> String {
        let mut out = String::from("chain,index");
        if self.width == 1 {
            out.push_str(",w");
        } else {
            (1..=self.width).for_each(|j| write!(out, ",w{j}").unwrap());
        }
        out.push('\n');
        for c in &self.chains {
            for (i, row) in c.values.chunks(self.width).enumerate() {
                write!(out, "{},{i}", c.chain).unwrap();
                row.iter().for_each(|v| write!(out, ",{v}").unwrap());
                out.push('\n');
            }
        }
        out
    }

    pub fn write_dir(&self, dir: &Path) -> anyhow::Result<RunSummary> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let summary = self.summary()?;
        std::fs::write(dir.join("manifest.json"), self.manifest.to_json())?;
        std::fs::write(dir.join("samples.csv"), self.samples_csv())?;
        let mut json = serde_json::to_string_pretty(&summary)?;
        json.push('\n');
        std::fs::write(dir.join("summary.json"), json)?;
        Ok(summary)
    }

    /// Reads a run directory written by [`write_dir`](Self::write_dir).
    /// vMF acceptance rates are not stored per chain and read back as NaN.
    pub fn read_dir(dir: &Path) -> anyhow::Result<Self> {
        let manifest = RunManifest::load(&dir.join("manifest.json"))?;
        let width = manifest.statistic.width(manifest.params.dim);
        let path = dir.join("samples.csv");
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header.split(',').count() != width + 2 {
            return usage(format!("{}: header {header:?} does not match the manifest statistic", path.display()));
        }
        let mut chains: Vec<ChainRecord> = (0..manifest.chains)
            .map(|chain| ChainRecord { chain, values: Vec::new(), vmf_acceptance: f64::NAN })
            .collect();
        for (k, line) in lines.enumerate() {
            let mut fields = line.split(',');
            let chain: usize = parse_field(fields.next(), k)?;
            let _index: usize = parse_field(fields.next(), k)?;
            let Some(rec) = chains.get_mut(chain) else { bail!("line {}: chain {chain} out of range", k + 2) };
            for _ in 0..width {
                rec.values.push(parse_field(fields.next(), k)?);
            }
        }
        if chains.iter().any(|c| c.values.len() != width * manifest.samples_per_chain) {
            bail!("{}: record count does not match the manifest", path.display());
        }
        Ok(SampleRun { manifest, width, chains })
    }
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, line: usize) -> anyhow::Result<T> {
    field
        .and_then(|f| f.trim().parse().ok())
        .with_context(|| format!("samples.csv line {}: malformed field", line + 2))
}
