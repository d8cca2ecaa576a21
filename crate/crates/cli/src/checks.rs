//! Limit-law checks on sample runs, exchangeable-pair diagnostics and the
//! critical calibration.

use mfon_core::limits::{calibrate_c_n, CriticalDensity, LimitLaw, WStatistic};
use mfon_core::model::Regime;
use mfon_core::sampler::PairSet;
use mfon_core::specfun::bessel_ratio_derivative;
use mfon_core::stats::{
    binned_drift, distance_report, drift_fit, quadratic_variation_fit, Bin, BootstrapOptions, DistanceReport,
    DriftFit, DriftModel, EmpiricalSummary, PairMoments, QvFit, DEFAULT_BINS,
};
use mfon_core::thermo::supercritical_variance;
use serde::{Deserialize, Serialize};

use crate::manifest::{usage, RunManifest};
use crate::run::{run_chains, run_sample, start_chain, SampleRun};

pub const SUBCRITICAL_KS: f64 = 0.02;
pub const SUBCRITICAL_NORM_SQ_REL: f64 = 0.05;
pub const SUPERCRITICAL_KS: f64 = 0.05;
pub const SUPERCRITICAL_VARIANCE_REL: f64 = 0.15;
pub const CRITICAL_KS: f64 = 0.05;
/// Allowed deviation of a drift rate, in bootstrap standard errors.
pub const DRIFT_SE: f64 = 3.0;
pub const CRITICAL_C_REL: f64 = 0.15;
pub const QV_REL: f64 = 0.15;
pub const MAX_INCREMENT_T: f64 = 4.0;

/// `|observed − expected| ≤ allowed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub expected: f64,
    pub allowed: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: &str, observed: f64, expected: f64, allowed: f64) -> Self {
        let pass = (observed - expected).abs() <= allowed;
        Check { name: name.to_string(), observed, expected, allowed, pass }
    }

    pub fn relative(name: &str, observed: f64, expected: f64, rel: f64) -> Self {
        Self::new(name, observed, expected, rel * expected.abs())
    }

    /// `0 ≤ observed ≤ bound`.
    pub fn at_most(name: &str, observed: f64, bound: f64) -> Self {
        Self::new(name, observed, 0.0, bound)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCheckReport {
    pub regime: Regime,
    /// Component tested for the subcritical vector.
    pub component: Option<usize>,
    pub distance: DistanceReport<f64>,
    pub summary: EmpiricalSummary<f64>,
    /// `0.5/√ESS`, the scale of sampling noise in the KS distance.
    pub ks_error_bar: f64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// KS noise scale for `ess` effectively independent samples.
pub fn ks_error_bar(ess: f64) -> f64 {
    0.5 / ess.max(1.0).sqrt()
}

/// Compares a sample run with the limit law of its regime. `regime` must
/// match the statistic the run recorded.
pub fn limit_check(run: &SampleRun, regime: Regime, component: usize) -> anyhow::Result<LimitCheckReport> {
    let m = &run.manifest;
    if m.regime() != regime {
        return usage(format!("run recorded the {} statistic, not {regime}", m.regime()));
    }
    if component >= run.width {
        return usage(format!("component {component} out of range for width {}", run.width));
    }
    let (dim, beta) = (m.params.dim, m.params.beta);
    let series = run.component_chains(component);
    let refs: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
    let summary = EmpiricalSummary::from_chains(&refs)?;
    let samples = series.concat();
    let mut checks = Vec::new();
    let distance = match m.statistic {
        WStatistic::Subcritical => {
            let d = distance_report(&samples, &LimitLaw::GaussianVector { dim }, false)?;
            checks.push(Check::at_most("ks", d.ks, SUBCRITICAL_KS));
            let norm_sq = run.norm_sq_chains().concat();
            let mean = norm_sq.iter().sum::<f64>() / norm_sq.len() as f64;
            checks.push(Check::relative("mean_norm_sq", mean, dim as f64, SUBCRITICAL_NORM_SQ_REL));
            d
        }
        WStatistic::Supercritical { .. } => {
            let variance = supercritical_variance(dim, beta)?;
            let d = distance_report(&samples, &LimitLaw::GaussianScalar { variance }, false)?;
            checks.push(Check::at_most("ks", d.ks, SUPERCRITICAL_KS));
            checks.push(Check::relative("variance", summary.variance, variance, SUPERCRITICAL_VARIANCE_REL));
            d
        }
        WStatistic::Critical { .. } => {
            let d = distance_report(&samples, &LimitLaw::Critical(CriticalDensity::new(dim)?), true)?;
            checks.push(Check::at_most("ks", d.ks, CRITICAL_KS));
            d
        }
    };
    let pass = checks.iter().all(|c| c.pass);
    Ok(LimitCheckReport {
        regime,
        component: (run.width > 1).then_some(component),
        distance,
        ks_error_bar: ks_error_bar(summary.effective_sample_size),
        summary,
        checks,
        pass,
    })
}

/// A named theoretical value reported next to the fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteinReport {
    pub regime: Regime,
    pub pairs_per_sample: usize,
    pub drift: DriftFit<f64>,
    pub quadratic_variation: QvFit<f64>,
    pub predictions: Vec<Prediction>,
    pub checks: Vec<Check>,
    /// Conditional mean increment binned by `W`.
    pub bins: Vec<Bin<f64>>,
    pub pass: bool,
}

/// Draws `pairs_per_sample` exchangeable pairs from every recorded
/// configuration of the manifest and fits the drift and quadratic
/// variation of `W`.
pub fn stein_diagnostics(manifest: &RunManifest, pairs_per_sample: usize, workers: usize) -> anyhow::Result<SteinReport> {
    manifest.validate()?;
    if pairs_per_sample == 0 {
        return usage("pairs per sample must be at least 1");
    }
    let stat = manifest.statistic;
    let width = stat.width(manifest.params.dim);
    let per_chain = run_chains(manifest.chains, workers, |chain| {
        let mut state = start_chain(manifest, chain)?;
        let mut moments = PairMoments::new();
        for s in 0..manifest.samples_per_chain {
            state.sweeps(manifest.thin_sweeps);
            let mut set = PairSet::new(width);
            state.make_pairs_into(&stat, pairs_per_sample, s as u32, &mut set);
            moments.push_pair_set(&set)?;
        }
        Ok(moments)
    })?;
    let mut moments = PairMoments::new();
    per_chain.into_iter().for_each(|m| moments.append(m));

    let regime = manifest.regime();
    let opts = BootstrapOptions::default();
    let (dim, beta, n) = (manifest.params.dim as f64, manifest.params.beta, manifest.params.n_sites as f64);
    let qv = quadratic_variation_fit(&moments, regime, opts)?;
    let mut predictions = Vec::new();
    let mut checks = Vec::new();
    let drift = match stat {
        WStatistic::Critical { c_n } => {
            let fit = drift_fit(&moments, DriftModel::Quadratic, opts)?;
            let k = c_n / (dim * n.powf(1.5));
            let c = dim / ((dim + 2.0) * c_n * c_n);
            predictions.push(Prediction { name: "k".into(), value: k });
            predictions.push(Prediction { name: "c".into(), value: c });
            predictions.push(Prediction { name: "alpha".into(), value: 2.0 * dim * k });
            predictions.push(Prediction { name: "qv_slope".into(), value: 8.0 * k });
            checks.push(Check::relative("c", coefficient(&fit, "c"), c, CRITICAL_C_REL));
            checks.push(Check::relative("qv_slope", qv.coefficient.value, 8.0 * k, QV_REL));
            fit
        }
        WStatistic::Subcritical | WStatistic::Supercritical { .. } => {
            let fit = drift_fit(&moments, DriftModel::Linear, opts)?;
            let (lambda, qv_constant) = match stat {
                WStatistic::Supercritical { b } => {
                    let lambda = (1.0 - beta * bessel_ratio_derivative(manifest.params.dim, b)?) / n;
                    (lambda, 2.0 * lambda * supercritical_variance(manifest.params.dim, beta)?)
                }
                _ => {
                    let lambda = (1.0 - beta / dim) / n;
                    (lambda, 2.0 * lambda)
                }
            };
            predictions.push(Prediction { name: "lambda".into(), value: lambda });
            predictions.push(Prediction { name: "qv_constant".into(), value: qv_constant });
            let lam = fit.get("lambda").expect("linear fit has lambda");
            checks.push(Check::new("lambda", lam.value, lambda, DRIFT_SE * lam.std_error));
            checks.push(Check::relative("qv_constant", qv.coefficient.value, qv_constant, QV_REL));
            fit
        }
    };
    checks.push(Check::at_most("increment_mean_t", drift.increment_mean_t.abs(), MAX_INCREMENT_T));
    let bins = if moments.groups().len() >= 2 * DEFAULT_BINS {
        binned_drift(&moments, DEFAULT_BINS)?
    } else {
        log::warn!("{} configurations are too few for {DEFAULT_BINS} bins", moments.groups().len());
        Vec::new()
    };
    let pass = checks.iter().all(|c| c.pass);
    Ok(SteinReport { regime, pairs_per_sample, drift, quadratic_variation: qv, predictions, checks, bins, pass })
}

fn coefficient(fit: &DriftFit<f64>, name: &str) -> f64 {
    fit.get(name).map_or(f64::NAN, |c| c.value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub c_n: f64,
    /// Summary of `|S_n|²/n^{3/2}`.
    pub summary: EmpiricalSummary<f64>,
    /// `N²/E X`, the value `c_N` tends to as `n → ∞`.
    pub limit_c_n: f64,
}

/// `c_N` from a critical run recorded with `c_N = 1`.
pub fn calibrate(manifest: &RunManifest, workers: usize) -> anyhow::Result<Calibration> {
    if manifest.statistic != (WStatistic::Critical { c_n: 1.0 }) {
        return usage("calibration needs the critical statistic with c_n = 1");
    }
    let run = run_sample(manifest, workers)?;
    let series = run.component_chains(0);
    let refs: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
    let summary = EmpiricalSummary::from_chains(&refs)?;
    let dim = manifest.params.dim;
    let limit_c_n = (dim * dim) as f64 / CriticalDensity::<f64>::new(dim)?.mean();
    Ok(Calibration { c_n: calibrate_c_n(&series.concat())?, summary, limit_c_n })
}
