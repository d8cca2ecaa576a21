//! Acceptance suite. Runs every criterion and prints one PASS/FAIL line per
//! criterion; exits nonzero if any fails.
//!
//! Positional arguments select criteria by id (`c5`, `C12`, ...); with no
//! arguments all of them run. The Monte Carlo criteria take several minutes
//! on a single core.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use anyhow::{ensure, Context};
use mfon_cli::checks::{ks_error_bar, limit_check, stein_diagnostics, LimitCheckReport, SteinReport};
use mfon_cli::manifest::{RunOptions, RunManifest};
use mfon_cli::run::{run_chains, run_sample, start_chain, worker_count};
use mfon_cli::tables::thermo_scan;
use mfon_core::limits::{stein_operator, stein_solve, stein_solve_with_breaks, CriticalDensity};
use mfon_core::model::Regime;
use mfon_core::quad::{golden_section_min, integrate_to_infinity, Tolerance};
use mfon_core::sampler::{chain_rng, uniform_sphere, vmf_sample_into};
use mfon_core::specfun::{bessel_i, bessel_ratio, bessel_ratio_order, BesselOrder};
use mfon_core::stats::EmpiricalSummary;
use mfon_core::thermo::{entropy_functional_quadrature, free_energy, solve_fixed_point};
use rand::Rng;
use sha2::{Digest, Sha256};

const SEED: u64 = 1;
const LIMIT_SAMPLES: usize = 10_000;
const LIMIT_CHAINS: usize = 4;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> anyhow::Result<Outcome> {
    Ok(Outcome { pass, detail })
}

/// Caches limit-check runs so the rate check can reuse them.
#[derive(Default)]
struct Ctx {
    limit_runs: HashMap<(usize, u64, usize), LimitCheckReport>,
}

/// Sweeps between records: about one autocorrelation time of `|S|²`.
fn thin_for(dim: usize, beta: f64, n: usize) -> u64 {
    match Regime::classify(dim, beta) {
        Regime::Critical => (0.16 * (n as f64).sqrt()).ceil() as u64,
        _ => 4,
    }
}

fn limit_manifest(dim: usize, beta: f64, n: usize) -> anyhow::Result<RunManifest> {
    let thin = thin_for(dim, beta, n);
    RunOptions {
        dim: Some(dim),
        beta: Some(beta),
        n: Some(n),
        seed: Some(SEED),
        chains: Some(LIMIT_CHAINS),
        burn_in: Some(100 + 20 * thin),
        thin: Some(thin),
        samples: Some(LIMIT_SAMPLES / LIMIT_CHAINS),
        ..Default::default()
    }
    .build()
}

impl Ctx {
    fn limit(&mut self, dim: usize, beta: f64, n: usize) -> anyhow::Result<LimitCheckReport> {
        let key = (dim, beta.to_bits(), n);
        if let Some(r) = self.limit_runs.get(&key) {
            return Ok(r.clone());
        }
        let m = limit_manifest(dim, beta, n)?;
        let run = run_sample(&m, worker_count(m.chains))?;
        let report = limit_check(&run, m.regime(), 0)?;
        self.limit_runs.insert(key, report.clone());
        Ok(report)
    }
}

fn c1(_: &mut Ctx) -> anyhow::Result<Outcome> {
    let mut pass = true;
    let mut notes = Vec::new();
    for dim in [2usize, 3, 4] {
        let nf = dim as f64;
        let scan = thermo_scan(dim, 0.0, 2.0 * nf, 0.05)?;
        ensure!(scan.failed_rows == 0, "N = {dim}: {} rows failed", scan.failed_rows);
        let disordered = scan.rows.iter().filter(|r| r.beta <= nf).all(|r| r.b.abs() <= 1e-10);
        let ordered = scan.rows.iter().filter(|r| r.beta >= nf + 0.05 - 1e-12).all(|r| r.b > 1e-4);
        let near: Vec<f64> =
            [1.0, 0.1, 0.01].iter().map(|e| solve_fixed_point(dim, nf + e)).collect::<Result<_, _>>()?;
        let monotone = near[0] > near[1] && near[1] > near[2] && near[2] > 0.0;
        pass &= disordered && ordered && monotone && scan.beta_c == Some(nf + 0.05);
        notes.push(format!("N={dim}: b(N+1,0.1,0.01)=({:.4},{:.4},{:.4})", near[0], near[1], near[2]));
    }
    outcome(pass, notes.join("; "))
}

fn c2(_: &mut Ctx) -> anyhow::Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for dim in [2usize, 3, 4] {
        for frac in [0.5, 1.0, 1.5, 2.5] {
            let beta = frac * dim as f64;
            let functional = |b: f64| entropy_functional_quadrature(dim, beta, b).unwrap_or(f64::NAN);
            let (_, min) = golden_section_min(functional, 0.0, 2.0 * beta, 1e-9);
            worst = worst.max((free_energy(dim, beta)? - min).abs());
            points += 1;
        }
    }
    outcome(worst <= 1e-6, format!("{points} points, max |F - min functional| = {worst:.2e} (tol 1e-6)"))
}

fn c3(_: &mut Ctx) -> anyhow::Result<Outcome> {
    let mut rng = chain_rng(SEED, 3);
    let (mut rec, mut ratio): (f64, f64) = (0.0, 0.0);
    for _ in 0..1000 {
        let nu = BesselOrder::from_twice(rng.random_range(2..=20));
        let x: f64 = 50.0 * (1.0 - rng.random::<f64>());
        let v: f64 = nu.value();
        let lo: f64 = bessel_i(BesselOrder::from_twice(nu.twice() - 2), x)?;
        let mid: f64 = bessel_i(nu, x)?;
        let hi: f64 = bessel_i(nu.shifted(1), x)?;
        let scale = lo.abs().max(hi.abs()).max(2.0 * v / x * mid);
        rec = rec.max((lo - hi - 2.0 * v / x * mid).abs() / scale);
        let q = hi / mid;
        ratio = ratio.max((bessel_ratio_order::<f64>(nu, x)? - q).abs() / q);
    }
    outcome(
        rec <= 1e-10 && ratio <= 1e-12,
        format!("1000 points, recurrence {rec:.1e} (tol 1e-10), ratio {ratio:.1e} (tol 1e-12)"),
    )
}

fn c4(_: &mut Ctx) -> anyhow::Result<Outcome> {
    let draws = 100_000;
    let mut rng = chain_rng(SEED, 4);
    let mut worst_z: f64 = 0.0;
    let mut min_acceptance: f64 = 1.0;
    for dim in [2usize, 3, 4] {
        for kappa in [0.1, 1.0, 5.0, 20.0] {
            let mu: Vec<f64> = uniform_sphere(dim, &mut rng);
            let mut x = vec![0.0; dim];
            let (mut s, mut s2, mut trials) = (0.0, 0.0, 0u64);
            for _ in 0..draws {
                trials += vmf_sample_into(&mu, kappa, &mut rng, &mut x)? as u64;
                let t: f64 = x.iter().zip(&mu).map(|(a, b)| a * b).sum();
                s += t;
                s2 += t * t;
            }
            let mean = s / draws as f64;
            let se = ((s2 / draws as f64 - mean * mean) / draws as f64).sqrt();
            worst_z = worst_z.max((mean - bessel_ratio(dim, kappa)?).abs() / se);
            min_acceptance = min_acceptance.min(draws as f64 / trials as f64);
        }
    }
    outcome(
        worst_z <= 4.0,
        format!("12 (N, kappa) cells, max |z| = {worst_z:.2} (tol 4), min acceptance {min_acceptance:.3}"),
    )
}

fn fmt_limit(tag: &str, r: &LimitCheckReport) -> String {
    let extra: Vec<String> =
        r.checks.iter().filter(|c| c.name != "ks").map(|c| format!("{}={:.4} (want {:.4})", c.name, c.observed, c.expected)).collect();
    format!("{tag}: KS={:.4}±{:.4} {}", r.distance.ks, r.ks_error_bar, extra.join(" "))
}

fn c5(ctx: &mut Ctx) -> anyhow::Result<Outcome> {
    let a = ctx.limit(2, 1.0, 2000)?;
    let b = ctx.limit(3, 1.5, 2000)?;
    outcome(a.pass && b.pass, format!("{}; {} (KS tol 0.02, |W|² tol 5%)", fmt_limit("N=2", &a), fmt_limit("N=3", &b)))
}

fn c6(_: &mut Ctx) -> anyhow::Result<Outcome> {
    let m = RunOptions {
        dim: Some(3),
        beta: Some(1.0),
        n: Some(200),
        seed: Some(SEED),
        chains: Some(4),
        burn_in: Some(200),
        thin: Some(1),
        samples: Some(25_000),
        ..Default::default()
    }
    .build()?;
    let series = run_chains(m.chains, worker_count(m.chains), |chain| {
        let mut state = start_chain(&m, chain)?;
        Ok((0..m.samples_per_chain)
            .map(|_| {
                state.sweeps(m.thin_sweeps);
                state.pair_correlation()
            })
            .collect::<Vec<f64>>())
    })?;
    let refs: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
    let s = EmpiricalSummary::from_chains(&refs)?;
    let want = 1.0 / 400.0;
    let z = (s.mean - want).abs() / s.std_error;
    outcome(z <= 4.0, format!("E<s1,s2> = {:.6} ± {:.6}, want {want}, |z| = {z:.2} (tol 4)", s.mean, s.std_error))
}

fn c7(ctx: &mut Ctx) -> anyhow::Result<Outcome> {
    let r = ctx.limit(2, 3.0, 2000)?;
    outcome(r.pass, format!("{} (KS tol 0.05, variance tol 15%)", fmt_limit("N=2 beta=3", &r)))
}

fn c8(ctx: &mut Ctx) -> anyhow::Result<Outcome> {
    let k3 = CriticalDensity::<f64>::new(3)?.k_tilde;
    ensure!((k3 - 1.0 / 180.0).abs() < 1e-15, "k_tilde(3) = {k3}");
    let a = ctx.limit(3, 3.0, 4000)?;
    let b = ctx.limit(2, 2.0, 4000)?;
    outcome(
        a.pass && b.pass,
        format!("{}; {} (mean-standardized, KS tol 0.05)", fmt_limit("N=3", &a), fmt_limit("N=2", &b)),
    )
}

fn stein_manifest(dim: usize, beta: f64, n: usize, samples: usize, thin: u64) -> anyhow::Result<RunManifest> {
    RunOptions {
        dim: Some(dim),
        beta: Some(beta),
        n: Some(n),
        seed: Some(SEED),
        chains: Some(4),
        burn_in: Some(500),
        thin: Some(thin),
        samples: Some(samples),
        ..Default::default()
    }
    .build()
}

fn fmt_stein(tag: &str, r: &SteinReport) -> String {
    let checks: Vec<String> = r
        .checks
        .iter()
        .map(|c| format!("{}={:.4e} (want {:.4e} ± {:.2e}{})", c.name, c.observed, c.expected, c.allowed, if c.pass { "" } else { " FAIL" }))
        .collect();
    format!("{tag}: {}", checks.join(" "))
}

fn c9(_: &mut Ctx) -> anyhow::Result<Outcome> {
    let sub = stein_manifest(2, 1.0, 500, 1000, 2)?;
    let sub = stein_diagnostics(&sub, 2000, worker_count(sub.chains))?;
    let sup = stein_manifest(2, 3.0, 500, 1000, 2)?;
    let sup = stein_diagnostics(&sup, 2000, worker_count(sup.chains))?;
    let crit = stein_manifest(3, 3.0, 2000, 2000, 5)?;
    let crit = stein_diagnostics(&crit, 200_000, worker_count(crit.chains))?;
    let c = crit.drift.get("c").context("quadratic fit has c")?;
    let c_ratio = c.value / crit.predictions.iter().find(|p| p.name == "c").context("c prediction")?.value;
    outcome(
        sub.pass && sup.pass && crit.pass,
        format!(
            "{}; {}; {} (c ratio {:.3} ± {:.3})",
            fmt_stein("sub", &sub),
            fmt_stein("super", &sup),
            fmt_stein("critical", &crit),
            c_ratio,
            c_ratio * c.std_error / c.value
        ),
    )
}

/// Test functions for the characterizing identity, with derivatives.
fn test_functions() -> Vec<(&'static str, Box<dyn Fn(f64) -> f64>, Box<dyn Fn(f64) -> f64>)> {
    vec![
        ("1", Box::new(|_| 1.0), Box::new(|_| 0.0)),
        ("x", Box::new(|x| x), Box::new(|_| 1.0)),
        ("x^2", Box::new(|x| x * x), Box::new(|x| 2.0 * x)),
        ("sin", Box::new(f64::sin), Box::new(f64::cos)),
        ("cos", Box::new(f64::cos), Box::new(|x: f64| -x.sin())),
        ("exp(-x/4)", Box::new(|x: f64| (-x / 4.0).exp()), Box::new(|x: f64| -(-x / 4.0).exp() / 4.0)),
        ("1/(1+x)", Box::new(|x| 1.0 / (1.0 + x)), Box::new(|x| -1.0 / ((1.0 + x) * (1.0 + x)))),
        ("ln(1+x)", Box::new(f64::ln_1p), Box::new(|x| 1.0 / (1.0 + x))),
        ("atan", Box::new(f64::atan), Box::new(|x| 1.0 / (1.0 + x * x))),
        ("x exp(-x/10)", Box::new(|x: f64| x * (-x / 10.0).exp()), Box::new(|x: f64| (1.0 - x / 10.0) * (-x / 10.0).exp())),
    ]
}

fn c10(_: &mut Ctx) -> anyhow::Result<Outcome> {
    let tol = Tolerance { abs: 1e-14, rel: 1e-12 };
    let (mut worst, mut worst_m2): (f64, f64) = (0.0, 0.0);
    for dim in [2usize, 3, 4, 5] {
        let d = CriticalDensity::<f64>::new(dim)?;
        for (name, f, df) in test_functions() {
            let e = integrate_to_infinity(|x| stein_operator(dim, &f, &df, x) * d.pdf(x), 0.0, tol)?.value;
            ensure!(e.is_finite(), "N = {dim}, f = {name}: non-finite");
            worst = worst.max(e.abs());
        }
        let m2 = integrate_to_infinity(|x| x * x * d.pdf(x), 0.0, tol)?.value;
        let want = (dim * dim * dim * (dim + 2)) as f64;
        worst_m2 = worst_m2.max((m2 - want).abs() / want);
    }
    outcome(
        worst <= 1e-7 && worst_m2 <= 1e-8,
        format!("N=2..5 x 10 f: max |E T_p f| = {worst:.1e} (tol 1e-7); E X^2 rel err {worst_m2:.1e} (tol 1e-8)"),
    )
}

fn c11(_: &mut Ctx) -> anyhow::Result<Outcome> {
    let (mut residual, mut gap): (f64, f64) = (0.0, 0.0);
    for dim in [2usize, 3, 4, 5] {
        let d = CriticalDensity::<f64>::new(dim)?;
        let (median, mean) = (d.quantile(0.5), d.mean());
        let solutions = [
            stein_solve(dim, |t: f64| (-t / mean).exp())?,
            stein_solve(dim, |t: f64| t / (mean + t))?,
            stein_solve(dim, |t: f64| (t / mean).sin())?,
            stein_solve_with_breaks(dim, |t: f64| if t <= median { 1.0 } else { 0.0 }, &[median])?,
            stein_solve_with_breaks(dim, |t: f64| t.min(mean), &[mean])?,
        ];
        for s in &solutions {
            residual = residual.max(s.residual_max);
            gap = gap.max(s.representation_gap);
        }
    }
    outcome(
        residual <= 1e-6 && gap <= 1e-6,
        format!("N=2..5 x 5 h: max residual {residual:.1e}, representation gap {gap:.1e} (tol 1e-6)"),
    )
}

fn c12(ctx: &mut Ctx) -> anyhow::Result<Outcome> {
    let legs = [(2usize, 1.0), (3, 1.5), (2, 3.0), (3, 3.0), (2, 2.0)];
    let mut pass = true;
    let mut notes = Vec::new();
    for (dim, beta) in legs {
        let mut prev: Option<(f64, f64)> = None;
        let mut row = Vec::new();
        for n in [250usize, 1000, 4000] {
            let r = ctx.limit(dim, beta, n)?;
            let e = ks_error_bar(r.summary.effective_sample_size);
            if let Some((ks, pe)) = prev {
                let ok = r.distance.ks <= ks + 2.0 * (pe * pe + e * e).sqrt();
                pass &= ok;
                if !ok {
                    row.push("increase".to_string());
                }
            }
            row.push(format!("{:.4}", r.distance.ks));
            prev = Some((r.distance.ks, e));
        }
        notes.push(format!("N={dim} beta={beta}: {}", row.join(" -> ")));
    }
    outcome(pass, format!("KS along n=250,1000,4000: {}", notes.join("; ")))
}

fn hash_dir(dir: &Path) -> anyhow::Result<Vec<(String, String)>> {
    ["manifest.json", "samples.csv", "summary.json"]
        .iter()
        .map(|f| {
            let bytes = std::fs::read(dir.join(f)).with_context(|| format!("reading {f}"))?;
            let digest: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
            Ok((f.to_string(), digest))
        })
        .collect()
}

fn mfon(args: &[&str], workers: &str) -> anyhow::Result<()> {
    let status = Command::new(env!("CARGO_BIN_EXE_mfon")).arg("--log-level=error").args(args).env("MFON_WORKERS", workers).status()?;
    ensure!(status.success(), "mfon {args:?} exited with {status}");
    Ok(())
}

fn c13(_: &mut Ctx) -> anyhow::Result<Outcome> {
    let tmp = tempfile::tempdir()?;
    let mut pass = true;
    for (tag, beta) in [("sub", "1.5"), ("critical", "3"), ("super", "5")] {
        let dirs: Vec<String> = (0..3).map(|k| tmp.path().join(format!("{tag}{k}")).display().to_string()).collect();
        let common = ["--dim", "3", "--beta", beta, "--n", "100", "--chains", "3", "--samples", "300", "--thin", "2", "--burn-in", "20"];
        mfon(&[&["sample"], &common[..], &["--out", &dirs[0]]].concat(), "1")?;
        mfon(&[&["sample"], &common[..], &["--out", &dirs[1]]].concat(), "3")?;
        let manifest = format!("{}/manifest.json", dirs[0]);
        mfon(&["sample", "--manifest", &manifest, "--out", &dirs[2]], "2")?;
        let h: Vec<_> = dirs.iter().map(|d| hash_dir(Path::new(d))).collect::<Result<_, _>>()?;
        pass &= h[0] == h[1] && h[0] == h[2];
    }
    outcome(pass, "3 manifests x 3 runs (1, 3, 2 workers; flags and manifest file): SHA-256 of all outputs identical".into())
}

type Criterion = fn(&mut Ctx) -> anyhow::Result<Outcome>;

fn main() {
    let criteria: [(&str, &str, Criterion); 13] = [
        ("C1", "critical threshold", c1),
        ("C2", "free-energy consistency", c2),
        ("C3", "Bessel core", c3),
        ("C4", "vMF sampler", c4),
        ("C5", "subcritical CLT", c5),
        ("C6", "pair correlation", c6),
        ("C7", "supercritical CLT", c7),
        ("C8", "critical law", c8),
        ("C9", "exchangeable-pair drift", c9),
        ("C10", "characterizing operator", c10),
        ("C11", "Stein equation solver", c11),
        ("C12", "KS decrease along n", c12),
        ("C13", "determinism", c13),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).map(|a| a.to_uppercase()).collect();
    let mut ctx = Ctx::default();
    let mut failed = 0;
    for (id, title, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| f == id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match run(&mut ctx) {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        failed += usize::from(!pass);
        println!(
            "{} {id:<4} {title}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
