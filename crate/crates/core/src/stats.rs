//! Distances to reference laws, Monte Carlo error bars and exchangeable-pair
//! regressions.
//!
//! Accumulation is done in `f64` whatever the input scalar; results are cast
//! back to `F`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limits::LimitLaw;
use crate::model::Regime;
use crate::real::Real;
use crate::sampler::PairSet;

/// Window factor of the self-consistent autocorrelation window `M ≥ c·τ`.
pub const WINDOW_FACTOR: f64 = 5.0;
/// Series length below which the autocorrelation estimate is flagged.
pub const MIN_SERIES_LEN: usize = 1000;
/// Batch length in units of `τ` for batch-means error bars.
pub const BATCH_TAUS: f64 = 10.0;
/// Fewest pairs accepted by the regressions.
pub const MIN_PAIRS: usize = 10_000;
/// Bin count for conditional-mean tables.
pub const DEFAULT_BINS: usize = 50;

fn to_f64<F: Real>(xs: &[F]) -> Vec<f64> {
    xs.iter().map(|x| x.to_f64_lossy()).collect()
}

fn sorted_f64<F: Real>(xs: &[F]) -> Result<Vec<f64>> {
    let mut v = to_f64(xs);
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::Domain("sample contains NaN".into()));
    }
    v.sort_by(f64::total_cmp);
    Ok(v)
}

fn just_below(x: f64) -> f64 {
    x - x.abs() * 4.0 * f64::EPSILON - f64::MIN_POSITIVE
}

/// Kolmogorov–Smirnov distance `sup_x |F_n(x) − F(x)|` between the empirical
/// law of `samples` and `cdf`. The input need not be sorted.
///
/// Both one-sided gaps are checked at every distinct sample value, with the
/// left limit of `cdf` taken just below it, so atoms in the reference are
/// handled.
pub fn ks_distance<F: Real>(samples: &[F], cdf: impl Fn(F) -> F) -> Result<F> {
    if samples.len() < 2 {
        return Err(Error::Domain(format!("need at least 2 samples, got {}", samples.len())));
    }
    let xs = sorted_f64(samples)?;
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < xs.len() {
        let x = xs[i];
        let mut j = i;
        while j < xs.len() && xs[j] == x {
            j += 1;
        }
        let at = cdf(F::of(x)).to_f64_lossy();
        let below = cdf(F::of(just_below(x))).to_f64_lossy();
        d = d.max((j as f64 / n - at).abs()).max((i as f64 / n - below).abs());
        i = j;
    }
    Ok(F::of(d.min(1.0)))
}

/// Lower empirical quantile `x_(⌈pn⌉)` of a sorted sample.
pub fn empirical_quantile<F: Real>(sorted: &[F], p: F) -> F {
    let n = sorted.len();
    let k = (p.to_f64_lossy() * n as f64).ceil() as usize;
    sorted[k.clamp(1, n) - 1]
}

/// Wasserstein-1 distance by quantile coupling:
/// `(1/n) Σ_k |x_(k) − Q((k − ½)/n)|`. The input need not be sorted.
///
/// `W₁` bounds the bounded-Lipschitz distance from above, so it serves as the
/// computable stand-in for it.
pub fn wasserstein1<F: Real>(samples: &[F], quantile: impl Fn(F) -> F) -> Result<F> {
    if samples.is_empty() {
        return Err(Error::Domain("need at least 1 sample".into()));
    }
    let xs = sorted_f64(samples)?;
    let n = xs.len() as f64;
    let total: f64 = xs
        .iter()
        .enumerate()
        .map(|(k, &x)| (x - quantile(F::of((k as f64 + 0.5) / n)).to_f64_lossy()).abs())
        .sum();
    Ok(F::of(total / n))
}

/// KS and `W₁` distances of a sample to a reference law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport<F> {
    pub ks: F,
    pub wasserstein1: F,
    pub sample_count: usize,
    pub reference: String,
    /// Whether samples and reference were both divided by their means.
    pub mean_standardized: bool,
}

/// Compares `samples` to one coordinate of `law`. With `standardize_by_mean`
/// the sample is divided by its mean and the reference by its own mean.
pub fn distance_report<F: Real>(samples: &[F], law: &LimitLaw<F>, standardize_by_mean: bool) -> Result<DistanceReport<F>> {
    let (data, ref_scale) = if standardize_by_mean {
        let mean = samples.iter().map(|x| x.to_f64_lossy()).sum::<f64>() / samples.len().max(1) as f64;
        let ref_mean = law.marginal_mean();
        if !(mean > 0.0) || !(ref_mean > F::zero()) {
            return Err(Error::Degenerate("mean standardization needs positive means".into()));
        }
        (samples.iter().map(|&x| F::of(x.to_f64_lossy() / mean)).collect::<Vec<F>>(), ref_mean)
    } else {
        (samples.to_vec(), F::one())
    };
    let ks = ks_distance(&data, |x| law.marginal_cdf(x * ref_scale))?;
    let w1 = wasserstein1(&data, |p| law.marginal_quantile(p) / ref_scale)?;
    let mut reference = law.describe();
    if standardize_by_mean {
        reference.push_str(", divided by its mean");
    }
    Ok(DistanceReport { ks, wasserstein1: w1, sample_count: samples.len(), reference, mean_standardized: standardize_by_mean })
}

/// Integrated autocorrelation time and the window it was summed over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutocorrelationTime<F> {
    /// `τ = ½ + Σ_{t=1}^{M} ρ(t)`, in units of the series spacing.
    pub tau: F,
    pub window: usize,
    /// False when the series was too short for the window rule.
    pub reliable: bool,
}

/// Windowed integrated autocorrelation time; the window `M` is the first
/// with `M ≥ 5τ(M)`. Constant series are rejected as degenerate.
pub fn autocorrelation_time<F: Real>(series: &[F]) -> Result<AutocorrelationTime<F>> {
    let x = to_f64(series);
    let t = autocorrelation_time_f64(&x)?;
    Ok(AutocorrelationTime { tau: F::of(t.tau), window: t.window, reliable: t.reliable })
}

fn autocorrelation_time_f64(x: &[f64]) -> Result<AutocorrelationTime<f64>> {
    let n = x.len();
    if n < 2 {
        return Err(Error::Degenerate(format!("series of length {n}")));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0 = d.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if !(c0 > (f64::EPSILON * mean).powi(2)) {
        return Err(Error::Degenerate("series has zero variance".into()));
    }
    let mut tau = 0.5;
    let mut window = 0;
    let mut closed = false;
    for lag in 1..n / 2 {
        let c: f64 = d[..n - lag].iter().zip(&d[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        tau += c / c0;
        window = lag;
        if lag as f64 >= WINDOW_FACTOR * tau {
            closed = true;
            break;
        }
    }
    let reliable = closed && n >= MIN_SERIES_LEN;
    if !reliable {
        log::warn!("autocorrelation window rule not satisfied: n = {n}, window = {window}, tau = {tau:.3}");
    }
    Ok(AutocorrelationTime { tau, window, reliable })
}

/// Batch-means estimate of a mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchMeans<F> {
    pub mean: F,
    pub std_error: F,
    pub batches: usize,
    pub batch_len: usize,
}

/// Non-overlapping batch means; a trailing partial batch is dropped from the
/// error estimate.
pub fn batch_means<F: Real>(series: &[F], batch_len: usize) -> Result<BatchMeans<F>> {
    let x = to_f64(series);
    let (mean, se, batches) = batch_means_f64(&[&x], batch_len)?;
    Ok(BatchMeans { mean: F::of(mean), std_error: F::of(se), batches, batch_len })
}

fn batch_means_f64(chains: &[&[f64]], batch_len: usize) -> Result<(f64, f64, usize)> {
    if batch_len == 0 {
        return Err(Error::Domain("batch length must be positive".into()));
    }
    let total: usize = chains.iter().map(|c| c.len()).sum();
    let mean = chains.iter().flat_map(|c| c.iter()).sum::<f64>() / total.max(1) as f64;
    let means: Vec<f64> = chains
        .iter()
        .flat_map(|c| c.chunks_exact(batch_len).map(|b| b.iter().sum::<f64>() / batch_len as f64))
        .collect();
    let k = means.len();
    if k < 2 {
        return Err(Error::Degenerate(format!("{k} batch(es) of length {batch_len}")));
    }
    let bm = means.iter().sum::<f64>() / k as f64;
    let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (k - 1) as f64;
    Ok((mean, (var / k as f64).sqrt(), k))
}

/// Moments and Monte Carlo error of a scalar sample stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSummary<F> {
    pub sample_count: usize,
    pub mean: F,
    pub variance: F,
    pub skewness: F,
    pub tau: F,
    pub effective_sample_size: F,
    /// Batch-means standard error of the mean (batch length `10τ`).
    pub std_error: F,
    pub tau_reliable: bool,
}

impl<F: Real> EmpiricalSummary<F> {
    pub fn from_series(series: &[F]) -> Result<Self> {
        Self::from_chains(&[series])
    }

    /// Pools independent chains. `τ` is the length-weighted mean of the
    /// per-chain estimates and batches never straddle two chains.
    pub fn from_chains(chains: &[&[F]]) -> Result<Self> {
        let data: Vec<Vec<f64>> = chains.iter().map(|c| to_f64(c)).collect();
        let n: usize = data.iter().map(|c| c.len()).sum();
        if n < 2 {
            return Err(Error::Degenerate(format!("{n} samples")));
        }
        let all = || data.iter().flat_map(|c| c.iter().copied());
        let mean = all().sum::<f64>() / n as f64;
        let m2 = all().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let m3 = all().map(|x| (x - mean).powi(3)).sum::<f64>() / n as f64;
        let variance = m2 * n as f64 / (n - 1) as f64;
        let skewness = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };

        let mut weighted = 0.0;
        let mut weight = 0usize;
        let mut reliable = true;
        for c in data.iter().filter(|c| c.len() >= 2) {
            let t = autocorrelation_time_f64(c)?;
            weighted += t.tau * c.len() as f64;
            weight += c.len();
            reliable &= t.reliable;
        }
        let tau = (weighted / weight as f64).max(0.5);
        let ess = (n as f64 / (2.0 * tau)).min(n as f64);
        let refs: Vec<&[f64]> = data.iter().map(|c| c.as_slice()).collect();
        let batch_len = (BATCH_TAUS * tau).ceil() as usize;
        let std_error = match batch_means_f64(&refs, batch_len) {
            Ok((_, se, k)) if k >= 10 => se,
            _ => {
                reliable = false;
                (variance / ess).sqrt()
            }
        };
        Ok(Self {
            sample_count: n,
            mean: F::of(mean),
            variance: F::of(variance),
            skewness: F::of(skewness),
            tau: F::of(tau),
            effective_sample_size: F::of(ess),
            std_error: F::of(std_error),
            tau_reliable: reliable,
        })
    }
}

/// Conditional-mean model for `E[W′ − W | W]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftModel {
    /// `a − λW`, pooled over components.
    Linear,
    /// `α + δW − γW²`; reports `c = γ/α`.
    Quadratic,
}

/// A fitted coefficient with its block-bootstrap standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient<F> {
    pub name: String,
    pub value: F,
    pub std_error: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftFit<F> {
    pub model: DriftModel,
    pub coefficients: Vec<Coefficient<F>>,
    pub pair_count: usize,
    pub blocks: usize,
    /// `mean(W′ − W) / SE`; exchangeability makes the mean increment zero.
    pub increment_mean_t: F,
}

impl<F: Real> DriftFit<F> {
    pub fn get(&self, name: &str) -> Option<&Coefficient<F>> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QvModel {
    /// `E[(W′−W)²|W] = k·W`.
    Slope,
    /// `E[(W′−W)²|W] = const`, per component.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvFit<F> {
    pub model: QvModel,
    pub coefficient: Coefficient<F>,
    pub pair_count: usize,
    pub blocks: usize,
}

/// Resampling settings shared by the regressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapOptions {
    pub replicates: usize,
    /// Consecutive groups are merged into at most this many blocks.
    pub max_blocks: usize,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self { replicates: 400, max_blocks: 1000, seed: 0x5eed }
    }
}

/// Power sums of one group of pairs in `x = W`, `y = W′ − W`, components
/// pooled. Enough for every regression here, so pairs can be streamed.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GroupMoments {
    pub count: f64,
    pub sx: f64,
    pub sx2: f64,
    pub sx3: f64,
    pub sx4: f64,
    pub sy: f64,
    pub sxy: f64,
    pub sx2y: f64,
    pub sy2: f64,
    pub sxy2: f64,
}

impl GroupMoments {
    #[inline]
    pub fn add(&mut self, x: f64, y: f64) {
        let x2 = x * x;
        self.count += 1.0;
        self.sx += x;
        self.sx2 += x2;
        self.sx3 += x2 * x;
        self.sx4 += x2 * x2;
        self.sy += y;
        self.sxy += x * y;
        self.sx2y += x2 * y;
        self.sy2 += y * y;
        self.sxy2 += x * y * y;
    }

    pub fn merge(&mut self, o: &Self) {
        self.count += o.count;
        self.sx += o.sx;
        self.sx2 += o.sx2;
        self.sx3 += o.sx3;
        self.sx4 += o.sx4;
        self.sy += o.sy;
        self.sxy += o.sxy;
        self.sx2y += o.sx2y;
        self.sy2 += o.sy2;
        self.sxy2 += o.sxy2;
    }

    pub fn mean_x(&self) -> f64 {
        self.sx / self.count
    }

    pub fn mean_y(&self) -> f64 {
        self.sy / self.count
    }
}

/// Pair moments grouped by the configuration the pairs were drawn from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairMoments {
    groups: Vec<GroupMoments>,
    pairs: usize,
}

impl PairMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pair_set<F: Real>(pairs: &PairSet<F>) -> Result<Self> {
        let mut m = Self::new();
        m.push_pair_set(pairs)?;
        Ok(m)
    }

    /// Appends the pairs of `set`; a new group starts wherever the group
    /// label changes, and never continues a group from an earlier call.
    pub fn push_pair_set<F: Real>(&mut self, set: &PairSet<F>) -> Result<()> {
        let w = set.width;
        if set.before.len() != set.len() * w || set.after.len() != set.before.len() {
            return Err(Error::Invalid("pair set columns have inconsistent lengths".into()));
        }
        let mut last = None;
        for (k, &g) in set.group.iter().enumerate() {
            if last != Some(g) {
                self.groups.push(GroupMoments::default());
                last = Some(g);
            }
            let acc = self.groups.last_mut().expect("pushed above");
            for j in 0..w {
                let x = set.before[k * w + j].to_f64_lossy();
                acc.add(x, set.after[k * w + j].to_f64_lossy() - x);
            }
        }
        self.pairs += set.len();
        Ok(())
    }

    pub fn append(&mut self, mut other: PairMoments) {
        self.groups.append(&mut other.groups);
        self.pairs += other.pairs;
    }

    pub fn pair_count(&self) -> usize {
        self.pairs
    }

    pub fn groups(&self) -> &[GroupMoments] {
        &self.groups
    }

    /// Consecutive groups merged into at most `max_blocks` blocks.
    fn blocks(&self, max_blocks: usize) -> Vec<GroupMoments> {
        let per = self.groups.len().div_ceil(max_blocks.max(1)).max(1);
        self.groups
            .chunks(per)
            .map(|c| {
                let mut b = GroupMoments::default();
                c.iter().for_each(|g| b.merge(g));
                b
            })
            .collect()
    }
}

/// Normal equations `XᵀX β = Xᵀy` for up to three regressors.
#[derive(Debug, Clone, Copy, Default)]
struct Normal {
    xtx: [[f64; 3]; 3],
    xty: [f64; 3],
}

impl Normal {
    fn merge(&mut self, o: &Normal) {
        for i in 0..3 {
            for j in 0..3 {
                self.xtx[i][j] += o.xtx[i][j];
            }
            self.xty[i] += o.xty[i];
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Design {
    /// `y ~ 1 + x`
    Linear,
    /// `y ~ 1 + x + x²`
    Quadratic,
    /// `y² ~ x`
    QvSlope,
    /// `y² ~ 1`
    QvConstant,
}

impl Design {
    fn size(self) -> usize {
        match self {
            Design::Linear => 2,
            Design::Quadratic => 3,
            Design::QvSlope | Design::QvConstant => 1,
        }
    }

    fn normal(self, g: &GroupMoments) -> Normal {
        let z = 0.0;
        let (xtx, xty) = match self {
            Design::Linear => ([[g.count, g.sx, z], [g.sx, g.sx2, z], [z; 3]], [g.sy, g.sxy, z]),
            Design::Quadratic => (
                [[g.count, g.sx, g.sx2], [g.sx, g.sx2, g.sx3], [g.sx2, g.sx3, g.sx4]],
                [g.sy, g.sxy, g.sx2y],
            ),
            Design::QvSlope => ([[g.sx2, z, z], [z; 3], [z; 3]], [g.sxy2, z, z]),
            Design::QvConstant => ([[g.count, z, z], [z; 3], [z; 3]], [g.sy2, z, z]),
        };
        Normal { xtx, xty }
    }
}

/// Solves the `p × p` normal equations after scaling to unit diagonal;
/// a tiny pivot means an ill-conditioned design.
fn solve_normal(s: &Normal, p: usize) -> Result<[f64; 3]> {
    let mut scale = [1.0; 3];
    for i in 0..p {
        if !(s.xtx[i][i] > 0.0) {
            return Err(Error::IllConditioned(format!("regressor {i} is identically zero")));
        }
        scale[i] = s.xtx[i][i].sqrt();
    }
    let mut a = [[0.0; 4]; 3];
    for i in 0..p {
        for j in 0..p {
            a[i][j] = s.xtx[i][j] / (scale[i] * scale[j]);
        }
        a[i][p] = s.xty[i] / scale[i];
    }
    for col in 0..p {
        let piv = (col..p).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap_or(col);
        a.swap(col, piv);
        if a[col][col].abs() < 1e-10 {
            return Err(Error::IllConditioned(format!("pivot {:.3e} in scaled normal equations", a[col][col])));
        }
        for r in 0..p {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=p {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let mut beta = [0.0; 3];
    for i in 0..p {
        beta[i] = a[i][p] / a[i][i] / scale[i];
    }
    Ok(beta)
}

/// Fits the blocks, then refits on `replicates` bootstrap resamples of the
/// blocks; returns point estimates and standard deviations of `derive(β)`.
fn bootstrap<const K: usize>(
    blocks: &[GroupMoments],
    design: Design,
    opts: BootstrapOptions,
    derive: impl Fn(&[f64; 3]) -> [f64; K],
) -> Result<([f64; K], [f64; K])> {
    if blocks.len() < 2 {
        return Err(Error::Degenerate("need at least two independent blocks".into()));
    }
    let p = design.size();
    let normals: Vec<Normal> = blocks.iter().map(|b| design.normal(b)).collect();
    let mut total = Normal::default();
    normals.iter().for_each(|b| total.merge(b));
    let point = derive(&solve_normal(&total, p)?);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut sum = [0.0; K];
    let mut sum_sq = [0.0; K];
    let mut ok = 0usize;
    for _ in 0..opts.replicates {
        let mut s = Normal::default();
        for _ in 0..normals.len() {
            s.merge(&normals[rng.random_range(0..normals.len())]);
        }
        if let Ok(beta) = solve_normal(&s, p) {
            let v = derive(&beta);
            for i in 0..K {
                sum[i] += v[i];
                sum_sq[i] += v[i] * v[i];
            }
            ok += 1;
        }
    }
    if ok < 2 {
        return Err(Error::IllConditioned("bootstrap resamples were singular".into()));
    }
    let mut se = [0.0; K];
    for i in 0..K {
        let m = sum[i] / ok as f64;
        se[i] = ((sum_sq[i] / ok as f64 - m * m).max(0.0) * ok as f64 / (ok - 1) as f64).sqrt();
    }
    Ok((point, se))
}

fn coef<F: Real>(name: &str, value: f64, se: f64) -> Coefficient<F> {
    Coefficient { name: name.into(), value: F::of(value), std_error: F::of(se) }
}

fn check_pairs(m: &PairMoments) -> Result<()> {
    if m.pair_count() < MIN_PAIRS {
        return Err(Error::Domain(format!("need at least {MIN_PAIRS} pairs, got {}", m.pair_count())));
    }
    Ok(())
}

/// Least-squares fit of `E[W′ − W | W]` with block-bootstrap standard errors.
///
/// `Linear` reports `intercept` and `lambda`; `Quadratic` reports `alpha`,
/// `linear`, `gamma` and `c = gamma/alpha`.
pub fn drift_regression<F: Real>(pairs: &PairSet<F>, model: DriftModel) -> Result<DriftFit<F>> {
    drift_fit(&PairMoments::from_pair_set(pairs)?, model, BootstrapOptions::default())
}

/// [`drift_regression`] on streamed moments.
pub fn drift_fit<F: Real>(moments: &PairMoments, model: DriftModel, opts: BootstrapOptions) -> Result<DriftFit<F>> {
    check_pairs(moments)?;
    let blocks = moments.blocks(opts.max_blocks);
    let coefficients = match model {
        DriftModel::Linear => {
            let (v, se) = bootstrap(&blocks, Design::Linear, opts, |b| [b[0], -b[1]])?;
            vec![coef("intercept", v[0], se[0]), coef("lambda", v[1], se[1])]
        }
        DriftModel::Quadratic => {
            let (v, se) = bootstrap(&blocks, Design::Quadratic, opts, |b| [b[0], b[1], -b[2], -b[2] / b[0]])?;
            vec![
                coef("alpha", v[0], se[0]),
                coef("linear", v[1], se[1]),
                coef("gamma", v[2], se[2]),
                coef("c", v[3], se[3]),
            ]
        }
    };
    Ok(DriftFit {
        model,
        coefficients,
        pair_count: moments.pair_count(),
        blocks: blocks.len(),
        increment_mean_t: F::of(increment_t(&blocks)),
    })
}

/// `t`-statistic of the mean increment using block means as the unit of
/// independence.
fn increment_t(blocks: &[GroupMoments]) -> f64 {
    let n: f64 = blocks.iter().map(|b| b.count).sum();
    let mean = blocks.iter().map(|b| b.sy).sum::<f64>() / n;
    // ratio-estimator variance for unequal block sizes
    let k = blocks.len() as f64;
    let var = blocks.iter().map(|b| (b.sy - mean * b.count).powi(2)).sum::<f64>() * k / ((k - 1.0) * n * n);
    if var > 0.0 {
        mean / var.sqrt()
    } else {
        0.0
    }
}

/// Fits `E[(W′−W)²|W]`: a slope through the origin in the critical regime,
/// a per-component constant otherwise.
pub fn quadratic_variation_regression<F: Real>(pairs: &PairSet<F>, regime: Regime) -> Result<QvFit<F>> {
    quadratic_variation_fit(&PairMoments::from_pair_set(pairs)?, regime, BootstrapOptions::default())
}

/// [`quadratic_variation_regression`] on streamed moments.
pub fn quadratic_variation_fit<F: Real>(moments: &PairMoments, regime: Regime, opts: BootstrapOptions) -> Result<QvFit<F>> {
    check_pairs(moments)?;
    let blocks = moments.blocks(opts.max_blocks);
    let (model, design, name) = match regime {
        Regime::Critical => (QvModel::Slope, Design::QvSlope, "k"),
        _ => (QvModel::Constant, Design::QvConstant, "constant"),
    };
    let (v, se) = bootstrap(&blocks, design, opts, |b| [b[0]])?;
    Ok(QvFit { model, coefficient: coef(name, v[0], se[0]), pair_count: moments.pair_count(), blocks: blocks.len() })
}

/// One equal-count bin of a conditional-mean table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin<F> {
    pub x_mean: F,
    pub y_mean: F,
    pub y_std_error: F,
    pub count: usize,
}

/// Sorts by `x` and averages `y` within `bins` equal-count bins.
pub fn binned_means<F: Real>(x: &[F], y: &[F], bins: usize) -> Result<Vec<Bin<F>>> {
    if x.len() != y.len() {
        return Err(Error::Invalid(format!("x has {} values, y has {}", x.len(), y.len())));
    }
    if bins == 0 || x.len() < 2 * bins {
        return Err(Error::Domain(format!("{} points cannot fill {bins} bins", x.len())));
    }
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].to_f64_lossy().total_cmp(&x[b].to_f64_lossy()));
    let n = idx.len();
    Ok((0..bins)
        .map(|b| {
            let part = &idx[b * n / bins..(b + 1) * n / bins];
            let m = part.len() as f64;
            let xm = part.iter().map(|&i| x[i].to_f64_lossy()).sum::<f64>() / m;
            let ym = part.iter().map(|&i| y[i].to_f64_lossy()).sum::<f64>() / m;
            let yv = part.iter().map(|&i| (y[i].to_f64_lossy() - ym).powi(2)).sum::<f64>() / (m - 1.0);
            Bin { x_mean: F::of(xm), y_mean: F::of(ym), y_std_error: F::of((yv / m).sqrt()), count: part.len() }
        })
        .collect())
}

/// Conditional means of the increment: each group contributes its mean
/// `W` and mean `W′ − W`, binned by `W`.
pub fn binned_drift<F: Real>(moments: &PairMoments, bins: usize) -> Result<Vec<Bin<F>>> {
    let x: Vec<F> = moments.groups().iter().map(|g| F::of(g.mean_x())).collect();
    let y: Vec<F> = moments.groups().iter().map(|g| F::of(g.mean_y())).collect();
    binned_means(&x, &y, bins)
}

/// Writes a bin table as CSV with header `x_mean,y_mean,y_std_error,count`.
pub fn write_bins_csv<F: Real, W: Write>(bins: &[Bin<F>], mut w: W) -> std::io::Result<()> {
    writeln!(w, "x_mean,y_mean,y_std_error,count")?;
    for b in bins {
        writeln!(w, "{},{},{},{}", b.x_mean, b.y_mean, b.y_std_error, b.count)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{normal_cdf, normal_quantile};
    use rand::Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut r = rng(seed);
        (0..n).map(|_| f64::standard_normal(&mut r)).collect()
    }

    #[test]
    fn ks_of_reference_sample_is_dkw_small() {
        let xs = normals(100_000, 1);
        let d = ks_distance(&xs, normal_cdf).unwrap();
        assert!(d <= 1.63 / (1e5f64).sqrt() * 1.5, "{d}");
    }

    #[test]
    fn ks_point_mass_against_step() {
        let xs = vec![0.0f64; 10];
        let step = |x: f64| if x >= 0.0 { 1.0 } else { 0.0 };
        assert_eq!(ks_distance(&xs, step).unwrap(), 0.0);
    }

    #[test]
    fn ks_uniform_against_wider_uniform() {
        let mut r = rng(2);
        let xs: Vec<f64> = (0..10_000).map(|_| r.random::<f64>()).collect();
        let d = ks_distance(&xs, |x: f64| (x / 2.0).clamp(0.0, 1.0)).unwrap();
        assert!((d - 0.5).abs() < 0.02, "{d}");
    }

    #[test]
    fn ks_needs_two_points() {
        assert!(ks_distance(&[1.0f64], normal_cdf).is_err());
    }

    #[test]
    fn w1_against_own_quantiles_is_zero() {
        let mut xs = normals(1000, 3);
        xs.sort_by(f64::total_cmp);
        assert_eq!(wasserstein1(&xs, |p| empirical_quantile(&xs, p)).unwrap(), 0.0);
    }

    #[test]
    fn w1_point_masses() {
        let xs = vec![0.0f64; 50];
        assert_eq!(wasserstein1(&xs, |_| 1.0).unwrap(), 1.0);
    }

    #[test]
    fn w1_detects_shift() {
        let xs = normals(10_000, 4);
        let w = wasserstein1(&xs, |p| normal_quantile(p) + 0.5).unwrap();
        assert!((w - 0.5).abs() < 0.03, "{w}");
    }

    #[test]
    fn tau_of_iid_is_half() {
        let xs = normals(50_000, 5);
        let t = autocorrelation_time(&xs).unwrap();
        assert!((t.tau - 0.5).abs() < 0.1, "{}", t.tau);
        assert!(t.reliable);
    }

    #[test]
    fn tau_of_ar1() {
        let rho = 0.9;
        let e = normals(200_000, 6);
        let mut x = vec![0.0; e.len()];
        for i in 1..e.len() {
            x[i] = rho * x[i - 1] + e[i];
        }
        let t = autocorrelation_time(&x).unwrap();
        let want = 0.5 * (1.0 + rho) / (1.0 - rho);
        assert!((t.tau - want).abs() < 0.2 * want, "{} vs {want}", t.tau);
    }

    #[test]
    fn tau_of_constant_is_degenerate() {
        assert!(matches!(autocorrelation_time(&[3.0f64; 2000]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn short_series_flagged() {
        let t = autocorrelation_time(&normals(200, 7)).unwrap();
        assert!(!t.reliable);
    }

    #[test]
    fn batch_means_of_iid() {
        let xs = normals(40_000, 8);
        let b = batch_means(&xs, 100).unwrap();
        assert_eq!(b.batches, 400);
        assert!((b.std_error - 1.0 / 200.0).abs() < 0.001, "{}", b.std_error);
    }

    #[test]
    fn summary_of_ar1() {
        let rho = 0.8;
        let e = normals(100_000, 9);
        let mut x = vec![0.0; e.len()];
        for i in 1..e.len() {
            x[i] = rho * x[i - 1] + e[i];
        }
        let s = EmpiricalSummary::from_series(&x).unwrap();
        let var = 1.0 / (1.0 - rho * rho);
        let tau = 0.5 * (1.0 + rho) / (1.0 - rho);
        assert!((s.variance - var).abs() < 0.05 * var);
        assert!(s.skewness.abs() < 0.05);
        assert!((s.tau - tau).abs() < 0.2 * tau);
        assert!(s.effective_sample_size <= s.sample_count as f64);
        let se = (var * 2.0 * tau / 1e5f64).sqrt();
        assert!((s.std_error - se).abs() < 0.3 * se, "{} vs {se}", s.std_error);
    }

    #[test]
    fn summary_pools_chains() {
        let a = normals(5000, 10);
        let b: Vec<f64> = normals(5000, 11).iter().map(|x| x + 1.0).collect();
        let s = EmpiricalSummary::from_chains(&[&a, &b]).unwrap();
        assert_eq!(s.sample_count, 10_000);
        assert!((s.mean - 0.5).abs() < 0.05);
    }

    fn synthetic_pairs(n: usize, drift: impl Fn(f64) -> f64, noise: impl Fn(f64) -> f64, seed: u64) -> PairSet<f64> {
        let mut r = rng(seed);
        let mut set = PairSet::new(1);
        for i in 0..n {
            let w = 0.2 + 2.0 * r.random::<f64>();
            let dw = drift(w) + noise(w) * f64::standard_normal(&mut r);
            set.push(&[w], &[w + dw], (i / 10) as u32);
        }
        set
    }

    #[test]
    fn linear_drift_recovered() {
        let pairs = synthetic_pairs(50_000, |w| -0.01 * w, |_| 0.05, 12);
        let fit = drift_regression(&pairs, DriftModel::Linear).unwrap();
        let l = fit.get("lambda").unwrap();
        assert!((l.value - 0.01).abs() < 3.0 * l.std_error, "{l:?}");
        assert!(l.std_error > 0.0 && l.std_error < 0.002);
    }

    #[test]
    fn quadratic_drift_ratio_recovered() {
        let pairs = synthetic_pairs(100_000, |w| 0.02 * (1.0 - 0.3 * w * w), |_| 0.02, 13);
        let fit = drift_regression(&pairs, DriftModel::Quadratic).unwrap();
        let c = fit.get("c").unwrap();
        assert!((c.value - 0.3).abs() < 3.0 * c.std_error, "{c:?}");
        let a = fit.get("alpha").unwrap();
        assert!((a.value - 0.02).abs() < 3.0 * a.std_error, "{a:?}");
    }

    #[test]
    fn qv_slope_recovered() {
        let k = 0.004;
        let pairs = synthetic_pairs(50_000, |_| 0.0, |w: f64| (k * w).sqrt(), 14);
        let fit = quadratic_variation_regression(&pairs, Regime::Critical).unwrap();
        assert_eq!(fit.model, QvModel::Slope);
        assert!((fit.coefficient.value - k).abs() < 3.0 * fit.coefficient.std_error, "{fit:?}");
        let fit = quadratic_variation_regression(&pairs, Regime::Supercritical).unwrap();
        assert!((fit.coefficient.value - k * 1.2).abs() < 3.0 * fit.coefficient.std_error, "{fit:?}");
    }

    #[test]
    fn streamed_moments_match_in_memory_fit() {
        let pairs = synthetic_pairs(30_000, |w| -0.02 * w, |_| 0.05, 18);
        let whole = drift_regression(&pairs, DriftModel::Linear).unwrap();
        let mut streamed = PairMoments::new();
        for chunk in 0..3 {
            let mut part = PairSet::new(1);
            for k in chunk * 10_000..(chunk + 1) * 10_000 {
                part.push(&pairs.before[k..k + 1], &pairs.after[k..k + 1], pairs.group[k]);
            }
            streamed.push_pair_set(&part).unwrap();
        }
        assert_eq!(streamed.groups().len(), 3000);
        let fit: DriftFit<f64> = drift_fit(&streamed, DriftModel::Linear, BootstrapOptions::default()).unwrap();
        assert_eq!(fit, whole);
        let bins = binned_drift::<f64>(&streamed, DEFAULT_BINS).unwrap();
        assert!(bins.first().unwrap().y_mean > bins.last().unwrap().y_mean);
    }

    #[test]
    fn collinear_design_rejected() {
        let mut set = PairSet::new(1);
        for i in 0..MIN_PAIRS {
            set.push(&[1.0f64], &[1.0 + (i % 7) as f64 * 1e-3], i as u32);
        }
        assert!(matches!(drift_regression(&set, DriftModel::Linear), Err(Error::IllConditioned(_))));
    }

    #[test]
    fn too_few_pairs_rejected() {
        let pairs = synthetic_pairs(100, |w| -w, |_| 1.0, 15);
        assert!(drift_regression(&pairs, DriftModel::Linear).is_err());
    }

    #[test]
    fn increment_mean_is_zero_for_symmetric_noise() {
        let pairs = synthetic_pairs(20_000, |_| 0.0, |_| 1.0, 16);
        let fit = drift_regression(&pairs, DriftModel::Linear).unwrap();
        assert!(fit.increment_mean_t.abs() < 4.0);
    }

    #[test]
    fn bins_are_equal_count_and_ordered() {
        let x: Vec<f64> = (0..1000).rev().map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let bins = binned_means(&x, &y, DEFAULT_BINS).unwrap();
        assert_eq!(bins.len(), 50);
        assert!(bins.iter().all(|b| b.count == 20));
        assert!(bins.windows(2).all(|w| w[0].x_mean < w[1].x_mean));
        assert!((bins[0].y_mean - 2.0 * bins[0].x_mean).abs() < 1e-12);
        let mut out = Vec::new();
        write_bins_csv(&bins, &mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().starts_with("x_mean,y_mean,y_std_error,count\n"));
    }

    #[test]
    fn distance_report_standardizes_critical() {
        let law = LimitLaw::Critical(crate::limits::CriticalDensity::<f64>::new(3).unwrap());
        let mut r = rng(17);
        let d = crate::limits::CriticalDensity::<f64>::new(3).unwrap();
        let xs: Vec<f64> = (0..20_000).map(|_| 7.0 * d.quantile(r.random::<f64>())).collect();
        let rep = distance_report(&xs, &law, true).unwrap();
        assert!(rep.ks < 0.015, "{rep:?}");
        assert!(rep.mean_standardized);
        let raw = distance_report(&xs, &law, false).unwrap();
        assert!(raw.ks > 0.5);
    }
}
