//! Sphere and von Mises–Fisher sampling, Glauber dynamics for the Gibbs
//! measure, and exchangeable-pair generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::limits::WStatistic;
use crate::model::{dot, norm, ModelParams, Regime, SpinConfiguration};
use crate::real::Real;

/// Generator for chain `chain_index` under `master_seed`.
///
/// The splitting function is `ChaCha8Rng::seed_from_u64(master_seed)` with
/// its stream set to `chain_index`: every chain reads a disjoint ChaCha
/// keystream, so chains never share random numbers and the assignment does
/// not depend on scheduling.
pub fn chain_rng(master_seed: u64, chain_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(chain_index);
    rng
}

/// Fills `out` with a uniform point on the unit sphere in `R^{out.len()}`.
pub fn uniform_sphere_into<F: Real, R: Rng + ?Sized>(out: &mut [F], rng: &mut R) {
    loop {
        for x in out.iter_mut() {
            *x = F::standard_normal(rng);
        }
        let len = norm(out);
        if len > F::of(1e-30) {
            for x in out.iter_mut() {
                *x = *x / len;
            }
            return;
        }
    }
}

/// A uniform point on `S^{N−1}`.
pub fn uniform_sphere<F: Real, R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<F> {
    assert!(dim >= 1, "sphere dimension must be positive");
    let mut out = vec![F::zero(); dim];
    uniform_sphere_into(&mut out, rng);
    out
}

/// Draws `t = ⟨θ, μ⟩` from the density `∝ e^{κt}(1 − t²)^{(N−3)/2}` on
/// `[−1, 1]`; returns `(t, trials)`.
///
/// `N = 3` inverts the exponential CDF exactly; other dimensions use Wood's
/// rejection scheme.
pub fn vmf_polar<F: Real, R: Rng + ?Sized>(dim: usize, kappa: F, rng: &mut R) -> (F, u32) {
    if dim == 3 {
        let u = F::open01(rng);
        if kappa == F::zero() {
            return (u + u - F::one(), 1);
        }
        // t = 1 + ln(u + (1 − u)e^{−2κ})/κ
        let t = F::one() + ((F::one() - u) * (-(kappa + kappa)).exp_m1()).ln_1p() / kappa;
        return (t.max(-F::one()), 1);
    }
    let m1 = F::of_usize(dim - 1);
    let one = F::one();
    let two = F::of(2.0);
    // b = (−2κ + √(4κ² + (N−1)²))/(N−1) in cancellation-free form
    let b = m1 / (two * kappa + (F::of(4.0) * kappa * kappa + m1 * m1).sqrt());
    let x0 = (one - b) / (one + b);
    // ln(1 − x0²) = ln(4b) − 2 ln(1 + b)
    let c = kappa * x0 + m1 * ((F::of(4.0) * b).ln() - two * b.ln_1p());
    let shape = m1 * F::of(0.5);
    let mut trials = 0u32;
    loop {
        trials += 1;
        let z = F::symmetric_beta(shape, rng);
        let w = (one - (one + b) * z) / (one - (one - b) * z);
        let u = F::open01(rng);
        if kappa * w + m1 * (one - x0 * w).ln() - c >= u.ln() {
            return (w.max(-one).min(one), trials);
        }
    }
}

/// Writes into `out` a draw from the von Mises–Fisher law with mean
/// direction `mu` and concentration `kappa`; returns the number of
/// rejection trials used.
pub fn vmf_sample_into<F: Real, R: Rng + ?Sized>(mu: &[F], kappa: F, rng: &mut R, out: &mut [F]) -> Result<u32> {
    if !(kappa >= F::zero()) {
        return domain(format!("vMF concentration must be >= 0, got {kappa}"));
    }
    let dim = mu.len();
    if dim < 2 {
        return domain("vMF sampling needs dimension >= 2");
    }
    if kappa == F::zero() {
        uniform_sphere_into(out, rng);
        return Ok(1);
    }
    let (t, trials) = vmf_polar(dim, kappa, rng);
    let s = (F::one() - t * t).max(F::zero()).sqrt();
    if dim == 2 {
        let sign = if rng.random::<bool>() { F::one() } else { -F::one() };
        out[0] = t * mu[0] - sign * s * mu[1];
        out[1] = t * mu[1] + sign * s * mu[0];
    } else {
        // tangent direction: Gaussian with the μ component removed
        loop {
            for x in out.iter_mut() {
                *x = F::standard_normal(rng);
            }
            let along = dot(out, mu);
            for (x, &m) in out.iter_mut().zip(mu) {
                *x = *x - along * m;
            }
            let len = norm(out);
            if len > F::of(1e-12) {
                for (x, &m) in out.iter_mut().zip(mu) {
                    *x = t * m + s * *x / len;
                }
                break;
            }
        }
    }
    let len = norm(out);
    for x in out.iter_mut() {
        *x = *x / len;
    }
    Ok(trials)
}

/// A draw from the von Mises–Fisher law on `S^{N−1}`.
pub fn vmf_sample<F: Real, R: Rng + ?Sized>(mu: &[F], kappa: F, rng: &mut R) -> Result<Vec<F>> {
    let mut out = vec![F::zero(); mu.len()];
    vmf_sample_into(mu, kappa, rng, &mut out)?;
    Ok(out)
}

/// One `(W, W′)` pair from a single Glauber resampling. Vector statistics use
/// all components; scalar ones have length 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeablePairSample<F> {
    pub w_before: Vec<F>,
    pub w_after: Vec<F>,
    pub regime: Regime,
}

/// Many exchangeable pairs in columnar form. `group` labels the
/// configuration each pair was drawn from, for resampling by block.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairSet<F> {
    pub width: usize,
    pub before: Vec<F>,
    pub after: Vec<F>,
    pub group: Vec<u32>,
}

impl<F: Real> PairSet<F> {
    pub fn new(width: usize) -> Self {
        Self { width, before: Vec::new(), after: Vec::new(), group: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.group.len()
    }

    pub fn is_empty(&self) -> bool {
        self.group.is_empty()
    }

    pub fn push(&mut self, before: &[F], after: &[F], group: u32) {
        debug_assert_eq!(before.len(), self.width);
        self.before.extend_from_slice(before);
        self.after.extend_from_slice(after);
        self.group.push(group);
    }

    /// Pairs given one at a time, each in its own group.
    pub fn from_samples(samples: &[ExchangeablePairSample<F>]) -> Self {
        let width = samples.first().map(|s| s.w_before.len()).unwrap_or(1);
        let mut set = Self::new(width);
        for (i, s) in samples.iter().enumerate() {
            set.push(&s.w_before, &s.w_after, i as u32);
        }
        set
    }

    pub fn append(&mut self, mut other: PairSet<F>) {
        if self.is_empty() {
            self.width = other.width;
        }
        let offset = self.group.last().map(|&g| g + 1).unwrap_or(0);
        self.before.append(&mut other.before);
        self.after.append(&mut other.after);
        self.group.extend(other.group.iter().map(|g| g + offset));
    }
}

/// Resumable description of a chain at a sweep boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainCheckpoint<F> {
    pub seed: u64,
    pub chain_index: u64,
    pub params: ModelParams<F>,
    pub sweep_count: u64,
    /// Position in the chain's ChaCha keystream.
    pub rng_word_pos: u128,
}

/// A configuration, its parameters, its private random stream and the
/// number of completed sweeps.
#[derive(Debug, Clone)]
pub struct ChainState<F> {
    pub config: SpinConfiguration<F>,
    pub params: ModelParams<F>,
    rng: ChaCha8Rng,
    seed: u64,
    chain_index: u64,
    sweep_count: u64,
    vmf_draws: u64,
    vmf_trials: u64,
    loo: Vec<F>,
    draw: Vec<F>,
    stat_a: Vec<F>,
    stat_b: Vec<F>,
    spare: Vec<F>,
}

impl<F: Real> ChainState<F> {
    pub fn new(params: ModelParams<F>, config: SpinConfiguration<F>, seed: u64, chain_index: u64) -> Result<Self> {
        params.validate()?;
        if config.dim() != params.dim || config.n_sites() != params.n_sites {
            return Err(crate::Error::Invalid(format!(
                "configuration is {} sites in R^{}, parameters want {} in R^{}",
                config.n_sites(),
                config.dim(),
                params.n_sites,
                params.dim
            )));
        }
        let dim = params.dim;
        Ok(Self {
            config,
            params,
            rng: chain_rng(seed, chain_index),
            seed,
            chain_index,
            sweep_count: 0,
            vmf_draws: 0,
            vmf_trials: 0,
            loo: vec![F::zero(); dim],
            draw: vec![F::zero(); dim],
            stat_a: vec![F::zero(); dim],
            stat_b: vec![F::zero(); dim],
            spare: vec![F::zero(); dim],
        })
    }

    /// Chain started from independent uniform spins drawn from its own stream.
    pub fn from_uniform(params: ModelParams<F>, seed: u64, chain_index: u64) -> Result<Self> {
        params.validate()?;
        let mut rng = chain_rng(seed, chain_index);
        let mut flat = vec![F::zero(); params.dim * params.n_sites];
        for s in flat.chunks_exact_mut(params.dim) {
            uniform_sphere_into(s, &mut rng);
        }
        let config = SpinConfiguration::from_flat(params.dim, flat)?;
        let mut state = Self::new(params, config, seed, chain_index)?;
        state.rng = rng;
        Ok(state)
    }

    /// Chain started with every spin along the first axis.
    pub fn from_aligned(params: ModelParams<F>, seed: u64, chain_index: u64) -> Result<Self> {
        params.validate()?;
        let mut e1 = vec![F::zero(); params.dim];
        e1[0] = F::one();
        let config = SpinConfiguration::aligned(params.n_sites, &e1)?;
        Self::new(params, config, seed, chain_index)
    }

    pub fn sweep_count(&self) -> u64 {
        self.sweep_count
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Fraction of vMF rejection trials that were accepted.
    pub fn vmf_acceptance_rate(&self) -> f64 {
        if self.vmf_trials == 0 {
            1.0
        } else {
            self.vmf_draws as f64 / self.vmf_trials as f64
        }
    }

    /// Draws the heat-bath replacement for `site` into `self.draw`, given
    /// `self.loo` already holds `σ^{(site)}`.
    #[inline]
    fn draw_conditional(&mut self) {
        let r = norm(&self.loo);
        let kappa = self.params.beta * r / F::of_usize(self.params.n_sites);
        if r == F::zero() || kappa == F::zero() {
            uniform_sphere_into(&mut self.draw, &mut self.rng);
            self.vmf_draws += 1;
            self.vmf_trials += 1;
            return;
        }
        for x in self.loo.iter_mut() {
            *x = *x / r;
        }
        let trials = vmf_sample_into(&self.loo, kappa, &mut self.rng, &mut self.draw)
            .expect("concentration is non-negative by construction");
        self.vmf_draws += 1;
        self.vmf_trials += trials as u64;
    }

    /// Resamples `site` from its conditional law given the other spins.
    #[inline]
    pub fn update_site(&mut self, site: usize) {
        self.config.leave_one_out_into(site, &mut self.loo);
        self.draw_conditional();
        self.config.replace_spin_unchecked(site, &self.draw);
    }

    /// One Glauber step at a uniformly chosen site; returns the site.
    pub fn glauber_step(&mut self) -> usize {
        let site = self.rng.random_range(0..self.params.n_sites);
        self.update_site(site);
        site
    }

    /// `n` heat-bath updates in site order.
    pub fn gibbs_sweep(&mut self) {
        for site in 0..self.params.n_sites {
            self.update_site(site);
        }
        self.sweep_count += 1;
    }

    pub fn sweeps(&mut self, count: u64) {
        for _ in 0..count {
            self.gibbs_sweep();
        }
    }

    /// Evaluates `statistic` before and after one Glauber resampling of a
    /// uniformly chosen site. The configuration is left as it was; only the
    /// random stream advances.
    pub fn make_pair(&mut self, statistic: &WStatistic<F>) -> ExchangeablePairSample<F> {
        let width = statistic.width(self.params.dim);
        let mut set = PairSet::new(width);
        self.make_pairs_into(statistic, 1, 0, &mut set);
        ExchangeablePairSample { w_before: set.before, w_after: set.after, regime: statistic.regime() }
    }

    /// Appends `count` independent pairs drawn from the current
    /// configuration to `set`, all labelled `group`.
    pub fn make_pairs_into(&mut self, statistic: &WStatistic<F>, count: usize, group: u32, set: &mut PairSet<F>) {
        let s2 = self.config.total_spin_norm_sq();
        if let Some(before) = statistic.scalar_from_norm_sq(&self.params, s2) {
            // scalar statistics see σ′ only through t = ⟨σ′, σ^{(I)}⟩/|σ^{(I)}|:
            // |σ^{(I)} + σ′|² = |σ^{(I)}|² + 2|σ^{(I)}|t + 1
            let two = F::of(2.0);
            let n = F::of_usize(self.params.n_sites);
            for _ in 0..count {
                let site = self.rng.random_range(0..self.params.n_sites);
                let along = dot(self.config.total_spin(), self.config.spin(site));
                let loo_sq = (s2 - two * along + F::one()).max(F::zero());
                let r = loo_sq.sqrt();
                let (t, trials) = vmf_polar(self.params.dim, self.params.beta * r / n, &mut self.rng);
                self.vmf_draws += 1;
                self.vmf_trials += trials as u64;
                let after = statistic
                    .scalar_from_norm_sq(&self.params, loo_sq + two * r * t + F::one())
                    .expect("scalar statistic");
                set.push(&[before], &[after], group);
            }
            return;
        }
        let width = statistic.width(self.params.dim);
        let mut before = std::mem::take(&mut self.stat_a);
        let mut after = std::mem::take(&mut self.stat_b);
        statistic.evaluate_total(&self.params, self.config.total_spin(), &mut before[..width]);
        let mut total = std::mem::take(&mut self.spare);
        for _ in 0..count {
            let site = self.rng.random_range(0..self.params.n_sites);
            self.config.leave_one_out_into(site, &mut self.loo);
            // draw_conditional normalizes loo in place, so keep σ^{(I)} aside
            total.copy_from_slice(&self.loo);
            self.draw_conditional();
            for (t, &d) in total.iter_mut().zip(&self.draw) {
                *t = *t + d;
            }
            statistic.evaluate_total(&self.params, &total, &mut after[..width]);
            set.push(&before[..width], &after[..width], group);
        }
        self.spare = total;
        self.stat_a = before;
        self.stat_b = after;
    }

    /// Current value of `statistic`.
    pub fn statistic(&self, statistic: &WStatistic<F>) -> Vec<F> {
        statistic.evaluate(&self.params, &self.config)
    }

    /// Unbiased estimate of `E⟨σ_1, σ_2⟩` from one configuration, averaging
    /// over all ordered pairs: `(|S_n|² − n)/(n(n − 1))`.
    pub fn pair_correlation(&self) -> F {
        let n = F::of_usize(self.params.n_sites);
        (self.config.total_spin_norm_sq() - n) / (n * (n - F::one()))
    }

    pub fn checkpoint(&self) -> ChainCheckpoint<F> {
        ChainCheckpoint {
            seed: self.seed,
            chain_index: self.chain_index,
            params: self.params,
            sweep_count: self.sweep_count,
            rng_word_pos: self.rng.get_word_pos(),
        }
    }

    /// Rebuilds a chain from a checkpoint and the configuration dumped with it.
    pub fn restore(checkpoint: &ChainCheckpoint<F>, config: SpinConfiguration<F>) -> Result<Self> {
        let mut state = Self::new(checkpoint.params, config, checkpoint.seed, checkpoint.chain_index)?;
        state.rng.set_word_pos(checkpoint.rng_word_pos);
        state.sweep_count = checkpoint.sweep_count;
        Ok(state)
    }
}
