//! The three `W_n` statistics, their limit laws, the critical density and
//! its Stein characterizing operator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, ModelParams, Regime, SpinConfiguration};
use crate::quad::{integrate, integrate_to_infinity, Tolerance};
use crate::real::Real;
use crate::specfun::{gamma_p, ln_gamma, normal_cdf, normal_quantile};

/// Density `p(t) = t^{(N−2)/2} e^{−k̃t²} / z` on `t ≥ 0` with
/// `k̃ = 1/(4N²(N+2))` and `z = ½ k̃^{−N/4} Γ(N/4)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalDensity<F> {
    pub dim: usize,
    pub k_tilde: F,
    pub z: F,
}

impl<F: Real> CriticalDensity<F> {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Domain(format!("dimension must be at least 2, got {dim}")));
        }
        let n = F::of_usize(dim);
        let k_tilde = F::one() / (F::of(4.0) * n * n * (n + F::of(2.0)));
        Ok(Self { dim, k_tilde, z: Self::closed_form_z(n, k_tilde) })
    }

    fn closed_form_z(n: F, k_tilde: F) -> F {
        let quarter = n * F::of(0.25);
        F::of(0.5) * (ln_gamma(quarter) - quarter * k_tilde.ln()).exp()
    }

    fn quarter(&self) -> F {
        F::of_usize(self.dim) * F::of(0.25)
    }

    pub fn pdf(&self, t: F) -> F {
        if t < F::zero() {
            return F::zero();
        }
        let power = F::of_usize(self.dim) * F::of(0.5) - F::one();
        if t == F::zero() {
            return if self.dim == 2 { F::one() / self.z } else { F::zero() };
        }
        (power * t.ln() - self.k_tilde * t * t).exp() / self.z
    }

    /// `P(X ≤ t) = P(N/4, k̃t²)`.
    pub fn cdf(&self, t: F) -> F {
        if t <= F::zero() {
            return F::zero();
        }
        gamma_p(self.quarter(), self.k_tilde * t * t)
    }

    /// `E X^p = k̃^{−p/2} Γ(N/4 + p/2) / Γ(N/4)`.
    pub fn moment(&self, p: F) -> F {
        let q = self.quarter();
        (ln_gamma(q + p * F::of(0.5)) - ln_gamma(q) - p * F::of(0.5) * self.k_tilde.ln()).exp()
    }

    pub fn mean(&self) -> F {
        self.moment(F::one())
    }

    /// `E X² = N/(4k̃) = N³(N+2)`.
    pub fn second_moment(&self) -> F {
        F::of_usize(self.dim) / (F::of(4.0) * self.k_tilde)
    }

    pub fn std_dev(&self) -> F {
        let m = self.mean();
        (self.second_moment() - m * m).sqrt()
    }

    /// `√((N−2)/(4k̃))`; 0 for `N = 2`.
    pub fn mode(&self) -> F {
        (F::of_usize(self.dim - 2) / (F::of(4.0) * self.k_tilde)).sqrt()
    }

    pub fn quantile(&self, p: F) -> F {
        if p <= F::zero() {
            return F::zero();
        }
        if p >= F::one() {
            return F::infinity();
        }
        let mut lo = F::zero();
        let mut hi = self.mean() + F::of(4.0) * self.std_dev();
        while self.cdf(hi) < p {
            hi = hi * F::of(2.0);
        }
        let mut t = (lo + hi) * F::of(0.5);
        for _ in 0..200 {
            let err = self.cdf(t) - p;
            if err < F::zero() {
                lo = t;
            } else {
                hi = t;
            }
            let d = self.pdf(t);
            let mut next = if d > F::zero() { t - err / d } else { (lo + hi) * F::of(0.5) };
            if !(next > lo && next < hi) {
                next = (lo + hi) * F::of(0.5);
            }
            if (next - t).abs() <= F::epsilon() * F::of(4.0) * t.max(F::one()) {
                return next;
            }
            t = next;
        }
        t
    }
}

/// `p(t)` for the critical limit law in dimension `N`; 0 for `t < 0`.
pub fn critical_pdf<F: Real>(dim: usize, t: F) -> Result<F> {
    Ok(CriticalDensity::new(dim)?.pdf(t))
}

/// Theoretical limit of a `W_n` statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum LimitLaw<F> {
    /// Standard Gaussian vector in `R^N`.
    GaussianVector { dim: usize },
    /// Centered scalar Gaussian.
    GaussianScalar { variance: F },
    Critical(CriticalDensity<F>),
}

impl<F: Real> LimitLaw<F> {
    /// CDF of one coordinate of the law.
    pub fn marginal_cdf(&self, x: F) -> F {
        match self {
            LimitLaw::GaussianVector { .. } => normal_cdf(x),
            LimitLaw::GaussianScalar { variance } => normal_cdf(x / variance.sqrt()),
            LimitLaw::Critical(d) => d.cdf(x),
        }
    }

    pub fn marginal_quantile(&self, p: F) -> F {
        match self {
            LimitLaw::GaussianVector { .. } => normal_quantile(p),
            LimitLaw::GaussianScalar { variance } => normal_quantile(p) * variance.sqrt(),
            LimitLaw::Critical(d) => d.quantile(p),
        }
    }

    pub fn marginal_mean(&self) -> F {
        match self {
            LimitLaw::Critical(d) => d.mean(),
            _ => F::zero(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            LimitLaw::GaussianVector { dim } => format!("standard gaussian in R^{dim} (one coordinate)"),
            LimitLaw::GaussianScalar { variance } => format!("gaussian(0, {variance})"),
            LimitLaw::Critical(d) => format!("critical density N={} k_tilde={} z={}", d.dim, d.k_tilde, d.z),
        }
    }
}

fn regime_error<F: Real>(what: &str, params: &ModelParams<F>) -> Error {
    Error::Regime(format!("{what} is undefined at beta = {} with N = {}", params.beta, params.dim))
}

/// `W_n = √((N−β)/n) S_n`.
pub fn w_subcritical<F: Real>(config: &SpinConfiguration<F>, params: &ModelParams<F>) -> Result<Vec<F>> {
    if params.regime() != Regime::Subcritical {
        return Err(regime_error("subcritical statistic", params));
    }
    let scale = subcritical_scale(params);
    Ok(config.total_spin().iter().map(|&s| scale * s).collect())
}

fn subcritical_scale<F: Real>(params: &ModelParams<F>) -> F {
    ((F::of_usize(params.dim) - params.beta) / F::of_usize(params.n_sites)).sqrt()
}

/// `W_n = √n [β²|S_n|²/(n²b²) − 1]`.
pub fn w_supercritical<F: Real>(config: &SpinConfiguration<F>, params: &ModelParams<F>, b: F) -> Result<F> {
    if params.regime() != Regime::Supercritical {
        return Err(regime_error("supercritical statistic", params));
    }
    Ok(supercritical_from_norm_sq(params, b, config.total_spin_norm_sq()))
}

fn supercritical_from_norm_sq<F: Real>(params: &ModelParams<F>, b: F, s2: F) -> F {
    let n = F::of_usize(params.n_sites);
    let scale = params.beta / (n * b);
    n.sqrt() * (scale * scale * s2 - F::one())
}

/// `W_n = c_N |S_n|² / n^{3/2}`.
pub fn w_critical<F: Real>(config: &SpinConfiguration<F>, c_n: F) -> F {
    critical_from_norm_sq(config.n_sites(), c_n, config.total_spin_norm_sq())
}

fn critical_from_norm_sq<F: Real>(n_sites: usize, c_n: F, s2: F) -> F {
    let n = F::of_usize(n_sites);
    c_n * s2 / (n * n.sqrt())
}

/// Which `W_n` statistic to record, with the constants it needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WStatistic<F> {
    Subcritical,
    Supercritical { b: F },
    Critical { c_n: F },
}

impl<F: Real> WStatistic<F> {
    pub fn regime(&self) -> Regime {
        match self {
            WStatistic::Subcritical => Regime::Subcritical,
            WStatistic::Supercritical { .. } => Regime::Supercritical,
            WStatistic::Critical { .. } => Regime::Critical,
        }
    }

    /// Number of components: `N` for the subcritical vector, else 1.
    pub fn width(&self, dim: usize) -> usize {
        match self {
            WStatistic::Subcritical => dim,
            _ => 1,
        }
    }

    /// Rejects a statistic whose regime does not match the parameters.
    pub fn check(&self, params: &ModelParams<F>) -> Result<()> {
        let actual = params.regime();
        if actual != self.regime() {
            return Err(Error::Regime(format!(
                "{} statistic requested but N = {}, beta = {} is {actual}",
                self.regime(),
                params.dim,
                params.beta
            )));
        }
        match *self {
            WStatistic::Supercritical { b } if !(b > F::zero()) => {
                Err(Error::Invalid(format!("supercritical statistic needs b > 0, got {b}")))
            }
            WStatistic::Critical { c_n } if !(c_n > F::zero()) => {
                Err(Error::Invalid(format!("critical statistic needs c_N > 0, got {c_n}")))
            }
            _ => Ok(()),
        }
    }

    /// Value of a scalar statistic from `|S_n|²`; `None` for the vector one.
    #[inline]
    pub fn scalar_from_norm_sq(&self, params: &ModelParams<F>, s2: F) -> Option<F> {
        match *self {
            WStatistic::Subcritical => None,
            WStatistic::Supercritical { b } => Some(supercritical_from_norm_sq(params, b, s2)),
            WStatistic::Critical { c_n } => Some(critical_from_norm_sq(params.n_sites, c_n, s2)),
        }
    }

    /// Evaluates the statistic from a total spin vector into `out`
    /// (length [`width`](Self::width)).
    #[inline]
    pub fn evaluate_total(&self, params: &ModelParams<F>, total: &[F], out: &mut [F]) {
        match *self {
            WStatistic::Subcritical => {
                let scale = subcritical_scale(params);
                for (o, &s) in out.iter_mut().zip(total) {
                    *o = scale * s;
                }
            }
            _ => out[0] = self.scalar_from_norm_sq(params, dot(total, total)).expect("scalar statistic"),
        }
    }

    pub fn evaluate(&self, params: &ModelParams<F>, config: &SpinConfiguration<F>) -> Vec<F> {
        let mut out = vec![F::zero(); self.width(params.dim)];
        self.evaluate_total(params, config.total_spin(), &mut out);
        out
    }
}

/// `[T_p f](x) = x f′(x) + (N/2 − 2k̃x²) f(x)`.
pub fn stein_operator<F: Real>(dim: usize, f: impl Fn(F) -> F, df: impl Fn(F) -> F, x: F) -> F {
    let n = F::of_usize(dim);
    let k_tilde = F::one() / (n * n * (F::of(4.0) * n + F::of(8.0)));
    x * df(x) + (n * F::of(0.5) - F::of(2.0) * k_tilde * x * x) * f(x)
}

/// Tabulated solution `f_h` of `T_p f = h − E h(X)` on a geometric grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteinSolution<F> {
    pub dim: usize,
    pub expectation: F,
    pub grid: Vec<F>,
    pub values: Vec<F>,
    /// `max |T_p f_h − (h − Eh)|` over interior grid points away from the
    /// breakpoints of `h`.
    pub residual_max: F,
    /// `max |f_left − f_right|` where both representations are resolvable.
    pub representation_gap: F,
    pub sup_norm: F,
}

impl<F: Real> SteinSolution<F> {
    /// Linear interpolation on the grid (clamped at the ends).
    pub fn value_at(&self, t: F) -> F {
        let g = &self.grid;
        if t <= g[0] {
            return self.values[0];
        }
        let last = g.len() - 1;
        if t >= g[last] {
            return self.values[last];
        }
        let i = g.partition_point(|&x| x <= t);
        let w = (t - g[i - 1]) / (g[i] - g[i - 1]);
        self.values[i - 1] * (F::one() - w) + self.values[i] * w
    }
}

const STEIN_GRID_POINTS: usize = 240;
const STEIN_TOLERANCE: f64 = 1e-6;

/// Solves the Stein equation for the critical density with a bounded test
/// function `h`.
pub fn stein_solve<F: Real>(dim: usize, h: impl Fn(F) -> F) -> Result<SteinSolution<F>> {
    stein_solve_with_breaks(dim, h, &[])
}

/// As [`stein_solve`], with the jump locations of a piecewise continuous `h`
/// passed so quadrature splits there and the residual check skips them.
pub fn stein_solve_with_breaks<F: Real>(dim: usize, h: impl Fn(F) -> F, breaks: &[F]) -> Result<SteinSolution<F>> {
    let density = CriticalDensity::<F>::new(dim)?;
    let tol = Tolerance { abs: F::of(1e-15), rel: F::of(1e-13) };
    let mut cuts: Vec<F> = breaks.iter().copied().filter(|&b| b > F::zero()).collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));

    // ∫_a^b g p over a finite range, split at the breakpoints
    let finite = |a: F, b: F, g: &dyn Fn(F) -> F| -> Result<F> {
        let mut pts = vec![a];
        pts.extend(cuts.iter().copied().filter(|&c| c > a && c < b));
        pts.push(b);
        let mut acc = F::zero();
        for w in pts.windows(2) {
            acc = acc + integrate(|s| g(s) * density.pdf(s), w[0], w[1], tol)?.value;
        }
        Ok(acc)
    };
    let tail = |a: F, g: &dyn Fn(F) -> F| -> Result<F> {
        let last = cuts.iter().copied().filter(|&c| c > a).fold(a, F::max);
        let head = if last > a { finite(a, last, g)? } else { F::zero() };
        Ok(head + integrate_to_infinity(|s| g(s) * density.pdf(s), last, tol)?.value)
    };

    let expectation = tail(F::zero(), &|s| h(s))?;
    let centered = |s: F| h(s) - expectation;
    let left = |t: F| -> Result<F> { Ok(finite(F::zero(), t, &centered)? / (t * density.pdf(t))) };
    let right = |t: F| -> Result<F> { Ok(-tail(t, &centered)? / (t * density.pdf(t))) };
    let mode = density.mode().max(density.mean() * F::of(0.5));
    let solve = |t: F| if t <= mode { left(t) } else { right(t) };

    let t_max = density.mode() + F::of(8.0) * density.std_dev();
    let t_min = t_max * F::of(1e-3);
    let ratio = (t_max / t_min).powf(F::one() / F::of_usize(STEIN_GRID_POINTS - 1));
    let grid: Vec<F> = (0..STEIN_GRID_POINTS).map(|i| t_min * ratio.powi(i as i32)).collect();

    let mut values = Vec::with_capacity(grid.len());
    for &t in &grid {
        values.push(solve(t)?);
    }

    // representations agree where t p(t) is large enough for cancellation in
    // the "wrong-side" integral not to swamp the comparison
    let weight_max = grid.iter().map(|&t| t * density.pdf(t)).fold(F::zero(), F::max);
    let mut gap = F::zero();
    for &t in &grid {
        if t * density.pdf(t) >= weight_max * F::of(1e-3) {
            gap = gap.max((left(t)? - right(t)?).abs());
        }
    }
    if gap > F::of(STEIN_TOLERANCE) {
        return Err(Error::Convergence(format!("Stein solution representations disagree by {gap}")));
    }

    let mut residual = F::zero();
    for (i, &t) in grid.iter().enumerate().skip(1).take(grid.len() - 2) {
        let delta = t * F::of(1e-4);
        if cuts.iter().any(|&c| (c - t).abs() <= delta * F::of(4.0)) {
            continue;
        }
        let d = (solve(t + delta)? - solve(t - delta)?) / (F::of(2.0) * delta);
        let op = stein_operator(dim, |_| values[i], |_| d, t);
        residual = residual.max((op - centered(t)).abs());
    }
    let sup_norm = values.iter().fold(F::zero(), |m, v| m.max(v.abs()));
    Ok(SteinSolution { dim, expectation, grid, values, residual_max: residual, representation_gap: gap, sup_norm })
}

/// Minimum number of samples accepted by [`calibrate_c_n`].
pub const MIN_CALIBRATION_SAMPLES: usize = 1000;

/// `c_N = 1 / mean(|S_n|²/n^{3/2})`, making the empirical mean of `W_n`
/// exactly 1.
pub fn calibrate_c_n<F: Real>(samples: &[F]) -> Result<F> {
    if samples.len() < MIN_CALIBRATION_SAMPLES {
        return Err(Error::Invalid(format!(
            "calibration needs at least {MIN_CALIBRATION_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let mean = samples.iter().copied().sum::<F>() / F::of_usize(samples.len());
    if !(mean > F::zero()) {
        return Err(Error::Degenerate(format!("sample mean {mean} is not positive")));
    }
    Ok(F::one() / mean)
}
