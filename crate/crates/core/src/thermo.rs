//! Exact thermodynamics of the mean-field model: the function `Φ_β`, the
//! spontaneous magnetization fixed point, the free energy, scalar rate
//! functions, the entropy-minimizing tilted densities and the supercritical
//! fluctuation variance.
//!
//! Throughout, `ν = N/2 − 1`, `f(b) = I_{N/2}(b)/I_{N/2−1}(b)` and
//! `Z(b) = Γ(N/2)(2/b)^ν I_ν(b)` is the normalized partition function of the
//! tilt `e^{b⟨θ,e⟩}` against the uniform law on `S^{N−1}`. Then
//!
//! ```text
//! Φ_β(b) = b f(b) − ln Z(b) − (β/2) f(b)²,
//! ```
//!
//! which is the relative entropy of the tilted marginal minus `βc²/2` with
//! `c = f(b)`, and satisfies `Φ_β(0⁺) = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::Regime;
use crate::quad::{integrate_sphere_marginal, Quadrature, Tolerance};
use crate::real::Real;
use crate::specfun::{
    bessel_i, bessel_ratio, bessel_ratio_derivative, ln_gamma, ln_normalized_series, BesselOrder,
};

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return domain(format!("dimension must be at least 2, got {dim}"));
    }
    Ok(())
}

/// `ln Z(b)`, the log-partition function of the tilt.
pub fn log_partition<F: Real>(dim: usize, b: F) -> Result<F> {
    check_dim(dim)?;
    ln_normalized_series(BesselOrder::for_dimension(dim), b.abs())
}

/// `Φ_β(r)`; `Φ_β(0) = 0` by continuity.
pub fn phi<F: Real>(dim: usize, beta: F, r: F) -> Result<F> {
    check_dim(dim)?;
    if !(r >= F::zero()) {
        return domain(format!("phi needs r >= 0, got {r}"));
    }
    if r == F::zero() {
        return Ok(F::zero());
    }
    let f = bessel_ratio(dim, r)?;
    Ok(r * f - log_partition(dim, r)? - beta * f * f * F::of(0.5))
}

/// `Φ_β′(r) = f′(r)(r − βf(r))`.
pub fn phi_derivative<F: Real>(dim: usize, beta: F, r: F) -> Result<F> {
    check_dim(dim)?;
    if r == F::zero() {
        return Ok(F::zero());
    }
    let f = bessel_ratio(dim, r)?;
    Ok(bessel_ratio_derivative(dim, r)? * (r - beta * f))
}

/// `Φ_β″(r) = f″(r)(r − βf(r)) + f′(r)(1 − βf′(r))`, with
/// `Φ_β″(0) = (1 − β/N)/N`.
pub fn phi_second_derivative<F: Real>(dim: usize, beta: F, r: F) -> Result<F> {
    check_dim(dim)?;
    let n = F::of_usize(dim);
    if r == F::zero() {
        return Ok((F::one() - beta / n) / n);
    }
    let f = bessel_ratio(dim, r)?;
    let fp = bessel_ratio_derivative(dim, r)?;
    let nm1 = n - F::one();
    let fpp = if r < F::of(1e-3) {
        // f = r/N − r³/(N²(N+2)) + ..., so f″ ≈ −6r/(N²(N+2))
        -F::of(6.0) * r / (n * n * (n + F::of(2.0)))
    } else {
        -nm1 * (fp / r - f / (r * r)) - F::of(2.0) * f * fp
    };
    Ok(fpp * (r - beta * f) + fp * (F::one() - beta * fp))
}

/// The spontaneous magnetization fixed point: 0 for `β ≤ N`, otherwise the
/// unique positive root of `b = β f(b)`.
pub fn solve_fixed_point<F: Real>(dim: usize, beta: F) -> Result<F> {
    check_dim(dim)?;
    if !(beta >= F::zero()) {
        return domain(format!("beta must be >= 0, got {beta}"));
    }
    if beta <= F::of_usize(dim) {
        return Ok(F::zero());
    }
    let g = |b: F| -> Result<F> { Ok(b - beta * bessel_ratio(dim, b)?) };
    let mut lo = F::of(1e-8);
    let mut hi = beta;
    if g(lo)? >= F::zero() {
        // β exceeds N by less than the bracket can resolve
        lo = F::zero();
    }
    // seed from the cubic expansion b² ≈ N(N+2)(β−N)/β... capped to the bracket
    let n = F::of_usize(dim);
    let seed = (n * (n + F::of(2.0)) * (beta - n) / beta).sqrt();
    let mut b = if seed > lo && seed < hi { seed } else { (lo + hi) * F::of(0.5) };
    let tol = F::of(1e-13).max(F::epsilon() * F::of(16.0));
    for _ in 0..500 {
        let r = g(b)?;
        if r.abs() <= tol * F::of(0.01) {
            return Ok(b);
        }
        if r < F::zero() {
            lo = b;
        } else {
            hi = b;
        }
        let slope = F::one() - beta * bessel_ratio_derivative(dim, b)?;
        let mut next = b - r / slope;
        if !(next > lo && next < hi) || slope <= F::zero() {
            next = (lo + hi) * F::of(0.5);
        }
        if (next - b).abs() <= F::epsilon() * b * F::of(4.0) || hi - lo <= F::epsilon() * hi * F::of(4.0) {
            let rn = g(next)?;
            if rn.abs() <= tol {
                return Ok(next);
            }
            return Err(Error::Convergence(format!("fixed point stalled at b = {next}, residual {rn}")));
        }
        b = next;
    }
    Err(Error::Convergence(format!("fixed point for N = {dim}, beta = {beta}")))
}

/// Free energy `φ(β)`: 0 for `β ≤ N`, `Φ_β(b)` at the fixed point otherwise.
pub fn free_energy<F: Real>(dim: usize, beta: F) -> Result<F> {
    let b = solve_fixed_point(dim, beta)?;
    phi(dim, beta, b)
}

/// Scalar rate function `I_β(r) = Φ_β(r) − inf Φ_β`, with `r` the tilt
/// parameter. Near 0 it behaves as `(r²/(2N))(1 − β/N)`.
pub fn rate_function<F: Real>(dim: usize, beta: F, r: F) -> Result<F> {
    let v = phi(dim, beta, r)? - free_energy(dim, beta)?;
    Ok(v.max(F::zero()))
}

/// Inverse of the Bessel ratio: the `b ≥ 0` with `f(b) = m`, for `m ∈ [0, 1)`.
pub fn inverse_bessel_ratio<F: Real>(dim: usize, m: F) -> Result<F> {
    check_dim(dim)?;
    if !(m >= F::zero() && m < F::one()) {
        return domain(format!("magnetization {m} outside [0, 1)"));
    }
    if m == F::zero() {
        return Ok(F::zero());
    }
    let n = F::of_usize(dim);
    let mut lo = F::zero();
    // f(b) ≥ 1 − (N−1)/(2b) − ... so b = N/(1−m) is past the root
    let mut hi = n / (F::one() - m);
    while bessel_ratio(dim, hi)? < m {
        hi = hi * F::of(2.0);
    }
    let mut b = (m * n).min(hi * F::of(0.5));
    for _ in 0..300 {
        let r = bessel_ratio(dim, b)? - m;
        if r.abs() <= F::epsilon() * F::of(4.0) {
            return Ok(b);
        }
        if r < F::zero() {
            lo = b;
        } else {
            hi = b;
        }
        let d = bessel_ratio_derivative(dim, b)?;
        let mut next = b - r / d;
        if !(next > lo && next < hi) {
            next = (lo + hi) * F::of(0.5);
        }
        if (next - b).abs() <= F::epsilon() * b * F::of(4.0) {
            return Ok(next);
        }
        b = next;
    }
    Err(Error::Convergence(format!("inverse Bessel ratio at m = {m}")))
}

/// Rate function of the magnetization `M_n = |S_n|/n`:
/// `Φ_β(f^{−1}(m)) − inf Φ_β`.
pub fn magnetization_rate_function<F: Real>(dim: usize, beta: F, m: F) -> Result<F> {
    let b = inverse_bessel_ratio(dim, m)?;
    rate_function(dim, beta, b)
}

/// Entropy minimizer `h*(x) = a e^{bx}` against the marginal weight
/// `(1 − x²)^{(N−3)/2}` of one coordinate of a uniform point on `S^{N−1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltedDensity<F> {
    pub dim: usize,
    pub b: F,
    pub a: F,
}

/// Builds the tilted density with `a = (b/2)^ν / (√π Γ((N−1)/2) I_ν(b))`
/// (limit `Γ(N/2)/(√π Γ((N−1)/2))` at `b = 0`).
pub fn tilted_density<F: Real>(dim: usize, b: F) -> Result<TiltedDensity<F>> {
    check_dim(dim)?;
    if !(b >= F::zero()) {
        return domain(format!("tilt b must be >= 0, got {b}"));
    }
    let n = F::of_usize(dim);
    let half = F::of(0.5);
    let ln_a = ln_gamma(n * half) - half * F::PI().ln() - ln_gamma((n - F::one()) * half) - log_partition(dim, b)?;
    Ok(TiltedDensity { dim, b, a: ln_a.exp() })
}

impl<F: Real> TiltedDensity<F> {
    /// `a e^{bx}(1 − x²)^{(N−3)/2}` on `(−1, 1)`.
    pub fn density(&self, x: F) -> F {
        if !(x > -F::one() && x < F::one()) {
            return F::zero();
        }
        let w = (F::one() - x * x).powf(F::of((self.dim as f64 - 3.0) * 0.5));
        self.a * (self.b * x).exp() * w
    }

    /// `∫ g(x) a e^{bx} (1 − x²)^{(N−3)/2} dx`.
    pub fn expect<G: FnMut(F) -> F>(&self, mut g: G, tol: Tolerance<F>) -> Result<Quadrature<F>> {
        let (a, b) = (self.a, self.b);
        integrate_sphere_marginal(self.dim, |x| a * (b * x).exp() * g(x), tol)
    }

    pub fn normalization(&self) -> Result<F> {
        Ok(self.expect(|_| F::one(), Tolerance::default())?.value)
    }

    pub fn mean(&self) -> Result<F> {
        Ok(self.expect(|x| x, Tolerance::default())?.value)
    }
}

/// The entropy functional `H(ν_g | μ) − (β/2)c²` of the tilt `b`, evaluated
/// entirely by quadrature (no Bessel functions). Its minimum over `b`
/// is the free energy.
pub fn entropy_functional_quadrature<F: Real>(dim: usize, beta: F, b: F) -> Result<F> {
    check_dim(dim)?;
    let tol = Tolerance { abs: F::of(1e-14), rel: F::of(1e-13) };
    let n = F::of_usize(dim);
    let half = F::of(0.5);
    let weight_norm = (ln_gamma(n * half) - half * F::PI().ln() - ln_gamma((n - F::one()) * half)).exp();
    let z = weight_norm * integrate_sphere_marginal(dim, |x| (b * x).exp(), tol)?.value;
    let ln_z = z.ln();
    let entropy = weight_norm
        * integrate_sphere_marginal(dim, |x| (b * x).exp() / z * (b * x - ln_z), tol)?.value;
    let c = weight_norm * integrate_sphere_marginal(dim, |x| x * (b * x).exp() / z, tol)?.value;
    Ok(entropy - beta * c * c * half)
}

/// `Var(σ) = 4β² f′(b) / (b² (1 − β f′(b)))`, the limiting variance of the
/// supercritical squared-length statistic.
pub fn supercritical_variance<F: Real>(dim: usize, beta: F) -> Result<F> {
    check_dim(dim)?;
    if !(beta > F::of_usize(dim)) {
        return domain(format!("supercritical variance needs beta > N = {dim}, got {beta}"));
    }
    let b = solve_fixed_point(dim, beta)?;
    let fp = bessel_ratio_derivative(dim, b)?;
    let stiffness = F::one() - beta * fp;
    if !(stiffness > F::zero()) {
        return Err(Error::Convergence(format!("beta f'(b) = {} is not below 1", beta * fp)));
    }
    Ok(F::of(4.0) * beta * beta * fp / (b * b * stiffness))
}

/// `1 − ((N−1)/N)(I_{N/2−1}(b) − I_{N/2+1}(b))/I_{N/2−1}(b) − f(b)²`, which
/// equals `f′(b)`; evaluated from the Bessel functions themselves.
pub fn variance_bracket<F: Real>(dim: usize, b: F) -> Result<F> {
    check_dim(dim)?;
    let nu = BesselOrder::for_dimension(dim);
    let n = F::of_usize(dim);
    let i0 = bessel_i(nu, b)?;
    let i1 = bessel_i(nu.shifted(1), b)?;
    let i2 = bessel_i(nu.shifted(2), b)?;
    let f = i1 / i0;
    Ok(F::one() - (n - F::one()) / n * (i0 - i2) / i0 - f * f)
}

/// Fixed point, magnetization, free energy and phase at one `(N, β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint<F> {
    pub dim: usize,
    pub beta: F,
    pub b: F,
    pub magnetization: F,
    pub free_energy: F,
    pub regime: Regime,
}

pub fn phase_point<F: Real>(dim: usize, beta: F) -> Result<PhasePoint<F>> {
    let b = solve_fixed_point(dim, beta)?;
    Ok(PhasePoint {
        dim,
        beta,
        b,
        magnetization: bessel_ratio(dim, b)?,
        free_energy: phi(dim, beta, b)?,
        regime: Regime::classify(dim, beta),
    })
}
