//! Modified Bessel functions of the first kind for integer and half-integer
//! orders, their ratios, and the gamma-family helpers the rest of the crate
//! leans on.
//!
//! Evaluation strategy for `I_ν(x)`:
//!
//! * half-integer orders up to 9/2 use the terminating hyperbolic closed form
//!   once `x` is large enough that its alternating sum does not cancel;
//! * large `x` (relative to `ν²`) uses the Hankel asymptotic expansion;
//! * everything else uses the power series, whose terms are all positive.
//!
//! The ratio `I_{ν+1}/I_ν` never goes through `bessel_i`; it is evaluated as a
//! continued fraction so it stays finite where `I_ν` itself overflows.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::real::Real;

/// Largest argument `bessel_i` accepts before `e^x` overflows `f64`.
pub const OVERFLOW_GUARD: f64 = 700.0;

const MAX_CF_ITERATIONS: usize = 200_000;

/// Order `ν = twice_order / 2` of a Bessel function, exact for integer and
/// half-integer values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BesselOrder {
    twice_order: u32,
}

impl BesselOrder {
    pub const fn from_twice(twice_order: u32) -> Self {
        Self { twice_order }
    }

    pub const fn integer(n: u32) -> Self {
        Self { twice_order: 2 * n }
    }

    /// The order `n + 1/2`.
    pub const fn half_odd(n: u32) -> Self {
        Self { twice_order: 2 * n + 1 }
    }

    /// The order `N/2 − 1` attached to spins on `S^{N−1}`.
    pub fn for_dimension(dim: usize) -> Self {
        assert!(dim >= 2, "sphere dimension must be at least 2, got {dim}");
        Self { twice_order: dim as u32 - 2 }
    }

    pub const fn twice(self) -> u32 {
        self.twice_order
    }

    pub const fn is_half_integer(self) -> bool {
        self.twice_order % 2 == 1
    }

    /// `ν + k`.
    pub const fn shifted(self, k: u32) -> Self {
        Self { twice_order: self.twice_order + 2 * k }
    }

    pub fn value<F: Real>(self) -> F {
        F::of(self.twice_order as f64 * 0.5)
    }
}

/// Modified Bessel function of the first kind `I_ν(x)` for `0 ≤ x ≤ 700`.
pub fn bessel_i<F: Real>(nu: BesselOrder, x: F) -> Result<F> {
    if !(x >= F::zero()) || x > F::of(OVERFLOW_GUARD) {
        return domain(format!("bessel_i argument {x} outside [0, {OVERFLOW_GUARD}]"));
    }
    if x == F::zero() {
        return Ok(if nu.twice() == 0 { F::one() } else { F::zero() });
    }
    if nu.is_half_integer() && nu.twice() <= 9 {
        let n = (nu.twice() - 1) / 2;
        if x >= closed_form_threshold::<F>(n) {
            return Ok(half_integer_closed_form(n, x));
        }
    }
    let v: F = nu.value();
    if x >= F::of(30.0) + v * v {
        if let Some(val) = hankel_asymptotic(v, x) {
            return Ok(val);
        }
    }
    Ok(series_prefactor(v, x) * normalized_series(v, x))
}

/// Ratio `I_{ν+1}(x) / I_ν(x)` by backward continued fraction.
pub fn bessel_ratio_order<F: Real>(nu: BesselOrder, x: F) -> Result<F> {
    if !(x >= F::zero()) || !x.is_finite() {
        return domain(format!("bessel ratio argument {x} must be finite and non-negative"));
    }
    let v: F = nu.value();
    let two = F::of(2.0);
    if x == F::zero() {
        return Ok(F::zero());
    }
    if x < F::min_positive_value().sqrt() {
        return Ok(x / (two * (v + F::one())));
    }
    // Modified Lentz on r = 1/(b1 + 1/(b2 + ...)), b_k = 2(ν + k)/x.
    let tiny = F::min_positive_value().sqrt();
    let eps = F::epsilon();
    let mut f = tiny;
    let mut c = f;
    let mut d = F::zero();
    for k in 1..=MAX_CF_ITERATIONS {
        let b = two * (v + F::of_usize(k)) / x;
        d = b + d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + F::one() / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = F::one() / d;
        let delta = c * d;
        f = f * delta;
        if (delta - F::one()).abs() <= eps {
            // f started as `tiny` standing in for b0 = 0; undo it.
            return Ok(F::one() / (F::one() / f - tiny));
        }
    }
    Err(Error::Convergence(format!("bessel ratio continued fraction at x = {x}")))
}

/// `f(κ) = I_{N/2}(κ) / I_{N/2−1}(κ)`, the mean resultant length of the von
/// Mises–Fisher law on `S^{N−1}` with concentration `κ`.
pub fn bessel_ratio<F: Real>(dim: usize, kappa: F) -> Result<F> {
    if dim < 2 {
        return domain(format!("dimension must be at least 2, got {dim}"));
    }
    bessel_ratio_order(BesselOrder::for_dimension(dim), kappa)
}

/// `f′(κ)`, from the recurrence `f′ = 1 − f·((N−1)/κ + f)`; `f′(0) = 1/N`.
pub fn bessel_ratio_derivative<F: Real>(dim: usize, kappa: F) -> Result<F> {
    let n = F::of_usize(dim);
    if kappa == F::zero() {
        return Ok(F::one() / n);
    }
    let f = bessel_ratio(dim, kappa)?;
    Ok(F::one() - f * ((n - F::one()) / kappa + f))
}

/// `E⟨θ, μ⟩²` under the von Mises–Fisher law, i.e.
/// `(I_{N/2}(κ) + κ I_{N/2+1}(κ)) / (κ I_{N/2−1}(κ)) = 1 − (N−1) f(κ)/κ`.
pub fn vmf_second_moment<F: Real>(dim: usize, kappa: F) -> Result<F> {
    let n = F::of_usize(dim);
    if kappa < F::of(1e-4) {
        // 1/N + (N−1) κ² / (N²(N+2)) + O(κ⁴)
        let k2 = kappa * kappa;
        return Ok(F::one() / n + (n - F::one()) * k2 / (n * n * (n + F::of(2.0))));
    }
    let f = bessel_ratio(dim, kappa)?;
    Ok(F::one() - (n - F::one()) * f / kappa)
}

/// `Γ(ν+1) (2/x)^ν I_ν(x)`: the Bessel power series with its leading power
/// divided out, so it tends to 1 as `x → 0`. Equals `E e^{x⟨θ,e⟩}` for θ
/// uniform on `S^{2ν+1}`.
pub(crate) fn normalized_series<F: Real>(v: F, x: F) -> F {
    let q = x * x / F::of(4.0);
    let mut term = F::one();
    let mut sum = F::one();
    let half_x = x * F::of(0.5);
    for k in 1..100_000usize {
        let kf = F::of_usize(k);
        term = term * q / (kf * (v + kf));
        sum = sum + term;
        if term <= F::epsilon() * sum * F::of(0.25) && kf > half_x {
            break;
        }
    }
    sum
}

/// `ln[Γ(ν+1) (2/x)^ν I_ν(x)]` for any `x ≥ 0`, accurate to relative
/// precision even as `x → 0` where the value is `x²/(4(ν+1)) + O(x⁴)`.
pub(crate) fn ln_normalized_series<F: Real>(nu: BesselOrder, x: F) -> Result<F> {
    if !(x >= F::zero()) {
        return domain(format!("argument {x} must be non-negative"));
    }
    let v: F = nu.value();
    if x <= F::of(500.0) {
        // Σ_{k≥1} of the normalized series, then log1p
        let q = x * x / F::of(4.0);
        let mut term = F::one();
        let mut tail = F::zero();
        for k in 1..100_000usize {
            let kf = F::of_usize(k);
            term = term * q / (kf * (v + kf));
            tail = tail + term;
            if term <= F::epsilon() * tail * F::of(0.25) && kf > x * F::of(0.5) {
                break;
            }
            if term == F::zero() {
                break;
            }
        }
        return Ok(tail.ln_1p());
    }
    Ok(ln_bessel_i(nu, x)? + ln_gamma(v + F::one()) + v * (F::of(2.0) / x).ln())
}

fn series_prefactor<F: Real>(v: F, x: F) -> F {
    if v == F::zero() {
        return F::one();
    }
    (v * (x * F::of(0.5)).ln() - ln_gamma(v + F::one())).exp()
}

/// Natural log of `I_ν(x)`, valid for any `x > 0` (no overflow guard).
pub(crate) fn ln_bessel_i<F: Real>(nu: BesselOrder, x: F) -> Result<F> {
    if !(x > F::zero()) {
        return domain(format!("ln_bessel_i needs x > 0, got {x}"));
    }
    let v: F = nu.value();
    if x <= F::of(OVERFLOW_GUARD) {
        let val = bessel_i(nu, x)?;
        if val > F::min_positive_value() && val.is_finite() {
            return Ok(val.ln());
        }
        // underflowed: fall back to the log of the series
        return Ok(v * (x * F::of(0.5)).ln() - ln_gamma(v + F::one()) + normalized_series(v, x).ln());
    }
    let sum = hankel_sum(v, x).ok_or_else(|| Error::Convergence(format!("ln I_{v}({x})")))?;
    Ok(x - F::of(0.5) * (F::TAU() * x).ln() + sum.ln())
}

/// Sum `Σ_k (−1)^k a_k(ν) / x^k` of the Hankel expansion, if it settles to
/// machine precision before its terms start growing.
fn hankel_sum<F: Real>(v: F, x: F) -> Option<F> {
    let mu = F::of(4.0) * v * v;
    let mut term = F::one();
    let mut sum = F::one();
    for k in 1..200usize {
        let odd = F::of_usize(2 * k - 1);
        let next = -term * (mu - odd * odd) / (F::of_usize(8 * k) * x);
        if next == F::zero() {
            return Some(sum);
        }
        if next.abs() > term.abs() {
            return None;
        }
        term = next;
        sum = sum + term;
        if term.abs() <= F::epsilon() * sum.abs() * F::of(0.25) {
            return Some(sum);
        }
    }
    None
}

fn hankel_asymptotic<F: Real>(v: F, x: F) -> Option<F> {
    let sum = hankel_sum(v, x)?;
    Some(x.exp() / (F::TAU() * x).sqrt() * sum)
}

fn closed_form_threshold<F: Real>(n: u32) -> F {
    F::of((2.5 * n as f64).max(1.0))
}

/// `I_{n+1/2}(x) = (2πx)^{−1/2} [e^x Σ (−1)^k c_k + (−1)^{n+1} e^{−x} Σ c_k]`
/// with `c_k = (n+k)! / (k! (n−k)! (2x)^k)`.
fn half_integer_closed_form<F: Real>(n: u32, x: F) -> F {
    let mut c = F::one();
    let mut alternating = F::one();
    let mut plain = F::one();
    for k in 1..=n {
        let kf = F::of(k as f64);
        let nf = F::of(n as f64);
        c = c * (nf + kf) * (nf - kf + F::one()) / (kf * F::of(2.0) * x);
        if k % 2 == 1 {
            alternating = alternating - c;
        } else {
            alternating = alternating + c;
        }
        plain = plain + c;
    }
    let sign = if n % 2 == 0 { -F::one() } else { F::one() };
    (x.exp() * alternating + sign * (-x).exp() * plain) / (F::TAU() * x).sqrt()
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function (Lanczos approximation, reflection below 1/2).
pub fn gamma<F: Real>(x: F) -> F {
    let half = F::of(0.5);
    if x < half {
        let pi = F::PI();
        return pi / ((pi * x).sin() * gamma(F::one() - x));
    }
    let x = x - F::one();
    let mut acc = F::of(LANCZOS_COEFFS[0]);
    for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc = acc + F::of(c) / (x + F::of_usize(i));
    }
    let t = x + F::of(LANCZOS_G) + half;
    F::TAU().sqrt() * t.powf(x + half) * (-t).exp() * acc
}

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma<F: Real>(x: F) -> F {
    let half = F::of(0.5);
    if x < half {
        return (F::PI() / (F::PI() * x).sin()).abs().ln() - ln_gamma(F::one() - x);
    }
    let x = x - F::one();
    let mut acc = F::of(LANCZOS_COEFFS[0]);
    for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc = acc + F::of(c) / (x + F::of_usize(i));
    }
    let t = x + F::of(LANCZOS_G) + half;
    half * F::TAU().ln() + (x + half) * t.ln() - t + acc.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p<F: Real>(a: F, x: F) -> F {
    if x <= F::zero() {
        return F::zero();
    }
    if x < a + F::one() {
        gamma_series(a, x)
    } else {
        F::one() - gamma_cf(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 − P(a, x)`.
pub fn gamma_q<F: Real>(a: F, x: F) -> F {
    if x <= F::zero() {
        return F::one();
    }
    if x < a + F::one() {
        F::one() - gamma_series(a, x)
    } else {
        gamma_cf(a, x)
    }
}

fn gamma_series<F: Real>(a: F, x: F) -> F {
    let mut ap = a;
    let mut del = F::one() / a;
    let mut sum = del;
    for _ in 0..10_000 {
        ap = ap + F::one();
        del = del * x / ap;
        sum = sum + del;
        if del.abs() < sum.abs() * F::epsilon() {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_cf<F: Real>(a: F, x: F) -> F {
    let tiny = F::min_positive_value().sqrt();
    let mut b = x + F::one() - a;
    let mut c = F::one() / tiny;
    let mut d = F::one() / b;
    let mut h = d;
    for i in 1..10_000usize {
        let fi = F::of_usize(i);
        let an = -fi * (fi - a);
        b = b + F::of(2.0);
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = F::one() / d;
        let del = d * c;
        h = h * del;
        if (del - F::one()).abs() < F::epsilon() {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Standard normal CDF.
pub fn normal_cdf<F: Real>(x: F) -> F {
    let half = F::of(0.5);
    let u = x * x * half;
    if x >= F::zero() {
        half + half * gamma_p(half, u)
    } else {
        half * gamma_q(half, u)
    }
}

/// Standard normal quantile (Acklam's rational approximation refined by one
/// Halley step).
pub fn normal_quantile<F: Real>(p: F) -> F {
    if p <= F::zero() {
        return F::neg_infinity();
    }
    if p >= F::one() {
        return F::infinity();
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let pf = p.to_f64_lossy();
    let p_low = 0.024_25;
    let x0 = if pf < p_low {
        let q = (-2.0 * pf.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if pf <= 1.0 - p_low {
        let q = pf - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - pf).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = F::of(x0);
    let e = normal_cdf(x) - p;
    let u = e * F::TAU().sqrt() * (x * x * F::of(0.5)).exp();
    x - u / (F::one() + x * u * F::of(0.5))
}

/// Surface area `A_N = 2π^{N/2} / Γ(N/2)` of the unit sphere in `R^N`.
pub fn sphere_area<F: Real>(dim: usize) -> F {
    assert!(dim >= 1, "sphere_area needs N >= 1");
    let half_n = F::of(dim as f64 * 0.5);
    F::of(2.0) * F::PI().powf(half_n) / gamma(half_n)
}

/// The constant `B_N`: `Π_{k=0}^{N/2−1} |2k−1|` for even `N`,
/// `2^{(N−3)/2} · (1)_{(N−3)/2}` for odd `N`.
pub fn b_constant<F: Real>(dim: usize) -> F {
    assert!(dim >= 2, "b_constant needs N >= 2");
    if dim % 2 == 0 {
        (0..dim / 2).fold(F::one(), |acc, k| acc * F::of((2.0 * k as f64 - 1.0).abs()))
    } else {
        let m = (dim - 3) / 2;
        // (1)_m = m!
        (1..=m).fold(F::of(2.0).powi(m as i32), |acc, k| acc * F::of_usize(k))
    }
}
