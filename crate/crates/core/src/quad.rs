//! Adaptive Gauss–Kronrod (7/15) quadrature and a golden-section minimizer.

use crate::error::{Error, Result};
use crate::real::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_INTERVALS: usize = 20_000;

/// Integral estimate with its error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature<F> {
    pub value: F,
    pub error: F,
    pub intervals: usize,
}

/// Tolerances for adaptive integration; the target is `max(abs, rel·|I|)`.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance<F> {
    pub abs: F,
    pub rel: F,
}

impl<F: Real> Default for Tolerance<F> {
    fn default() -> Self {
        Self { abs: F::of(1e-13), rel: F::of(1e-12) }
    }
}

fn kronrod<F: Real, G: FnMut(F) -> F>(f: &mut G, a: F, b: F) -> (F, F) {
    let center = (a + b) * F::of(0.5);
    let half = (b - a) * F::of(0.5);
    let fc = f(center);
    let mut res_k = fc * F::of(WGK[7]);
    let mut res_g = fc * F::of(WG[3]);
    for j in 0..7 {
        let dx = half * F::of(XGK[j]);
        let pair = f(center - dx) + f(center + dx);
        res_k = res_k + pair * F::of(WGK[j]);
        if j % 2 == 1 {
            res_g = res_g + pair * F::of(WG[j / 2]);
        }
    }
    (res_k * half, ((res_k - res_g) * half).abs())
}

/// Adaptive integral of `f` over the finite interval `[a, b]`.
pub fn integrate<F: Real, G: FnMut(F) -> F>(mut f: G, a: F, b: F, tol: Tolerance<F>) -> Result<Quadrature<F>> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("integration limits must be finite: [{a}, {b}]")));
    }
    if a == b {
        return Ok(Quadrature { value: F::zero(), error: F::zero(), intervals: 0 });
    }
    let (v, e) = kronrod(&mut f, a, b);
    let mut pieces = vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    while err > tol.abs.max(tol.rel * total.abs()) {
        if pieces.len() >= MAX_INTERVALS {
            return Err(Error::Convergence(format!(
                "quadrature stalled at error {err} after {MAX_INTERVALS} intervals"
            )));
        }
        let worst = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, v0, e0) = pieces.swap_remove(worst);
        let mid = (lo + hi) * F::of(0.5);
        if mid <= lo || mid >= hi {
            return Err(Error::Convergence(format!("quadrature interval [{lo}, {hi}] cannot be split")));
        }
        let (v1, e1) = kronrod(&mut f, lo, mid);
        let (v2, e2) = kronrod(&mut f, mid, hi);
        total = total - v0 + v1 + v2;
        err = err - e0 + e1 + e2;
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
        if !total.is_finite() {
            return Err(Error::Convergence("quadrature produced a non-finite value".into()));
        }
    }
    // re-sum to shed accumulated rounding from the running updates
    let value = pieces.iter().map(|p| p.2).sum();
    let error = pieces.iter().map(|p| p.3).sum();
    Ok(Quadrature { value, error, intervals: pieces.len() })
}

/// Integral of `f` over `[a, ∞)` through `x = a + s/(1 − s)`.
pub fn integrate_to_infinity<F: Real, G: FnMut(F) -> F>(mut f: G, a: F, tol: Tolerance<F>) -> Result<Quadrature<F>> {
    integrate(
        |s: F| {
            let one_minus = F::one() - s;
            if one_minus <= F::zero() {
                return F::zero();
            }
            let x = a + s / one_minus;
            let v = f(x) / (one_minus * one_minus);
            if v.is_finite() {
                v
            } else {
                F::zero()
            }
        },
        F::zero(),
        F::one(),
        tol,
    )
}

/// `∫_{−1}^{1} g(x) (1 − x²)^{(N−3)/2} dx`, evaluated as
/// `∫_0^π g(cos θ) sin^{N−2}θ dθ` so the endpoint singularity at `N = 2`
/// disappears.
pub fn integrate_sphere_marginal<F: Real, G: FnMut(F) -> F>(dim: usize, mut g: G, tol: Tolerance<F>) -> Result<Quadrature<F>> {
    let power = dim as i32 - 2;
    integrate(|t: F| g(t.cos()) * t.sin().powi(power), F::zero(), F::PI(), tol)
}

/// Minimum of a unimodal `f` on `[a, b]` by golden-section search; returns
/// `(argmin, min)`.
pub fn golden_section_min<F: Real, G: FnMut(F) -> F>(mut f: G, mut a: F, mut b: F, x_tol: F) -> (F, F) {
    let inv_phi = F::of(0.618_033_988_749_894_8);
    let mut c = b - (b - a) * inv_phi;
    let mut d = a + (b - a) * inv_phi;
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > x_tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * inv_phi;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * inv_phi;
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
