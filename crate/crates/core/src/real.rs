//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Beta, Distribution, Open01, StandardNormal};

/// Floating point scalar the crate can compute with (`f32` or `f64`).
///
/// Besides the usual `num-traits` arithmetic this carries the handful of
/// random variates the samplers need, so generic code never has to spell out
/// `rand_distr` bounds at every call site.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn of(x: f64) -> Self;

    /// Lossy conversion from a count.
    fn of_usize(n: usize) -> Self;

    fn to_f64_lossy(self) -> f64;

    /// Draws a standard normal variate.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Draws a uniform variate on the open interval (0, 1).
    fn open01<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Draws from the symmetric Beta(a, a) law.
    fn symmetric_beta<R: Rng + ?Sized>(a: Self, rng: &mut R) -> Self;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn of(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn of_usize(n: usize) -> Self {
                n as $t
            }

            #[inline]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }

            #[inline]
            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            #[inline]
            fn open01<R: Rng + ?Sized>(rng: &mut R) -> Self {
                Open01.sample(rng)
            }

            fn symmetric_beta<R: Rng + ?Sized>(a: Self, rng: &mut R) -> Self {
                if a == 1.0 {
                    return Open01.sample(rng);
                }
                if a == 0.5 {
                    // arcsine law
                    let u: $t = Open01.sample(rng);
                    let s = (std::f64::consts::FRAC_PI_2 as $t * u).sin();
                    return s * s;
                }
                Beta::new(a, a).expect("beta shape must be positive").sample(rng)
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);
