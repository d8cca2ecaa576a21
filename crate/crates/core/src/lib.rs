//! Mean-field O(N) spin models on the complete graph.
//!
//! Spins live on the unit sphere `S^{N−1}` and the energy is
//! `H = −|S|²/(2n)` for total spin `S`. The crate covers
//!
//! - Bessel-function thermodynamics ([`thermo`], [`specfun`]),
//! - Glauber sampling with von Mises–Fisher site updates ([`sampler`]),
//! - the three fluctuation statistics and their limit laws ([`limits`]),
//! - distances, error bars and exchangeable-pair regressions ([`stats`]).
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`.

pub mod error;
pub mod limits;
pub mod model;
pub mod quad;
pub mod real;
pub mod sampler;
pub mod specfun;
pub mod stats;
pub mod thermo;

pub use error::{Error, Result};
pub use real::Real;

pub type ModelParams64 = model::ModelParams<f64>;
pub type SpinConfiguration64 = model::SpinConfiguration<f64>;
pub type ChainState64 = sampler::ChainState<f64>;
pub type PairSet64 = sampler::PairSet<f64>;
pub type ExchangeablePairSample64 = sampler::ExchangeablePairSample<f64>;
pub type CriticalDensity64 = limits::CriticalDensity<f64>;
pub type LimitLaw64 = limits::LimitLaw<f64>;
pub type WStatistic64 = limits::WStatistic<f64>;
pub type PhasePoint64 = thermo::PhasePoint<f64>;
pub type EmpiricalSummary64 = stats::EmpiricalSummary<f64>;
pub type DistanceReport64 = stats::DistanceReport<f64>;
