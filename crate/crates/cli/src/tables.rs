//! Deterministic tables: the thermodynamic scan, the rate function and the
//! critical density.

use std::fmt::Write as _;

use mfon_core::limits::CriticalDensity;
use mfon_core::specfun::bessel_ratio;
use mfon_core::thermo::{free_energy, phi_second_derivative, rate_function, solve_fixed_point};
use serde::{Deserialize, Serialize};

use crate::manifest::usage;

/// `b` above this counts as ordered when locating `β_c`.
pub const ORDER_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoRow {
    pub beta: f64,
    pub b: f64,
    pub magnetization: f64,
    pub free_energy: f64,
    pub phi_second_deriv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermoScan {
    pub dim: usize,
    pub rows: Vec<ThermoRow>,
    /// First `β` with `b > ORDER_TOLERANCE`.
    pub beta_c: Option<f64>,
    /// Rows where a solver failed; their values are NaN.
    pub failed_rows: usize,
}

/// `count` points `start + k·step`, rounded to 12 decimals so that grid
/// points such as `N` land exactly.
pub fn grid(start: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12).collect()
}

fn grid_count(lo: f64, hi: f64, step: f64) -> usize {
    ((hi - lo) / step + 1e-9).floor() as usize + 1
}

fn thermo_row(dim: usize, beta: f64) -> mfon_core::Result<ThermoRow> {
    let b = solve_fixed_point(dim, beta)?;
    Ok(ThermoRow {
        beta,
        b,
        magnetization: bessel_ratio(dim, b)?,
        free_energy: free_energy(dim, beta)?,
        phi_second_deriv: phi_second_derivative(dim, beta, b)?,
    })
}

/// Fixed point, magnetization, free energy and `Φ_β″(b)` over a `β` grid.
/// A row whose solver fails is kept with NaN values and logged.
pub fn thermo_scan(dim: usize, beta_min: f64, beta_max: f64, step: f64) -> anyhow::Result<ThermoScan> {
    if dim < 2 {
        return usage(format!("dimension must be >= 2, got {dim}"));
    }
    if !(0.0 <= beta_min && beta_min < beta_max && beta_max.is_finite()) {
        return usage(format!("need 0 <= beta_min < beta_max, got [{beta_min}, {beta_max}]"));
    }
    if !(step > 0.0) {
        return usage(format!("step must be positive, got {step}"));
    }
    let mut failed_rows = 0;
    let rows: Vec<ThermoRow> = grid(beta_min, step, grid_count(beta_min, beta_max, step))
        .into_iter()
        .map(|beta| {
            thermo_row(dim, beta).unwrap_or_else(|e| {
                log::warn!("N = {dim}, beta = {beta}: {e}");
                failed_rows += 1;
                ThermoRow { beta, b: f64::NAN, magnetization: f64::NAN, free_energy: f64::NAN, phi_second_deriv: f64::NAN }
            })
        })
        .collect();
    let beta_c = rows.iter().find(|r| r.b > ORDER_TOLERANCE).map(|r| r.beta);
    Ok(ThermoScan { dim, rows, beta_c, failed_rows })
}

impl ThermoScan {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("beta,b,magnetization,free_energy,phi_second_deriv\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{}", r.beta, r.b, r.magnetization, r.free_energy, r.phi_second_deriv).unwrap();
        }
        out
    }
}

/// `r,rate` rows of `I_β(r)` for `r` in `[0, r_max]`.
pub fn rate_function_csv(dim: usize, beta: f64, r_max: f64, points: usize) -> anyhow::Result<String> {
    if !(r_max > 0.0) || points < 2 {
        return usage("need r_max > 0 and at least 2 points");
    }
    let mut out = String::from("r,rate\n");
    for r in grid(0.0, r_max / (points - 1) as f64, points) {
        writeln!(out, "{r},{}", rate_function(dim, beta, r)?).unwrap();
    }
    Ok(out)
}

/// `t,pdf,cdf` rows of the critical density on `[0, t_max]`.
pub fn density_csv(dim: usize, t_max: f64, points: usize) -> anyhow::Result<String> {
    if !(t_max > 0.0) || points < 2 {
        return usage("need t_max > 0 and at least 2 points");
    }
    let d = CriticalDensity::<f64>::new(dim)?;
    let mut out = String::from("t,pdf,cdf\n");
    for t in grid(0.0, t_max / (points - 1) as f64, points) {
        writeln!(out, "{t},{},{}", d.pdf(t), d.cdf(t)).unwrap();
    }
    Ok(out)
}
