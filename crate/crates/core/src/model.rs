//! Configuration space `(S^{N−1})^n`, the mean-field Hamiltonian and the
//! cached total spin.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Replacements between full recomputations of the cached total spin.
pub const RECOMPUTE_INTERVAL: u32 = 1 << 16;

/// Dimension `N`, inverse temperature `β` and site count `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<F> {
    pub dim: usize,
    pub beta: F,
    pub n_sites: usize,
}

impl<F: Real> ModelParams<F> {
    pub fn new(dim: usize, beta: F, n_sites: usize) -> Result<Self> {
        let p = Self { dim, beta, n_sites };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Invalid(format!("dimension must be >= 2, got {}", self.dim)));
        }
        if !(self.beta >= F::zero()) || !self.beta.is_finite() {
            return Err(Error::Invalid(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if self.n_sites < 2 {
            return Err(Error::Invalid(format!("need at least 2 sites, got {}", self.n_sites)));
        }
        Ok(())
    }

    pub fn regime(&self) -> Regime {
        Regime::classify(self.dim, self.beta)
    }
}

/// Phase of the model relative to the critical point `β_c = N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

impl Regime {
    pub fn classify<F: Real>(dim: usize, beta: F) -> Self {
        let n = F::of_usize(dim);
        if beta < n {
            Regime::Subcritical
        } else if beta > n {
            Regime::Supercritical
        } else {
            Regime::Critical
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Subcritical => "subcritical",
            Regime::Critical => "critical",
            Regime::Supercritical => "supercritical",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subcritical" => Ok(Regime::Subcritical),
            "critical" => Ok(Regime::Critical),
            "supercritical" => Ok(Regime::Supercritical),
            other => Err(Error::Parse(format!("unknown regime {other:?}"))),
        }
    }
}

/// Allowed deviation of a stored spin from unit length.
pub fn unit_tolerance<F: Real>() -> F {
    F::of(1e-12).max(F::epsilon() * F::of(64.0))
}

/// `n` unit vectors in `R^N` stored row-major, with the cached total spin
/// `S_n = Σ σ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinConfiguration<F> {
    dim: usize,
    spins: Vec<F>,
    total: Vec<F>,
    since_recompute: u32,
}

impl<F: Real> SpinConfiguration<F> {
    /// Builds a configuration from a flat row-major buffer of unit vectors.
    pub fn from_flat(dim: usize, spins: Vec<F>) -> Result<Self> {
        if dim == 0 || spins.is_empty() || spins.len() % dim != 0 {
            return Err(Error::Invalid(format!(
                "buffer of length {} is not a whole number of {dim}-vectors",
                spins.len()
            )));
        }
        for (i, s) in spins.chunks_exact(dim).enumerate() {
            check_unit(s).map_err(|e| Error::Invalid(format!("site {i}: {e}")))?;
        }
        let mut cfg = Self { dim, spins, total: vec![F::zero(); dim], since_recompute: 0 };
        cfg.recompute_total();
        Ok(cfg)
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Invalid("rows have differing lengths".into()));
        }
        Self::from_flat(dim, rows.iter().flatten().copied().collect())
    }

    /// All `n` spins equal to `direction` (normalized here).
    pub fn aligned(n_sites: usize, direction: &[F]) -> Result<Self> {
        let norm = norm(direction);
        if !(norm > F::zero()) {
            return Err(Error::Invalid("direction must be non-zero".into()));
        }
        let unit: Vec<F> = direction.iter().map(|&x| x / norm).collect();
        let mut spins = Vec::with_capacity(n_sites * unit.len());
        for _ in 0..n_sites {
            spins.extend_from_slice(&unit);
        }
        Self::from_flat(unit.len(), spins)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_sites(&self) -> usize {
        self.spins.len() / self.dim
    }

    pub fn spin(&self, site: usize) -> &[F] {
        &self.spins[site * self.dim..(site + 1) * self.dim]
    }

    pub fn spins_flat(&self) -> &[F] {
        &self.spins
    }

    pub fn total_spin(&self) -> &[F] {
        &self.total
    }

    pub fn total_spin_norm_sq(&self) -> F {
        dot(&self.total, &self.total)
    }

    /// `H_n(σ) = −|S_n|²/(2n)`.
    pub fn hamiltonian(&self) -> F {
        -self.total_spin_norm_sq() / (F::of(2.0) * F::of_usize(self.n_sites()))
    }

    /// Replaces the spin at `site`, updating the cached total incrementally.
    pub fn replace_spin(&mut self, site: usize, new_spin: &[F]) -> Result<()> {
        let n = self.n_sites();
        if site >= n {
            return Err(Error::IndexOutOfRange { index: site, len: n });
        }
        if new_spin.len() != self.dim {
            return Err(Error::Invalid(format!("spin has {} components, expected {}", new_spin.len(), self.dim)));
        }
        check_unit(new_spin)?;
        self.replace_spin_unchecked(site, new_spin);
        Ok(())
    }

    /// Hot-path replacement: no bounds or norm validation beyond debug
    /// assertions.
    #[inline]
    pub fn replace_spin_unchecked(&mut self, site: usize, new_spin: &[F]) {
        debug_assert!(check_unit(new_spin).is_ok());
        let d = self.dim;
        let old = &mut self.spins[site * d..(site + 1) * d];
        for ((t, o), &s) in self.total.iter_mut().zip(old.iter_mut()).zip(new_spin) {
            *t = *t - *o + s;
            *o = s;
        }
        self.since_recompute += 1;
        if self.since_recompute >= RECOMPUTE_INTERVAL {
            self.recompute_total();
        }
    }

    /// `σ^{(i)} = S_n − σ_i`.
    pub fn leave_one_out(&self, site: usize) -> Result<Vec<F>> {
        let n = self.n_sites();
        if site >= n {
            return Err(Error::IndexOutOfRange { index: site, len: n });
        }
        let mut out = vec![F::zero(); self.dim];
        self.leave_one_out_into(site, &mut out);
        Ok(out)
    }

    #[inline]
    pub fn leave_one_out_into(&self, site: usize, out: &mut [F]) {
        let s = self.spin(site);
        for ((o, &t), &x) in out.iter_mut().zip(&self.total).zip(s) {
            *o = t - x;
        }
    }

    pub fn recompute_total(&mut self) {
        self.total = self.direct_sum();
        self.since_recompute = 0;
    }

    /// Total spin summed from scratch, ignoring the cache.
    pub fn direct_sum(&self) -> Vec<F> {
        let mut sum = vec![F::zero(); self.dim];
        for s in self.spins.chunks_exact(self.dim) {
            for (acc, &x) in sum.iter_mut().zip(s) {
                *acc = *acc + x;
            }
        }
        sum
    }

    /// Euclidean distance between the cached and recomputed total spin.
    pub fn total_spin_drift(&self) -> F {
        let direct = self.direct_sum();
        let diff: Vec<F> = direct.iter().zip(&self.total).map(|(&a, &b)| a - b).collect();
        norm(&diff)
    }

    /// Writes the `site,x1,...,xN` CSV dump.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.dim).map(|k| format!("x{k}")).collect();
        writeln!(w, "site,{}", header.join(","))?;
        for (i, s) in self.spins.chunks_exact(self.dim).enumerate() {
            write!(w, "{i}")?;
            for x in s {
                write!(w, ",{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads a dump produced by [`write_csv`](Self::write_csv).
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty configuration file".into()))?
            .map_err(|e| Error::Parse(e.to_string()))?;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.first() != Some(&"site") || cols.len() < 2 {
            return Err(Error::Parse(format!("bad header {header:?}")));
        }
        for (k, c) in cols.iter().enumerate().skip(1) {
            if *c != format!("x{k}") {
                return Err(Error::Parse(format!("bad header column {c:?}")));
            }
        }
        let dim = cols.len() - 1;
        let mut spins = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != dim + 1 {
                return Err(Error::Parse(format!("row {row}: expected {} fields", dim + 1)));
            }
            let site: usize = fields[0].parse().map_err(|_| Error::Parse(format!("row {row}: bad site index")))?;
            if site != row {
                return Err(Error::Parse(format!("row {row}: site index {site} out of order")));
            }
            for f in &fields[1..] {
                let v: f64 = f.parse().map_err(|_| Error::Parse(format!("row {row}: bad number {f:?}")))?;
                spins.push(F::of(v));
            }
        }
        Self::from_flat(dim, spins)
    }
}

/// `H_n(σ) = −|S_n|²/(2n)`.
pub fn hamiltonian<F: Real>(config: &SpinConfiguration<F>) -> F {
    config.hamiltonian()
}

#[inline]
pub(crate) fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub(crate) fn norm<F: Real>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

fn check_unit<F: Real>(s: &[F]) -> Result<()> {
    let len = norm(s);
    if (len - F::one()).abs() > unit_tolerance::<F>() {
        return Err(Error::Domain(format!("spin norm {len} is not 1")));
    }
    Ok(())
}
