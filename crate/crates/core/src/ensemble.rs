//! Particle state shared by the discrete and mean-field flows.

use serde::{Deserialize, Serialize};

use crate::error::{contract, domain, Error, Result};

/// Self-propulsion / Rayleigh friction parameters and θ coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceParams {
    pub sigma: f64,
    pub p: f64,
    pub kappa: f64,
}

impl ForceParams {
    pub fn new(sigma: f64, p: f64, kappa: f64) -> Self {
        ForceParams { sigma, p, kappa }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            out.push(format!("force.sigma must be >= 0, got {}", self.sigma));
        }
        if !(self.p.is_finite() && self.p > 0.0) {
            out.push(format!("force.p must be > 0, got {}", self.p));
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            out.push(format!("force.kappa must be >= 0, got {}", self.kappa));
        }
        out
    }
}

/// Positions, velocities and (for the forced model) characteristic
/// parameters θ of `count` agents in `R^dim`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    count: usize,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub thetas: Option<Vec<f64>>,
    pub time: f64,
}

impl ParticleEnsemble {
    pub fn new(
        dim: usize,
        positions: Vec<f64>,
        velocities: Vec<f64>,
        thetas: Option<Vec<f64>>,
        time: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return contract("ensemble dimension must be positive");
        }
        if positions.len() % dim != 0 || positions.is_empty() {
            return contract(format!(
                "positions length {} is not a positive multiple of dim {dim}",
                positions.len()
            ));
        }
        if positions.len() != velocities.len() {
            return contract("positions and velocities differ in shape");
        }
        let count = positions.len() / dim;
        if let Some(th) = &thetas {
            if th.len() != count {
                return contract(format!("thetas has length {}, expected {count}", th.len()));
            }
            if let Some(bad) = th.iter().find(|&&t| !(t > 0.0)) {
                return contract(format!("thetas must be strictly positive, found {bad}"));
            }
        }
        if !(time >= 0.0) {
            return contract(format!("time must be >= 0, got {time}"));
        }
        Ok(ParticleEnsemble { dim, count, positions, velocities, thetas, time })
    }

    /// Unchecked constructor for integrator stages.
    pub(crate) fn raw(
        dim: usize,
        positions: Vec<f64>,
        velocities: Vec<f64>,
        thetas: Option<Vec<f64>>,
        time: f64,
    ) -> Self {
        let count = positions.len() / dim;
        ParticleEnsemble { dim, count, positions, velocities, thetas, time }
    }

    /// Build from per-particle rows.
    pub fn from_rows(
        positions: &[Vec<f64>],
        velocities: &[Vec<f64>],
        thetas: Option<Vec<f64>>,
    ) -> Result<Self> {
        let dim = positions.first().map(Vec::len).unwrap_or(0);
        if positions.iter().chain(velocities).any(|r| r.len() != dim) {
            return contract("rows must all have the same dimension");
        }
        Self::new(dim, positions.concat(), velocities.concat(), thetas, 0.0)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_forced(&self) -> bool {
        self.thetas.is_some()
    }

    #[inline]
    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.velocities[i * self.dim..(i + 1) * self.dim]
    }

    pub fn theta(&self, i: usize) -> Option<f64> {
        self.thetas.as_ref().map(|t| t[i])
    }

    pub fn mean_velocity(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for v in self.velocities.chunks_exact(self.dim) {
            for (a, b) in m.iter_mut().zip(v) {
                *a += b;
            }
        }
        let n = self.count as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    pub fn mean_theta(&self) -> Option<f64> {
        self.thetas.as_ref().map(|t| t.iter().sum::<f64>() / t.len() as f64)
    }

    pub fn all_finite(&self) -> bool {
        self.positions.iter().chain(&self.velocities).all(|v| v.is_finite())
            && self.thetas.as_ref().map_or(true, |t| t.iter().all(|v| v.is_finite()))
    }

    /// Copy of the first `n` particles.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.count {
            return domain(format!("prefix length {n} out of range 1..={}", self.count));
        }
        let d = self.dim;
        Self::new(
            d,
            self.positions[..n * d].to_vec(),
            self.velocities[..n * d].to_vec(),
            self.thetas.as_ref().map(|t| t[..n].to_vec()),
            self.time,
        )
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn check_unit(axis: &[f64], dim: usize) -> Result<()> {
    if axis.len() != dim {
        return domain(format!("axis has dimension {}, expected {dim}", axis.len()));
    }
    let n = norm(axis);
    if (n - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("axis must be a unit vector, |axis| = {n}")));
    }
    Ok(())
}

/// `min_i (v_i·axis − eps·|v_i|)`; non-negative iff every velocity lies in
/// the cone of half-opening `arccos(eps)` around `axis`.
pub fn sector_margin(ens: &ParticleEnsemble, eps: f64, axis: &[f64]) -> Result<f64> {
    if ens.count() == 0 {
        return domain("empty ensemble");
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return domain(format!("eps must lie in (0, 1], got {eps}"));
    }
    check_unit(axis, ens.dim())?;
    Ok(ens
        .velocities
        .chunks_exact(ens.dim())
        .map(|v| velocity_margin(v, eps, axis))
        .fold(f64::INFINITY, f64::min))
}

#[inline]
pub(crate) fn velocity_margin(v: &[f64], eps: f64, axis: &[f64]) -> f64 {
    dot(v, axis) - eps * norm(v)
}
