//! Grönwall envelope systems for the coupling energies.
//!
//! With `x = 1 + P^{1/2}`, `y = K^{1/2}` (and `z = C^{1/2}`) the energies obey
//! a linear differential inequality with non-negative coefficients. Such
//! systems are cooperative, so any solution of the inequality started from
//! the same data stays below the solution of the equality system; the
//! integrators here solve the equality system.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::{self, domain as stream};

pub const DEFAULT_ODI_DT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdiState {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OdiSystem {
    /// `ẋ = y, ẏ = c e^{−δt} x`
    Forceless,
    /// `ẋ = y, ẏ = c e^{−δt}(x + y) + c z, ż = c e^{−δt} x`
    Forced,
}

fn rhs(sys: OdiSystem, c: f64, delta: f64, t: f64, s: [f64; 3], damp: [f64; 3]) -> [f64; 3] {
    let e = c * (-delta * t).exp();
    match sys {
        OdiSystem::Forceless => [damp[0] * s[1], damp[1] * e * s[0], 0.0],
        OdiSystem::Forced => [damp[0] * s[1], damp[1] * (e * (s[0] + s[1]) + c * s[2]), damp[2] * e * s[0]],
    }
}

fn check(c: f64, delta: f64, t_end: f64, dt: f64) -> Result<()> {
    let mut bad = Vec::new();
    if !(c >= 0.0 && c.is_finite()) {
        bad.push(format!("c must be finite and >= 0, got {c}"));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        bad.push(format!("delta must be positive, got {delta}"));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        bad.push(format!("t_end must be positive, got {t_end}"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        bad.push(format!("dt must be positive, got {dt}"));
    }
    if bad.is_empty() {
        Ok(())
    } else {
        domain(bad.join("; "))
    }
}

/// RK4 with per-step damping factors supplied by `damp(step)`.
fn run<D: FnMut(usize) -> [f64; 3]>(
    sys: OdiSystem,
    c: f64,
    delta: f64,
    t_end: f64,
    dt: f64,
    mut damp: D,
) -> Result<Vec<OdiState>> {
    check(c, delta, t_end, dt)?;
    let steps = crate::dynamics::step_count(t_end, dt);
    let h = t_end / steps as f64;
    let pack = |t: f64, s: [f64; 3]| OdiState {
        t,
        x: s[0],
        y: s[1],
        z: (sys == OdiSystem::Forced).then_some(s[2]),
    };
    let mut s = [1.0, 0.0, 0.0];
    let mut out = Vec::with_capacity(steps + 1);
    out.push(pack(0.0, s));
    let add = |a: [f64; 3], k: [f64; 3], f: f64| [a[0] + f * k[0], a[1] + f * k[1], a[2] + f * k[2]];
    for i in 0..steps {
        let t = i as f64 * h;
        let d = damp(i);
        let k1 = rhs(sys, c, delta, t, s, d);
        let k2 = rhs(sys, c, delta, t + 0.5 * h, add(s, k1, 0.5 * h), d);
        let k3 = rhs(sys, c, delta, t + 0.5 * h, add(s, k2, 0.5 * h), d);
        let k4 = rhs(sys, c, delta, t + h, add(s, k3, h), d);
        for j in 0..3 {
            s[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        let t_next = if i + 1 == steps { t_end } else { (i + 1) as f64 * h };
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowup { time: t_next, detail: "non-finite envelope state".into() });
        }
        out.push(pack(t_next, s));
    }
    Ok(out)
}

pub fn integrate_odi(sys: OdiSystem, c: f64, delta: f64, t_end: f64, dt: f64) -> Result<Vec<OdiState>> {
    run(sys, c, delta, t_end, dt, |_| [1.0; 3])
}

/// `ẋ = y, ẏ = c e^{−δt} x` from `(1, 0)`.
pub fn integrate_odi_forceless(c: f64, delta: f64, t_end: f64, dt: f64) -> Result<Vec<OdiState>> {
    integrate_odi(OdiSystem::Forceless, c, delta, t_end, dt)
}

/// `ẋ = y, ẏ = c e^{−δt}(x + y) + c z, ż = c e^{−δt} x` from `(1, 0, 0)`.
pub fn integrate_odi_forced(c: f64, delta: f64, t_end: f64, dt: f64) -> Result<Vec<OdiState>> {
    integrate_odi(OdiSystem::Forced, c, delta, t_end, dt)
}

/// Smallest constants making the growth bounds hold on a trajectory.
///
/// Forceless: `y ≤ C_y min{1, t}`, `x ≤ 1 + C_x t`.
/// Forced: `x ≤ 1 + C_x t²`, `y ≤ C_y t`, `z ≤ C_z min{1, t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdiBounds {
    pub system: OdiSystem,
    pub c_x: f64,
    pub c_y: f64,
    pub c_z: Option<f64>,
}

impl OdiBounds {
    pub fn max_constant(&self) -> f64 {
        self.c_x.max(self.c_y).max(self.c_z.unwrap_or(0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.c_x.is_finite() && self.c_y.is_finite() && self.c_z.map_or(true, f64::is_finite)
    }
}

pub fn fit_odi_bounds(sys: OdiSystem, traj: &[OdiState]) -> OdiBounds {
    let (mut cx, mut cy, mut cz) = (0.0f64, 0.0f64, 0.0f64);
    for s in traj.iter().filter(|s| s.t > 0.0) {
        let t = s.t;
        match sys {
            OdiSystem::Forceless => {
                cy = cy.max(s.y / t.min(1.0));
                cx = cx.max((s.x - 1.0) / t);
            }
            OdiSystem::Forced => {
                cx = cx.max((s.x - 1.0) / (t * t));
                cy = cy.max(s.y / t);
                cz = cz.max(s.z.unwrap_or(0.0) / t.min(1.0));
            }
        }
    }
    OdiBounds { system: sys, c_x: cx, c_y: cy, c_z: (sys == OdiSystem::Forced).then_some(cz) }
}

/// Integrates the system with every right-hand side multiplied by an
/// independent factor in `[0, 1]` (redrawn each step) and returns the largest
/// amount by which the damped solution exceeds the equality solution, over
/// all times and components. The comparison principle makes this `≤ 0` up to
/// rounding.
pub fn damped_excess(sys: OdiSystem, c: f64, delta: f64, t_end: f64, dt: f64, seed: u64) -> Result<f64> {
    let full = integrate_odi(sys, c, delta, t_end, dt)?;
    let mut rng = rng::stream(seed, stream::ENSEMBLE, 0);
    let damped = run(sys, c, delta, t_end, dt, |_| [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()])?;
    Ok(full
        .iter()
        .zip(&damped)
        .map(|(f, d)| {
            let ez = d.z.unwrap_or(0.0) - f.z.unwrap_or(0.0);
            (d.x - f.x).max(d.y - f.y).max(ez)
        })
        .fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_source_is_stationary() {
        for s in integrate_odi_forceless(0.0, 1.0, 5.0, 0.01).unwrap() {
            assert_eq!((s.x, s.y, s.z), (1.0, 0.0, None));
        }
        for s in integrate_odi_forced(0.0, 1.0, 5.0, 0.01).unwrap() {
            assert_eq!((s.x, s.y, s.z), (1.0, 0.0, Some(0.0)));
        }
    }

    #[test]
    fn strong_damping_keeps_y_small() {
        let tr = integrate_odi_forceless(1.0, 100.0, 5.0, 1e-4).unwrap();
        let sup = tr.iter().map(|s| s.y).fold(0.0, f64::max);
        assert!(sup <= 0.02, "sup y = {sup}");
        // y ≤ ∫ c e^{−δ s} x ds with x ≈ 1
        assert!((sup - 0.01).abs() < 1e-3);
    }

    #[test]
    fn refinement_agrees() {
        for sys in [OdiSystem::Forceless, OdiSystem::Forced] {
            let a = integrate_odi(sys, 1.0, 1.0, 20.0, 1e-3).unwrap();
            let b = integrate_odi(sys, 1.0, 1.0, 20.0, 5e-4).unwrap();
            let (ea, eb) = (a.last().unwrap(), b.last().unwrap());
            assert!(((ea.x - eb.x) / eb.x).abs() < 1e-10, "{sys:?}");
            assert!(((ea.y - eb.y) / eb.y).abs() < 1e-10, "{sys:?}");
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!(integrate_odi_forceless(1.0, 0.0, 1.0, 0.1).is_err());
        assert!(integrate_odi_forced(-1.0, 1.0, 1.0, 0.1).is_err());
        assert!(integrate_odi_forced(1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn damped_solutions_are_dominated() {
        for sys in [OdiSystem::Forceless, OdiSystem::Forced] {
            for seed in 0..5 {
                assert!(damped_excess(sys, 1.0, 1.0, 10.0, 1e-3, seed).unwrap() <= 1e-8);
            }
        }
    }

    #[test]
    fn forced_z_saturates() {
        let tr = integrate_odi_forced(1.0, 1.0, 40.0, 1e-3).unwrap();
        let z: Vec<f64> = tr.iter().map(|s| s.z.unwrap()).collect();
        assert!(z.windows(2).all(|w| w[1] >= w[0]));
        let late = z[z.len() / 2];
        assert!((z.last().unwrap() - late) / late < 1e-6);
    }
}
