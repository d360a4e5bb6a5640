//! Right-hand sides and fixed-step RK4 integration of the discrete
//! Cucker-Smale system and its Rayleigh-forced variant with variable
//! characteristic parameters θ.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{ForceParams, ParticleEnsemble};
use crate::error::{contract, Error, Result};
use crate::kernel::{self, KernelSpec, Radial};

/// Time derivatives of every component of a [`ParticleEnsemble`].
#[derive(Debug, Clone, PartialEq)]
pub struct Derivatives {
    pub d_positions: Vec<f64>,
    pub d_velocities: Vec<f64>,
    pub d_thetas: Option<Vec<f64>>,
}

impl Derivatives {
    pub fn all_finite(&self) -> bool {
        self.d_positions.iter().chain(&self.d_velocities).all(|v| v.is_finite())
            && self.d_thetas.as_ref().map_or(true, |t| t.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_stride")]
    pub observer_stride: usize,
}

pub const DEFAULT_DT: f64 = 1e-2;

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_stride() -> usize {
    1
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_end: f64, observer_stride: usize) -> Self {
        IntegratorConfig { dt, t_end, observer_stride }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            out.push(format!("integrator.dt must be positive, got {}", self.dt));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            out.push(format!("integrator.t_end must be positive, got {}", self.t_end));
        }
        if self.dt > self.t_end {
            out.push(format!("integrator.dt = {} exceeds t_end = {}", self.dt, self.t_end));
        }
        if self.observer_stride == 0 {
            out.push("integrator.observer_stride must be positive".into());
        }
        out
    }

    /// Number of steps; the last one is shortened to land on `t_end`.
    pub fn step_count(&self) -> usize {
        step_count(self.t_end, self.dt)
    }
}

pub(crate) fn step_count(span: f64, dt: f64) -> usize {
    ((span / dt) - 1e-9).ceil().max(1.0) as usize
}

// ---------------------------------------------------------------------------
// pairwise interaction

/// Rows per rayon task; below `PAR_THRESHOLD` pair evaluations the loop runs
/// on the calling thread.
const ROW_CHUNK: usize = 16;
const PAR_THRESHOLD: usize = 1 << 16;

/// `|v|^p`. The p = 2 case avoids the square root.
#[inline]
pub(crate) fn speed_pow(v: &[f64], p: f64) -> f64 {
    let s2: f64 = v.iter().map(|a| a * a).sum();
    if p == 2.0 {
        s2
    } else {
        s2.sqrt().powf(p)
    }
}

/// For every target point `i` and the empirical measure of `sources`:
/// `dv[i] = (1/M) Σ_j φ(|x_i − y_j|)(w_j − v_i)` and, when both carry θ,
/// `dth[i] = (1/M) Σ_j φ(|x_i − y_j|)(η_j − θ_i)`; j ascending.
pub(crate) fn alignment(
    targets: &ParticleEnsemble,
    sources: &ParticleEnsemble,
    kernel: &KernelSpec,
    dv: &mut [f64],
    mut dth: Option<&mut [f64]>,
) {
    let dim = targets.dim();
    let n = targets.count();
    let m = sources.count();
    let parallel = n * m >= PAR_THRESHOLD && n > ROW_CHUNK;
    let src_th = sources.thetas.as_deref();
    let tgt_th = targets.thetas.as_deref();
    let rows = |start: usize, dv: &mut [f64], dth: Option<&mut [f64]>| {
        let mut w = vec![0.0; m];
        let count = dv.len() / dim;
        let mut dth = dth;
        for r in 0..count {
            let i = start + r;
            weights(kernel.radial(), dim, targets.position(i), &sources.positions, &mut w);
            accumulate(
                dim,
                &w,
                targets.velocity(i),
                &sources.velocities,
                &mut dv[r * dim..(r + 1) * dim],
            );
            if let (Some(out), Some(eta), Some(th)) = (dth.as_deref_mut(), src_th, tgt_th) {
                let ti = th[i];
                let mut acc = 0.0;
                for (wj, ej) in w.iter().zip(eta) {
                    acc += wj * (ej - ti);
                }
                out[r] = acc * (1.0 / m as f64);
            }
        }
    };
    if parallel {
        match dth.as_deref_mut() {
            Some(th_out) => dv
                .par_chunks_mut(ROW_CHUNK * dim)
                .zip(th_out.par_chunks_mut(ROW_CHUNK))
                .enumerate()
                .for_each(|(c, (dv, th))| rows(c * ROW_CHUNK, dv, Some(th))),
            None => dv
                .par_chunks_mut(ROW_CHUNK * dim)
                .enumerate()
                .for_each(|(c, dv)| rows(c * ROW_CHUNK, dv, None)),
        }
    } else {
        rows(0, dv, dth);
    }
    debug_assert_eq!(dv.len(), n * dim);
}

fn weights(radial: Radial<'_>, dim: usize, xi: &[f64], src: &[f64], w: &mut [f64]) {
    match radial {
        Radial::Constant(l) => w.iter_mut().for_each(|v| *v = l),
        Radial::PowerQuarter(l) => fill(dim, xi, src, w, |r2| kernel::power_quarter(l, r2)),
        Radial::PowerHalf(l) => fill(dim, xi, src, w, |r2| kernel::power_half(l, r2)),
        Radial::PowerOne(l) => fill(dim, xi, src, w, |r2| kernel::power_one(l, r2)),
        Radial::PowerGeneral(l, e) => fill(dim, xi, src, w, |r2| kernel::power_general(l, e, r2)),
        Radial::Table(t) => fill(dim, xi, src, w, |r2| kernel::table_eval(t, r2.sqrt())),
    }
}

#[inline(always)]
fn fill<F: Fn(f64) -> f64>(dim: usize, xi: &[f64], src: &[f64], w: &mut [f64], phi: F) {
    match dim {
        1 => fill_d::<1, F>(xi, src, w, phi),
        2 => fill_d::<2, F>(xi, src, w, phi),
        3 => fill_d::<3, F>(xi, src, w, phi),
        4 => fill_d::<4, F>(xi, src, w, phi),
        _ => {
            for (wj, y) in w.iter_mut().zip(src.chunks_exact(dim)) {
                let mut r2 = 0.0;
                for (a, b) in xi.iter().zip(y) {
                    let t = a - b;
                    r2 += t * t;
                }
                *wj = phi(r2);
            }
        }
    }
}

#[inline(always)]
fn fill_d<const D: usize, F: Fn(f64) -> f64>(xi: &[f64], src: &[f64], w: &mut [f64], phi: F) {
    let xi: &[f64; D] = xi.try_into().expect("row width");
    for (wj, y) in w.iter_mut().zip(src.chunks_exact(D)) {
        let mut r2 = 0.0;
        for d in 0..D {
            let t = xi[d] - y[d];
            r2 += t * t;
        }
        *wj = phi(r2);
    }
}

fn accumulate(dim: usize, w: &[f64], vi: &[f64], src_v: &[f64], out: &mut [f64]) {
    let inv = 1.0 / w.len() as f64;
    match dim {
        1 => accumulate_d::<1>(w, vi, src_v, out, inv),
        2 => accumulate_d::<2>(w, vi, src_v, out, inv),
        3 => accumulate_d::<3>(w, vi, src_v, out, inv),
        4 => accumulate_d::<4>(w, vi, src_v, out, inv),
        _ => {
            out.iter_mut().for_each(|o| *o = 0.0);
            for (wj, v) in w.iter().zip(src_v.chunks_exact(dim)) {
                for d in 0..dim {
                    out[d] += wj * (v[d] - vi[d]);
                }
            }
            out.iter_mut().for_each(|o| *o *= inv);
        }
    }
}

#[inline(always)]
fn accumulate_d<const D: usize>(w: &[f64], vi: &[f64], src_v: &[f64], out: &mut [f64], inv: f64) {
    let vi: &[f64; D] = vi.try_into().expect("row width");
    let mut acc = [0.0; D];
    for (wj, v) in w.iter().zip(src_v.chunks_exact(D)) {
        for d in 0..D {
            acc[d] += wj * (v[d] - vi[d]);
        }
    }
    for d in 0..D {
        out[d] = acc[d] * inv;
    }
}

/// Adds `σ v_i (θ_i − |v_i|^p)` to `dv`.
pub(crate) fn add_self_propulsion(ens: &ParticleEnsemble, force: &ForceParams, dv: &mut [f64]) {
    let dim = ens.dim();
    let th = ens.thetas.as_deref().expect("forced ensemble");
    for (i, (out, v)) in dv.chunks_exact_mut(dim).zip(ens.velocities.chunks_exact(dim)).enumerate() {
        let g = force.sigma * (th[i] - speed_pow(v, force.p));
        for (o, a) in out.iter_mut().zip(v) {
            *o += g * a;
        }
    }
}

/// Interaction of `targets` with the empirical measure of `sources` under
/// the forceless or forced model. `cs_rhs`, `csr_rhs` and the mean-field
/// right-hand side are all this function.
pub(crate) fn interaction_rhs(
    targets: &ParticleEnsemble,
    sources: &ParticleEnsemble,
    kernel: &KernelSpec,
    force: Option<&ForceParams>,
) -> Derivatives {
    let mut dv = vec![0.0; targets.velocities.len()];
    match force {
        None => {
            alignment(targets, sources, kernel, &mut dv, None);
            Derivatives { d_positions: targets.velocities.clone(), d_velocities: dv, d_thetas: None }
        }
        Some(f) => {
            let mut dth = vec![0.0; targets.count()];
            alignment(targets, sources, kernel, &mut dv, Some(&mut dth));
            add_self_propulsion(targets, f, &mut dv);
            dth.iter_mut().for_each(|t| *t *= f.kappa);
            Derivatives {
                d_positions: targets.velocities.clone(),
                d_velocities: dv,
                d_thetas: Some(dth),
            }
        }
    }
}

/// Forceless Cucker-Smale right-hand side.
pub fn cs_rhs(ens: &ParticleEnsemble, kernel: &KernelSpec) -> Result<Derivatives> {
    if ens.is_forced() {
        return contract("cs_rhs expects an ensemble without thetas");
    }
    Ok(interaction_rhs(ens, ens, kernel, None))
}

/// Cucker-Smale with self-propulsion / Rayleigh friction and θ alignment.
pub fn csr_rhs(ens: &ParticleEnsemble, kernel: &KernelSpec, force: &ForceParams) -> Result<Derivatives> {
    if !ens.is_forced() {
        return contract("csr_rhs requires thetas");
    }
    Ok(interaction_rhs(ens, ens, kernel, Some(force)))
}

/// Dispatches to [`cs_rhs`] or [`csr_rhs`].
pub fn model_rhs(
    ens: &ParticleEnsemble,
    kernel: &KernelSpec,
    force: Option<&ForceParams>,
) -> Result<Derivatives> {
    match force {
        None => cs_rhs(ens, kernel),
        Some(f) => csr_rhs(ens, kernel, f),
    }
}

// ---------------------------------------------------------------------------
// RK4

/// `ens + h·k` at time `ens.time + h`.
pub(crate) fn offset(ens: &ParticleEnsemble, k: &Derivatives, h: f64) -> ParticleEnsemble {
    let axpy = |x: &[f64], d: &[f64]| x.iter().zip(d).map(|(a, b)| a + h * b).collect::<Vec<_>>();
    ParticleEnsemble::raw(
        ens.dim(),
        axpy(&ens.positions, &k.d_positions),
        axpy(&ens.velocities, &k.d_velocities),
        match (&ens.thetas, &k.d_thetas) {
            (Some(t), Some(d)) => Some(axpy(t, d)),
            (t, _) => t.clone(),
        },
        ens.time + h,
    )
}

/// `ens + dt/6 (k1 + 2k2 + 2k3 + k4)` at `ens.time + dt`.
pub(crate) fn combine(ens: &ParticleEnsemble, k: &[Derivatives; 4], dt: f64) -> ParticleEnsemble {
    let h = dt / 6.0;
    let comb = |x: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| {
        x.iter()
            .enumerate()
            .map(|(i, xi)| xi + h * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]))
            .collect::<Vec<_>>()
    };
    let [k1, k2, k3, k4] = k;
    ParticleEnsemble::raw(
        ens.dim(),
        comb(&ens.positions, &k1.d_positions, &k2.d_positions, &k3.d_positions, &k4.d_positions),
        comb(&ens.velocities, &k1.d_velocities, &k2.d_velocities, &k3.d_velocities, &k4.d_velocities),
        match (&ens.thetas, &k1.d_thetas, &k2.d_thetas, &k3.d_thetas, &k4.d_thetas) {
            (Some(t), Some(a), Some(b), Some(c), Some(d)) => Some(comb(t, a, b, c, d)),
            (t, ..) => t.clone(),
        },
        ens.time + dt,
    )
}

pub(crate) fn check_finite(k: &Derivatives, time: f64, stage: usize) -> Result<()> {
    if k.all_finite() {
        Ok(())
    } else {
        Err(Error::NumericalBlowup { time, detail: format!("non-finite derivative in RK4 stage {stage}") })
    }
}

/// One classical Runge-Kutta step of size `dt`.
pub fn rk4_step<F>(ens: &ParticleEnsemble, rhs: F, dt: f64) -> Result<ParticleEnsemble>
where
    F: Fn(&ParticleEnsemble) -> Result<Derivatives>,
{
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let t = ens.time;
    let k1 = rhs(ens)?;
    check_finite(&k1, t, 1)?;
    let s2 = offset(ens, &k1, 0.5 * dt);
    let k2 = rhs(&s2)?;
    check_finite(&k2, t + 0.5 * dt, 2)?;
    let s3 = offset(ens, &k2, 0.5 * dt);
    let k3 = rhs(&s3)?;
    check_finite(&k3, t + 0.5 * dt, 3)?;
    let s4 = offset(ens, &k3, dt);
    let k4 = rhs(&s4)?;
    check_finite(&k4, t + dt, 4)?;
    let next = combine(ens, &[k1, k2, k3, k4], dt);
    if !next.all_finite() {
        return Err(Error::NumericalBlowup { time: t + dt, detail: "non-finite state after RK4 step".into() });
    }
    Ok(next)
}

/// Integrates from `ens.time` to `ens.time + cfg.t_end`, recording a
/// snapshot at the start, every `observer_stride` steps and at the end.
/// Every recorded snapshot is also passed to each observer.
pub fn integrate(
    ens: &ParticleEnsemble,
    kernel: &KernelSpec,
    force: Option<&ForceParams>,
    cfg: &IntegratorConfig,
    observers: &mut [&mut dyn FnMut(&ParticleEnsemble)],
) -> Result<Vec<ParticleEnsemble>> {
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(Error::Config(v.join("; ")));
    }
    if force.is_some() != ens.is_forced() {
        return contract("forced model requires thetas and forceless model forbids them");
    }
    let t0 = ens.time;
    let steps = cfg.step_count();
    let mut record = |s: &ParticleEnsemble, out: &mut Vec<ParticleEnsemble>| {
        for obs in observers.iter_mut() {
            obs(s);
        }
        out.push(s.clone());
    };
    let mut traj = Vec::with_capacity(steps / cfg.observer_stride + 2);
    let mut state = ens.clone();
    record(&state, &mut traj);
    for k in 1..=steps {
        let target = if k == steps { t0 + cfg.t_end } else { t0 + k as f64 * cfg.dt };
        let h = target - state.time;
        let mut next = rk4_step(&state, |s| model_rhs(s, kernel, force), h)?;
        next.time = target;
        state = next;
        if k % cfg.observer_stride == 0 || k == steps {
            record(&state, &mut traj);
        }
    }
    Ok(traj)
}
