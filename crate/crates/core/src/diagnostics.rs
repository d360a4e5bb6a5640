//! Flocking observables, the projected angle functional and envelope fits.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ensemble::{check_unit, dot, norm, ParticleEnsemble};
use crate::error::{domain, Result};
use crate::rng::{self, domain as stream};

pub const DEFAULT_EXTRA_PLANES: usize = 32;

/// Angle between `a` and `b` as `2 atan2(|â − b̂|, |â + b̂|)`, accurate near
/// 0 and π. `None` if either vector vanishes.
pub fn angle_between(a: &[f64], b: &[f64]) -> Option<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let (mut dif, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (x / na, y / nb);
        dif += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    Some(2.0 * dif.sqrt().atan2(sum.sqrt()))
}

/// One snapshot of the flocking observables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlockDiagnostics {
    pub t: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub theta_plus: f64,
    pub theta_minus: f64,
    pub v_plus: f64,
    pub v_minus: f64,
    /// NaN when some velocity vanishes.
    pub gamma: f64,
    pub gamma2d: f64,
    #[serde(rename = "Rratio")]
    pub rratio: f64,
    /// A zero velocity made `gamma`, `gamma2d` and `Rratio` undefined.
    pub angle_undefined: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsOptions {
    pub extra_planes: usize,
    pub plane_seed: u64,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        DiagnosticsOptions { extra_planes: DEFAULT_EXTRA_PLANES, plane_seed: 0 }
    }
}

fn rows_diameter(data: &[f64], dim: usize) -> f64 {
    let n = data.len() / dim;
    let mut best: f64 = 0.0;
    for i in 0..n {
        let a = &data[i * dim..(i + 1) * dim];
        for j in i + 1..n {
            let b = &data[j * dim..(j + 1) * dim];
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            best = best.max(d2);
        }
    }
    best.sqrt()
}

/// Exact pairwise observables of `ens`; `axis` anchors the projected angle.
pub fn flock_diagnostics(ens: &ParticleEnsemble, axis: &[f64]) -> Result<FlockDiagnostics> {
    flock_diagnostics_with(ens, axis, DiagnosticsOptions::default())
}

pub fn flock_diagnostics_with(
    ens: &ParticleEnsemble,
    axis: &[f64],
    opts: DiagnosticsOptions,
) -> Result<FlockDiagnostics> {
    check_unit(axis, ens.dim())?;
    let n = ens.count();
    let dim = ens.dim();
    let d = rows_diameter(&ens.positions, dim);
    let a = rows_diameter(&ens.velocities, dim);
    let (theta_minus, theta_plus) = match &ens.thetas {
        Some(th) => th.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x))),
        None => (0.0, 0.0),
    };
    let speeds: Vec<f64> = (0..n).map(|i| norm(ens.velocity(i))).collect();
    let v_plus = speeds.iter().copied().fold(0.0, f64::max);
    let v_minus = speeds.iter().copied().fold(f64::INFINITY, f64::min);
    let angle_undefined = v_minus == 0.0;
    let (gamma, gamma2d, rratio) = if angle_undefined {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let mut g: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                g = g.max(angle_between(ens.velocity(i), ens.velocity(j)).unwrap_or(0.0));
            }
        }
        let g2 = projected_max_angle_with(ens, axis, opts.extra_planes, opts.plane_seed)?;
        (g, g2, (v_plus * v_plus) / (v_minus * v_minus))
    };
    Ok(FlockDiagnostics {
        t: ens.time,
        d,
        a,
        q: theta_plus - theta_minus,
        theta_plus,
        theta_minus,
        v_plus,
        v_minus,
        gamma,
        gamma2d,
        rratio,
        angle_undefined,
    })
}

/// Angle between the projections of `u` and `v` on `span{e1, e2}`
/// (orthonormal). `None` if a projection vanishes.
fn plane_angle(u: &[f64], v: &[f64], e1: &[f64], e2: &[f64]) -> Option<f64> {
    angle_between(&[dot(u, e1), dot(u, e2)], &[dot(v, e1), dot(v, e2)])
}

/// Unit vector along the part of `w` orthogonal to `axis`, if nonzero.
fn orthogonal_unit(w: &[f64], axis: &[f64]) -> Option<Vec<f64>> {
    let c = dot(w, axis);
    let r: Vec<f64> = w.iter().zip(axis).map(|(x, a)| x - c * a).collect();
    let nr = norm(&r);
    (nr > 1e-14 * norm(w).max(f64::MIN_POSITIVE)).then(|| r.iter().map(|x| x / nr).collect())
}

/// Maximum over pairs of the projected angle on the plane
/// `span{axis, ũ − ṽ}` (which never decreases the angle), and on
/// `DEFAULT_EXTRA_PLANES` random planes containing the axis.
pub fn projected_max_angle(ens: &ParticleEnsemble, axis: &[f64], extra_planes: usize) -> Result<f64> {
    projected_max_angle_with(ens, axis, extra_planes, 0)
}

pub fn projected_max_angle_with(
    ens: &ParticleEnsemble,
    axis: &[f64],
    extra_planes: usize,
    seed: u64,
) -> Result<f64> {
    check_unit(axis, ens.dim())?;
    let n = ens.count();
    let dim = ens.dim();
    let units: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let v = ens.velocity(i);
            let s = norm(v);
            if s == 0.0 {
                domain(format!("velocity {i} vanishes; projected angle undefined"))
            } else {
                Ok(v.iter().map(|x| x / s).collect())
            }
        })
        .collect::<Result<_>>()?;

    let mut rng = rng::stream(seed, stream::PLANES, 0);
    let mut planes: Vec<Vec<f64>> = Vec::with_capacity(extra_planes);
    while planes.len() < extra_planes && dim >= 2 {
        let w: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Some(e2) = orthogonal_unit(&w, axis) {
            planes.push(e2);
        }
    }

    let mut best: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let (u, v) = (&units[i], &units[j]);
            if u == v {
                continue;
            }
            let diff: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
            let e2 = orthogonal_unit(&diff, axis).or_else(|| orthogonal_unit(u, axis));
            let angle = match e2 {
                Some(e2) => plane_angle(u, v, axis, &e2),
                // Both directions lie on the axis line.
                None => angle_between(u, v),
            };
            best = best.max(angle.unwrap_or(0.0));
            for e2 in &planes {
                if let Some(a) = plane_angle(u, v, axis, e2) {
                    best = best.max(a);
                }
            }
        }
    }
    Ok(best.min(PI))
}

/// Per-snapshot diagnostics together with the running sup of `D`.
pub fn diagnostics_series(
    traj: &[ParticleEnsemble],
    axis: &[f64],
    opts: DiagnosticsOptions,
) -> Result<Vec<FlockDiagnostics>> {
    traj.iter().map(|s| flock_diagnostics_with(s, axis, opts)).collect()
}

/// `sup_t D(t)` over a diagnostics series.
pub fn observed_diameter(series: &[FlockDiagnostics]) -> f64 {
    series.iter().map(|d| d.d).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Fits

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeForm {
    ExpDecay,
    LinMin,
    QuadMin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub form: EnvelopeForm,
    pub c_hat: f64,
    pub delta_hat: Option<f64>,
    /// Worst ratio of observed value to the envelope (with the supplied
    /// constant, or `c_hat` when none is supplied).
    pub max_violation: f64,
    /// A positive value at a time where the envelope vanishes.
    pub zero_time_violation: bool,
}

impl EnvelopeFit {
    pub fn holds(&self) -> bool {
        self.max_violation <= 1.0 && !self.zero_time_violation
    }
}

/// Least-squares fit of `y = a + b t`; returns `(a, b)`. Deviations are
/// taken from the first sample, so a constant `y` gives `b = 0` exactly.
pub fn linear_fit(t: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if t.len() != y.len() || t.len() < 2 {
        return domain("linear fit needs at least two paired samples");
    }
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let dy: Vec<f64> = y.iter().map(|v| v - y[0]).collect();
    let dym = dy.iter().sum::<f64>() / n;
    let sxx: f64 = t.iter().map(|x| (x - tm) * (x - tm)).sum();
    if !(sxx > 0.0) {
        return domain("linear fit needs at least two distinct abscissae");
    }
    let sxy: f64 = t.iter().zip(&dy).map(|(x, v)| (x - tm) * v).sum();
    let slope = sxy / sxx;
    Ok((y[0] + dym - slope * tm, slope))
}

/// Slope of `log value` against `log t` over the samples with
/// `t ∈ [t_lo, t_hi]`.
pub fn loglog_slope(series: &[(f64, f64)], t_lo: f64, t_hi: f64) -> Result<f64> {
    let pts: Vec<_> = series.iter().filter(|(t, _)| *t >= t_lo && *t <= t_hi).collect();
    if pts.iter().any(|(t, v)| !(*t > 0.0 && *v > 0.0)) {
        return domain("log-log slope needs positive times and values");
    }
    let lt: Vec<f64> = pts.iter().map(|(t, _)| t.ln()).collect();
    let lv: Vec<f64> = pts.iter().map(|(_, v)| v.ln()).collect();
    Ok(linear_fit(&lt, &lv)?.1)
}

/// Exponential rate of `value ≈ C e^(−δ t)` from samples with `t ≥ t_min`.
pub fn fit_decay_rate(series: &[(f64, f64)], t_min: f64) -> Result<EnvelopeFit> {
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|(t, _)| *t >= t_min).collect();
    if pts.len() < 5 {
        return domain(format!("decay fit needs at least 5 samples with t >= {t_min}, got {}", pts.len()));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return domain(format!("decay fit needs positive values, got {v} at t = {t}"));
    }
    let t: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (a, b) = linear_fit(&t, &y)?;
    let (c_hat, delta_hat) = (a.exp(), -b);
    let max_violation = pts.iter().map(|(t, v)| v / (c_hat * (-delta_hat * t).exp())).fold(0.0, f64::max);
    Ok(EnvelopeFit {
        form: EnvelopeForm::ExpDecay,
        c_hat,
        delta_hat: Some(delta_hat),
        max_violation,
        zero_time_violation: false,
    })
}

/// Constants of an envelope check; `n` is required by the `min` forms and
/// `delta` by `exp_decay`. `c`, when given, is the constant to test against.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub n: Option<usize>,
    pub delta: Option<f64>,
    pub c: Option<f64>,
}

fn shape(form: EnvelopeForm, params: &EnvelopeParams) -> Result<Box<dyn Fn(f64) -> f64>> {
    match form {
        EnvelopeForm::LinMin | EnvelopeForm::QuadMin => {
            let Some(n) = params.n.filter(|&n| n > 0) else {
                return domain("min-type envelopes need a positive N");
            };
            let s = (n as f64).sqrt();
            Ok(if form == EnvelopeForm::LinMin {
                Box::new(move |t| (t / s).min(1.0))
            } else {
                Box::new(move |t| (t * t / s).min(1.0))
            })
        }
        EnvelopeForm::ExpDecay => {
            let Some(d) = params.delta.filter(|d| d.is_finite()) else {
                return domain("exp_decay envelope needs a finite delta");
            };
            Ok(Box::new(move |t| (-d * t).exp()))
        }
    }
}

/// Smallest constant `C` with `value ≤ C · g(t)` on the series, where `g`
/// is the envelope shape, and the worst ratio against `params.c` (or `C`).
pub fn envelope_check(series: &[(f64, f64)], form: EnvelopeForm, params: &EnvelopeParams) -> Result<EnvelopeFit> {
    if series.is_empty() {
        return domain("envelope check needs a non-empty series");
    }
    let g = shape(form, params)?;
    let mut c_hat: f64 = 0.0;
    let mut zero_time_violation = false;
    for &(t, v) in series {
        let e = g(t);
        if e > 0.0 {
            c_hat = c_hat.max(v / e);
        } else if v > 0.0 {
            zero_time_violation = true;
        }
    }
    let reference = params.c.unwrap_or(c_hat);
    let mut max_violation: f64 = 0.0;
    for &(t, v) in series {
        let e = reference * g(t);
        let r = if e > 0.0 {
            v / e
        } else if v > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        max_violation = max_violation.max(r);
    }
    Ok(EnvelopeFit {
        form,
        c_hat,
        delta_hat: (form == EnvelopeForm::ExpDecay).then(|| params.delta.unwrap_or(f64::NAN)),
        max_violation,
        zero_time_violation,
    })
}
