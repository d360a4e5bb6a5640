//! Compactly supported initial laws `f₀` and i.i.d. sampling from them.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ensemble::{check_unit, dot, norm, ParticleEnsemble};
use crate::error::{Error, Result};
use crate::rng;

/// Axis-aligned box `[lo, hi]` in `R^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        AxisBox { lo, hi }
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        AxisBox { lo: vec![lo; dim], hi: vec![hi; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn diameter(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (a, b))| a <= x && x <= b)
    }

    fn violations(&self, name: &str) -> Vec<String> {
        let mut out = Vec::new();
        if self.lo.is_empty() || self.lo.len() != self.hi.len() {
            out.push(format!("{name}: lo and hi must be non-empty and of equal length"));
            return out;
        }
        for (k, (a, b)) in self.lo.iter().zip(&self.hi).enumerate() {
            if !(a.is_finite() && b.is_finite()) {
                out.push(format!("{name}: non-finite bound in coordinate {k}"));
            } else if !(a < b) {
                out.push(format!("{name}: degenerate extent in coordinate {k} (lo = {a}, hi = {b})"));
            }
        }
        out
    }

    fn sample(&self, rng: &mut impl Rng, out: &mut Vec<f64>) {
        for (a, b) in self.lo.iter().zip(&self.hi) {
            out.push(rng.gen_range(*a..*b));
        }
    }
}

/// Velocity support of `f₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocityRegion {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Spherical-shell sector `{v : v·axis ≥ eps|v|, speed_min ≤ |v| ≤ speed_max}`.
    Cone { axis: Vec<f64>, eps: f64, speed_min: f64, speed_max: f64 },
}

/// Product law: position uniform on a box, velocity uniform on a box or a
/// cone sector (speed and cap direction drawn independently), θ uniform on
/// `[θ_*, θ^*]` when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDistribution {
    pub position_box: AxisBox,
    pub velocity: VelocityRegion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_range: Option<[f64; 2]>,
}

const MAX_REJECTIONS: usize = 1_000_000;

/// Axial component `u·axis` of a uniform direction on the cap
/// `{u : u·axis ≥ eps}` of the unit sphere in `R^dim`. Its density is
/// proportional to `(1 − t²)^((dim−3)/2)` on `[eps, 1]`; `None` asks the
/// caller to redraw.
fn cap_height(rng: &mut impl Rng, dim: usize, eps: f64) -> Option<f64> {
    match dim {
        1 => Some(1.0),
        2 => {
            let half = eps.clamp(-1.0, 1.0).acos();
            Some(if half == 0.0 { 1.0 } else { rng.gen_range(-half..=half).cos() })
        }
        _ => {
            let t = if eps >= 1.0 { 1.0 } else { rng.gen_range(eps..=1.0) };
            if dim == 3 || eps >= 1.0 {
                return Some(t);
            }
            let accept = ((1.0 - t * t) / (1.0 - eps * eps)).powf((dim as f64 - 3.0) / 2.0);
            (rng.gen::<f64>() < accept).then_some(t)
        }
    }
}

impl InitialDistribution {
    pub fn dim(&self) -> usize {
        self.position_box.dim()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = self.position_box.violations("init.position_box");
        let dim = self.dim();
        match &self.velocity {
            VelocityRegion::Box { lo, hi } => {
                let b = AxisBox::new(lo.clone(), hi.clone());
                out.extend(b.violations("init.velocity"));
                if b.dim() != dim {
                    out.push(format!("init.velocity has dimension {}, positions have {dim}", b.dim()));
                }
            }
            VelocityRegion::Cone { axis, eps, speed_min, speed_max } => {
                if axis.len() != dim {
                    out.push(format!("init.velocity.axis has dimension {}, positions have {dim}", axis.len()));
                } else if let Err(e) = check_unit(axis, dim) {
                    out.push(format!("init.velocity.axis: {e}"));
                }
                if !(*eps > 0.0 && *eps <= 1.0) {
                    out.push(format!("init.velocity.eps must lie in (0, 1], got {eps}"));
                }
                if !(*speed_min > 0.0 && speed_min.is_finite()) {
                    out.push(format!("init.velocity.speed_min must be positive, got {speed_min}"));
                }
                if !(speed_max > speed_min && speed_max.is_finite()) {
                    out.push(format!(
                        "init.velocity: degenerate speed shell [{speed_min}, {speed_max}]"
                    ));
                }
            }
        }
        if let Some([lo, hi]) = self.theta_range {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                out.push(format!("init.theta_range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }

    /// Largest velocity norm in the support.
    pub fn max_speed(&self) -> f64 {
        match &self.velocity {
            VelocityRegion::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(a, b)| a.abs().max(b.abs()).powi(2))
                .sum::<f64>()
                .sqrt(),
            VelocityRegion::Cone { speed_max, .. } => *speed_max,
        }
    }

    fn sample_velocity(&self, rng: &mut impl Rng, out: &mut Vec<f64>) -> Result<()> {
        match &self.velocity {
            VelocityRegion::Box { lo, hi } => {
                for (a, b) in lo.iter().zip(hi) {
                    out.push(rng.gen_range(*a..*b));
                }
                Ok(())
            }
            VelocityRegion::Cone { axis, eps, speed_min, speed_max } => {
                let dim = axis.len();
                let mut v = vec![0.0; dim];
                for _ in 0..MAX_REJECTIONS {
                    let speed = rng.gen_range(*speed_min..=*speed_max);
                    let Some(t) = cap_height(rng, dim, *eps) else { continue };
                    // unit vector orthogonal to the axis
                    let mut w: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                    let wa = dot(&w, axis);
                    w.iter_mut().zip(axis).for_each(|(c, a)| *c -= wa * a);
                    let wn = norm(&w);
                    if dim > 1 && wn == 0.0 {
                        continue;
                    }
                    let side = (1.0 - t * t).max(0.0).sqrt();
                    for ((c, a), o) in v.iter_mut().zip(axis).zip(&w) {
                        let o = if dim > 1 { o / wn } else { 0.0 };
                        *c = speed * (t * a + side * o);
                    }
                    // Accept on the same arithmetic `sector_margin` uses, so
                    // the support holds exactly in floating point.
                    let s = norm(&v);
                    if dot(&v, axis) - eps * s >= 0.0 && s >= *speed_min && s <= *speed_max {
                        out.extend_from_slice(&v);
                        return Ok(());
                    }
                }
                Err(Error::Config(format!(
                    "cone sampling failed after {MAX_REJECTIONS} rejections (eps = {eps})"
                )))
            }
        }
    }

    /// `n_particles` i.i.d. draws; particle `i` consumes the stream strictly
    /// after particle `i−1`, so smaller samples are prefixes of larger ones.
    pub fn sample(&self, n_particles: usize, seed: u64) -> Result<ParticleEnsemble> {
        self.validate()?;
        if n_particles == 0 {
            return Err(Error::Domain("n_particles must be at least 1".into()));
        }
        let dim = self.dim();
        let mut rng = rng::from_seed(seed);
        let mut pos = Vec::with_capacity(n_particles * dim);
        let mut vel = Vec::with_capacity(n_particles * dim);
        let mut th = self.theta_range.map(|_| Vec::with_capacity(n_particles));
        for _ in 0..n_particles {
            self.position_box.sample(&mut rng, &mut pos);
            self.sample_velocity(&mut rng, &mut vel)?;
            if let (Some(t), Some([lo, hi])) = (th.as_mut(), self.theta_range) {
                t.push(if lo == hi { lo } else { rng.gen_range(lo..hi) });
            }
        }
        ParticleEnsemble::new(dim, pos, vel, th, 0.0)
    }
}

/// Free-function form matching the library's operation naming.
pub fn sample_initial(
    dist: &InitialDistribution,
    n_particles: usize,
    seed: u64,
) -> Result<ParticleEnsemble> {
    dist.sample(n_particles, seed)
}
