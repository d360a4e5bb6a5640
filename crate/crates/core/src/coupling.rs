//! Coupled Monte Carlo trials: an `N`-particle flow and `N` mean-field
//! characteristics started from the same i.i.d. sample, the energies
//! `P, K, C` between them, and the marginal W2 bounds they imply.
//!
//! Trial `k` draws its sample from stream `(TRIAL_SAMPLE, k)`. The reference
//! ensemble standing in for `f_t` is drawn from stream `(REFERENCE, r)` where
//! `r = k` by default, or `r = k mod R` when a reference pool of size `R` is
//! configured. Trials that share a reference are advanced together against a
//! single reference evolution; results do not depend on the grouping.

use std::collections::BTreeMap;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{model_rhs, rk4_step, step_count, IntegratorConfig};
use crate::ensemble::{ForceParams, ParticleEnsemble};
use crate::error::{contract, domain, Error, Result};
use crate::kernel::KernelSpec;
use crate::meanfield::ReferenceStep;
use crate::rng::{self, domain as stream};
use crate::sampling::InitialDistribution;

pub const DEFAULT_TRIALS: usize = 100;
pub const DEFAULT_OBS_POINTS: usize = 24;

/// Default reference size `max(4096, 16 N)`.
pub fn default_reference_size(n_particles: usize) -> usize {
    4096.max(16 * n_particles)
}

/// `t = 0` followed by `points` log-spaced times from `t_min` to `t_end`
/// inclusive. `t_min` defaults to `t_end / 64`.
pub fn observation_times(t_end: f64, points: usize, t_min: Option<f64>) -> Result<Vec<f64>> {
    let t_min = t_min.unwrap_or(t_end / 64.0);
    if !(t_end > 0.0 && t_end.is_finite()) {
        return domain(format!("t_end must be positive, got {t_end}"));
    }
    if !(t_min > 0.0 && t_min <= t_end) {
        return domain(format!("observation t_min must lie in (0, t_end], got {t_min}"));
    }
    if points == 0 {
        return domain("at least one observation point is required");
    }
    let mut out = vec![0.0];
    if points == 1 {
        out.push(t_end);
        return Ok(out);
    }
    let (a, b) = (t_min.ln(), t_end.ln());
    for i in 0..points {
        let t = if i == 0 {
            t_min
        } else if i + 1 == points {
            t_end
        } else {
            (a + (b - a) * i as f64 / (points - 1) as f64).exp()
        };
        if t > *out.last().unwrap() {
            out.push(t);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingConfig {
    pub n_particles: usize,
    pub n_reference: usize,
    pub trials: usize,
    pub kernel: KernelSpec,
    pub force: Option<ForceParams>,
    pub init: InitialDistribution,
    pub integrator: IntegratorConfig,
    pub master_seed: u64,
    pub obs_points: usize,
    pub obs_t_min: Option<f64>,
    /// `None`: a fresh reference ensemble per trial.
    pub reference_pool: Option<usize>,
}

impl CouplingConfig {
    pub fn new(
        n_particles: usize,
        kernel: KernelSpec,
        force: Option<ForceParams>,
        init: InitialDistribution,
        integrator: IntegratorConfig,
        master_seed: u64,
    ) -> Self {
        CouplingConfig {
            n_particles,
            n_reference: default_reference_size(n_particles),
            trials: DEFAULT_TRIALS,
            kernel,
            force,
            init,
            integrator,
            master_seed,
            obs_points: DEFAULT_OBS_POINTS,
            obs_t_min: None,
            reference_pool: None,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_particles == 0 {
            v.push("n_particles must be at least 1".to_string());
        }
        if self.n_reference < self.n_particles {
            v.push(format!(
                "n_reference = {} must be at least n_particles = {}",
                self.n_reference, self.n_particles
            ));
        }
        if self.trials == 0 {
            v.push("trials must be at least 1".to_string());
        }
        if self.reference_pool == Some(0) {
            v.push("reference_pool must be at least 1 when given".to_string());
        }
        v.extend(self.kernel.violations());
        if let Some(f) = &self.force {
            v.extend(f.violations());
        }
        v.extend(self.init.violations());
        if self.force.is_some() != self.init.theta_range.is_some() {
            v.push("the forced model requires init.theta_range and the forceless model forbids it".into());
        }
        v.extend(self.integrator.violations());
        if self.integrator.violations().is_empty() {
            if let Err(e) = observation_times(self.integrator.t_end, self.obs_points, self.obs_t_min) {
                v.push(format!("observation grid: {e}"));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }

    pub fn observation_times(&self) -> Result<Vec<f64>> {
        observation_times(self.integrator.t_end, self.obs_points, self.obs_t_min)
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        rng::child_seed(self.master_seed, stream::TRIAL_SAMPLE, trial as u64)
    }

    pub fn reference_stream(&self, trial: usize) -> usize {
        match self.reference_pool {
            Some(r) => trial % r,
            None => trial,
        }
    }

    pub fn reference_seed(&self, trial: usize) -> u64 {
        rng::child_seed(self.master_seed, stream::REFERENCE, self.reference_stream(trial) as u64)
    }
}

/// Coupling energies of one trial (or their means) at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaosMetricsSample {
    pub t: f64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub total: f64,
}

impl ChaosMetricsSample {
    pub fn new(t: f64, p: f64, k: f64, c: f64) -> Self {
        ChaosMetricsSample { t, p, k, c, total: 2.0 * (p + k + c) }
    }

    /// Energies between a discrete state and its tracked counterpart.
    pub fn between(discrete: &ParticleEnsemble, tracked: &ParticleEnsemble) -> Self {
        let half_sq = |a: &[f64], b: &[f64]| 0.5 * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        let c = match (&discrete.thetas, &tracked.thetas) {
            (Some(a), Some(b)) => half_sq(a, b),
            _ => 0.0,
        };
        Self::new(
            discrete.time,
            half_sq(&discrete.positions, &tracked.positions),
            half_sq(&discrete.velocities, &tracked.velocities),
            c,
        )
    }
}

/// One trial's energies, plus the phase point `(x, v[, θ])` of particle 0 in
/// both systems at every observation time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub n_particles: usize,
    pub samples: Vec<ChaosMetricsSample>,
    pub discrete_marginal: Vec<Vec<f64>>,
    pub tracked_marginal: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub trial_seed: u64,
    pub reference_seed: u64,
    pub time: f64,
    pub detail: String,
}

/// All trials of one `N`, in trial-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosRun {
    pub n_particles: usize,
    pub records: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub t: f64,
    #[serde(rename = "P_mean")]
    pub p_mean: f64,
    #[serde(rename = "K_mean")]
    pub k_mean: f64,
    #[serde(rename = "C_mean")]
    pub c_mean: f64,
    pub total_mean: f64,
    /// NaN with fewer than two trials.
    pub total_stderr: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosAggregate {
    pub n_particles: usize,
    pub rows: Vec<AggregateRow>,
    pub trials_requested: usize,
    pub failures: Vec<TrialFailure>,
}

impl ChaosAggregate {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn surviving_trials(&self) -> usize {
        self.trials_requested - self.failures.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    /// Row at time `t` (exact match).
    pub fn at(&self, t: f64) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.t == t)
    }
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-time means over trials, in the order given. All series must share
/// the same time stamps.
pub fn aggregate(n_particles: usize, series: &[Vec<ChaosMetricsSample>]) -> Result<ChaosAggregate> {
    let Some(first) = series.first() else {
        return domain("cannot aggregate zero trials");
    };
    for s in series {
        if s.len() != first.len() || s.iter().zip(first).any(|(a, b)| a.t != b.t) {
            return contract("trial series have different observation times");
        }
    }
    let rows = (0..first.len())
        .map(|i| {
            let col = |f: fn(&ChaosMetricsSample) -> f64| series.iter().map(|s| f(&s[i])).collect::<Vec<_>>();
            let (total_mean, total_stderr) = mean_and_stderr(&col(|s| s.total));
            AggregateRow {
                t: first[i].t,
                p_mean: mean_and_stderr(&col(|s| s.p)).0,
                k_mean: mean_and_stderr(&col(|s| s.k)).0,
                c_mean: mean_and_stderr(&col(|s| s.c)).0,
                total_mean,
                total_stderr,
                trials: series.len(),
            }
        })
        .collect();
    Ok(ChaosAggregate { n_particles, rows, trials_requested: series.len(), failures: Vec::new() })
}

impl ChaosRun {
    pub fn aggregate(&self, times: &[f64]) -> ChaosAggregate {
        let series: Vec<_> = self.records.iter().map(|r| r.samples.clone()).collect();
        let mut agg = match aggregate(self.n_particles, &series) {
            Ok(a) => a,
            Err(_) => ChaosAggregate {
                n_particles: self.n_particles,
                rows: times
                    .iter()
                    .map(|&t| AggregateRow {
                        t,
                        p_mean: f64::NAN,
                        k_mean: f64::NAN,
                        c_mean: f64::NAN,
                        total_mean: f64::NAN,
                        total_stderr: f64::NAN,
                        trials: 0,
                    })
                    .collect(),
                trials_requested: 0,
                failures: Vec::new(),
            },
        };
        agg.trials_requested = self.records.len() + self.failures.len();
        agg.failures = self.failures.clone();
        agg
    }
}

// ---------------------------------------------------------------------------
// Trial engine

fn phase_point(ens: &ParticleEnsemble, i: usize) -> Vec<f64> {
    let mut p = ens.position(i).to_vec();
    p.extend_from_slice(ens.velocity(i));
    if let Some(th) = ens.theta(i) {
        p.push(th);
    }
    p
}

struct Unit {
    trial: usize,
    n: usize,
    discrete: ParticleEnsemble,
    tracked: ParticleEnsemble,
    samples: Vec<ChaosMetricsSample>,
    discrete_marginal: Vec<Vec<f64>>,
    tracked_marginal: Vec<Vec<f64>>,
    failure: Option<(f64, String)>,
}

impl Unit {
    fn record(&mut self) {
        self.samples.push(ChaosMetricsSample::between(&self.discrete, &self.tracked));
        self.discrete_marginal.push(phase_point(&self.discrete, 0));
        self.tracked_marginal.push(phase_point(&self.tracked, 0));
    }

    fn step(&mut self, ref_step: &ReferenceStep, kernel: &KernelSpec, force: Option<&ForceParams>, h: f64, target: f64) {
        if self.failure.is_some() {
            return;
        }
        let res = rk4_step(&self.discrete, |s| model_rhs(s, kernel, force), h)
            .and_then(|d| ref_step.track(&self.tracked, kernel, force).map(|t| (d, t)));
        match res {
            Ok((mut d, mut t)) => {
                d.time = target;
                t.time = target;
                self.discrete = d;
                self.tracked = t;
            }
            Err(e) => self.failure = Some((blowup_time(&e, self.discrete.time), e.to_string())),
        }
    }
}

fn blowup_time(e: &Error, fallback: f64) -> f64 {
    match e {
        Error::NumericalBlowup { time, .. } => *time,
        _ => fallback,
    }
}

/// Advances `units` (all against the same `reference`) through `times`.
/// Errors from the reference abort every unit still alive.
fn evolve_group(
    mut reference: ParticleEnsemble,
    units: &mut [Unit],
    kernel: &KernelSpec,
    force: Option<&ForceParams>,
    dt: f64,
    times: &[f64],
) {
    units.par_iter_mut().for_each(Unit::record);
    for w in times.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        let steps = step_count(tb - ta, dt);
        let h = (tb - ta) / steps as f64;
        for s in 1..=steps {
            let target = if s == steps { tb } else { ta + s as f64 * h };
            let step = match ReferenceStep::compute(&reference, kernel, force, target - reference.time) {
                Ok(st) => st,
                Err(e) => {
                    let time = blowup_time(&e, reference.time);
                    for u in units.iter_mut().filter(|u| u.failure.is_none()) {
                        u.failure = Some((time, format!("reference ensemble: {e}")));
                    }
                    return;
                }
            };
            units.par_iter_mut().for_each(|u| u.step(&step, kernel, force, target - u.discrete.time, target));
            reference = match step.finish() {
                Ok(mut r) => {
                    r.time = target;
                    r
                }
                Err(e) => {
                    for u in units.iter_mut().filter(|u| u.failure.is_none()) {
                        u.failure = Some((target, format!("reference ensemble: {e}")));
                    }
                    return;
                }
            };
        }
        units.par_iter_mut().filter(|u| u.failure.is_none()).for_each(Unit::record);
    }
}

/// A coupled trial from explicit initial data: the discrete flow and the
/// tracked characteristics both start at `sample`, the characteristics are
/// driven by `reference` evolved under its own dynamics.
pub fn run_trial_from(
    sample: &ParticleEnsemble,
    reference: &ParticleEnsemble,
    kernel: &KernelSpec,
    force: Option<&ForceParams>,
    dt: f64,
    times: &[f64],
) -> Result<TrialRecord> {
    if times.first() != Some(&0.0) || times.windows(2).any(|w| !(w[1] > w[0])) {
        return domain("observation times must start at 0 and increase strictly");
    }
    if !(dt > 0.0) {
        return domain(format!("dt must be positive, got {dt}"));
    }
    if sample.dim() != reference.dim() || sample.is_forced() != reference.is_forced() {
        return contract("sample and reference must share dimension and model kind");
    }
    if force.is_some() != sample.is_forced() {
        return contract("forced model requires thetas and forceless model forbids them");
    }
    let mut units = [new_unit(0, sample.clone())];
    let mut reference = reference.clone();
    reference.time = 0.0;
    evolve_group(reference, &mut units, kernel, force, dt, times);
    let [u] = units;
    match u.failure {
        Some((time, detail)) => Err(Error::NumericalBlowup { time, detail }),
        None => Ok(TrialRecord {
            trial: u.trial,
            n_particles: u.n,
            samples: u.samples,
            discrete_marginal: u.discrete_marginal,
            tracked_marginal: u.tracked_marginal,
        }),
    }
}

fn new_unit(trial: usize, mut initial: ParticleEnsemble) -> Unit {
    initial.time = 0.0;
    Unit {
        trial,
        n: initial.count(),
        discrete: initial.clone(),
        tracked: initial,
        samples: Vec::new(),
        discrete_marginal: Vec::new(),
        tracked_marginal: Vec::new(),
        failure: None,
    }
}

/// Runs trials `trials` of `cfg` for every particle count in `n_values`.
/// The sample for `N` is the first `N` points of the sample for `max(n_values)`,
/// so each `N` sees exactly what a single-`N` run would.
pub fn run_trials(cfg: &CouplingConfig, n_values: &[usize], trials: &[usize]) -> Result<Vec<ChaosRun>> {
    cfg.validate()?;
    let Some(&n_max) = n_values.iter().max() else {
        return domain("n_values is empty");
    };
    if n_values.iter().any(|&n| n == 0 || n > cfg.n_reference) {
        return domain(format!("every N must lie in 1..={}", cfg.n_reference));
    }
    let times = cfg.observation_times()?;
    let force = cfg.force.as_ref();

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &k in trials {
        groups.entry(cfg.reference_stream(k)).or_default().push(k);
    }
    let mut results: BTreeMap<(usize, usize), std::result::Result<TrialRecord, TrialFailure>> = BTreeMap::new();
    for (_, members) in groups {
        let reference = cfg.init.sample(cfg.n_reference, cfg.reference_seed(members[0]))?;
        let mut units = Vec::with_capacity(members.len() * n_values.len());
        for &k in &members {
            let base = cfg.init.sample(n_max, cfg.trial_seed(k))?;
            for &n in n_values {
                units.push(new_unit(k, base.prefix(n)?));
            }
        }
        evolve_group(reference, &mut units, &cfg.kernel, force, cfg.integrator.dt, &times);
        for u in units {
            let key = (u.n, u.trial);
            let value = match u.failure {
                Some((time, detail)) => Err(TrialFailure {
                    trial: u.trial,
                    trial_seed: cfg.trial_seed(u.trial),
                    reference_seed: cfg.reference_seed(u.trial),
                    time,
                    detail,
                }),
                None => Ok(TrialRecord {
                    trial: u.trial,
                    n_particles: u.n,
                    samples: u.samples,
                    discrete_marginal: u.discrete_marginal,
                    tracked_marginal: u.tracked_marginal,
                }),
            };
            results.insert(key, value);
        }
    }
    Ok(n_values
        .iter()
        .map(|&n| {
            let mut run = ChaosRun { n_particles: n, records: Vec::new(), failures: Vec::new() };
            let mut ks: Vec<usize> = trials.to_vec();
            ks.sort_unstable();
            ks.dedup();
            for k in ks {
                match results.get(&(n, k)).cloned() {
                    Some(Ok(r)) => run.records.push(r),
                    Some(Err(f)) => run.failures.push(f),
                    None => {}
                }
            }
            run
        })
        .collect())
}

/// One trial of `cfg`, energies at every observation time.
pub fn run_coupled_trial(cfg: &CouplingConfig, trial_index: usize) -> Result<Vec<ChaosMetricsSample>> {
    let mut runs = run_trials(cfg, &[cfg.n_particles], &[trial_index])?;
    let run = runs.pop().expect("one run per N");
    match (run.records.into_iter().next(), run.failures.into_iter().next()) {
        (Some(r), _) => Ok(r.samples),
        (None, Some(f)) => Err(Error::NumericalBlowup {
            time: f.time,
            detail: format!("trial {} (seed {}): {}", f.trial, f.trial_seed, f.detail),
        }),
        (None, None) => unreachable!("trial produced neither record nor failure"),
    }
}

/// All `cfg.trials` trials for `n_particles`, as a raw run.
pub fn run_chaos(cfg: &CouplingConfig) -> Result<ChaosRun> {
    let trials: Vec<usize> = (0..cfg.trials).collect();
    Ok(run_trials(cfg, &[cfg.n_particles], &trials)?.pop().expect("one run per N"))
}

pub fn estimate_chaos_energies(cfg: &CouplingConfig) -> Result<ChaosAggregate> {
    let run = run_chaos(cfg)?;
    Ok(run.aggregate(&cfg.observation_times()?))
}

/// [`estimate_chaos_energies`] for several `N` sharing trial samples and
/// reference evolutions. `cfg.n_particles` is ignored.
pub fn estimate_chaos_energies_multi(cfg: &CouplingConfig, n_values: &[usize]) -> Result<Vec<ChaosAggregate>> {
    let trials: Vec<usize> = (0..cfg.trials).collect();
    let times = cfg.observation_times()?;
    let mut probe = cfg.clone();
    probe.n_particles = n_values.iter().copied().max().unwrap_or(1);
    Ok(run_trials(&probe, n_values, &trials)?.iter().map(|r| r.aggregate(&times)).collect())
}

// ---------------------------------------------------------------------------
// Bounds and functionals

fn check_k(agg: &ChaosAggregate, k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return domain(format!("marginal order k = {k} must lie in 1..={n}"));
    }
    if agg.n_particles != n {
        return contract(format!(
            "aggregate was computed with N = {}, not N = {n}",
            agg.n_particles
        ));
    }
    Ok(())
}

/// `sqrt((k/N) · mean_total(t))` per observation time.
pub fn marginal_w2_bound(agg: &ChaosAggregate, k: usize, n: usize) -> Result<Vec<f64>> {
    check_k(agg, k, n)?;
    let ratio = k as f64 / n as f64;
    Ok(agg.rows.iter().map(|r| (ratio * r.total_mean).sqrt()).collect())
}

/// Delta-method standard error of [`marginal_w2_bound`]:
/// `sqrt(k/N) · stderr(total) / (2 sqrt(mean_total))`.
pub fn marginal_w2_stderr(agg: &ChaosAggregate, k: usize, n: usize) -> Result<Vec<f64>> {
    check_k(agg, k, n)?;
    let ratio = k as f64 / n as f64;
    Ok(agg
        .rows
        .iter()
        .map(|r| {
            if r.total_mean > 0.0 {
                ratio.sqrt() * r.total_stderr / (2.0 * r.total_mean.sqrt())
            } else {
                0.0
            }
        })
        .collect())
}

/// Phase-space observable `φ(x, v, θ)`.
pub type PhaseObservable<'a> = &'a (dyn Fn(&[f64], &[f64], Option<f64>) -> f64 + Sync);

fn observable_mean(ens: &ParticleEnsemble, f: PhaseObservable<'_>) -> f64 {
    let n = ens.count();
    (0..n).map(|i| f(ens.position(i), ens.velocity(i), ens.theta(i))).sum::<f64>() / n as f64
}

/// Monte Carlo estimate of `E | (1/N) Σ_j φ(z_j(t)) − ⟨f_t, φ⟩ |²` over
/// `cfg.trials` trials, with `⟨f_t, φ⟩` the reference-ensemble average.
pub fn sznitman_functional(cfg: &CouplingConfig, test_fn: PhaseObservable<'_>, t: f64) -> Result<f64> {
    cfg.validate()?;
    if !(t >= 0.0 && t.is_finite()) {
        return domain(format!("t must be finite and non-negative, got {t}"));
    }
    let force = cfg.force.as_ref();
    let advance = |mut ens: ParticleEnsemble| -> Result<ParticleEnsemble> {
        if t == 0.0 {
            return Ok(ens);
        }
        let steps = step_count(t, cfg.integrator.dt);
        let h = t / steps as f64;
        for s in 1..=steps {
            let target = if s == steps { t } else { s as f64 * h };
            let dt = target - ens.time;
            ens = rk4_step(&ens, |e| model_rhs(e, &cfg.kernel, force), dt)?;
            ens.time = target;
        }
        Ok(ens)
    };
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for k in 0..cfg.trials {
        groups.entry(cfg.reference_stream(k)).or_default().push(k);
    }
    let mut sq = vec![0.0; cfg.trials];
    for (_, members) in groups {
        let reference = advance(cfg.init.sample(cfg.n_reference, cfg.reference_seed(members[0]))?)?;
        let ref_mean = observable_mean(&reference, test_fn);
        let vals = members
            .par_iter()
            .map(|&k| {
                let ens = advance(cfg.init.sample(cfg.n_particles, cfg.trial_seed(k))?)?;
                let d = observable_mean(&ens, test_fn) - ref_mean;
                Ok((k, d * d))
            })
            .collect::<Result<Vec<_>>>()?;
        for (k, v) in vals {
            sq[k] = v;
        }
    }
    Ok(sq.iter().sum::<f64>() / cfg.trials as f64)
}

fn alignment_at(reference: &ParticleEnsemble, idx: &[usize], x: &[f64], v: &[f64], kernel: &KernelSpec) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; v.len()];
    for &j in idx {
        let xj = reference.position(j);
        let r = xj.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let w = kernel.eval(r)?;
        for (a, (vj, vi)) in acc.iter_mut().zip(reference.velocity(j).iter().zip(v)) {
            *a += w * (vj - vi);
        }
    }
    let inv = 1.0 / idx.len() as f64;
    Ok(acc.into_iter().map(|a| a * inv).collect())
}

fn check_probe(reference: &ParticleEnsemble, x: &[f64], v: &[f64]) -> Result<()> {
    if x.len() != reference.dim() || v.len() != reference.dim() {
        return contract("probe point dimension differs from the reference");
    }
    Ok(())
}

/// Variance of the `N`-subsample alignment force at the probe `(x, v)`
/// against the full-reference force, estimated from `resamples` random
/// subsets drawn without replacement.
pub fn force_fluctuation(
    reference: &ParticleEnsemble,
    probe_x: &[f64],
    probe_v: &[f64],
    kernel: &KernelSpec,
    subsample_size: usize,
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    check_probe(reference, probe_x, probe_v)?;
    let m = reference.count();
    if resamples < 2 {
        return domain(format!("resamples must be at least 2, got {resamples}"));
    }
    if subsample_size == 0 || subsample_size > m {
        return domain(format!("subsample_size must lie in 1..={m}, got {subsample_size}"));
    }
    let all: Vec<usize> = (0..m).collect();
    let full = alignment_at(reference, &all, probe_x, probe_v, kernel)?;
    let mut total = 0.0;
    for r in 0..resamples {
        let mut rng = rng::stream(seed, stream::RESAMPLE, r as u64);
        let mut idx = index::sample(&mut rng, m, subsample_size).into_vec();
        idx.sort_unstable();
        let sub = alignment_at(reference, &idx, probe_x, probe_v, kernel)?;
        total += sub.iter().zip(&full).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / resamples as f64)
}

/// `(4/N) · max_j |φ(|x − x_j|)(v_j − v)|²`, the variance bound for
/// [`force_fluctuation`].
pub fn force_fluctuation_bound(
    reference: &ParticleEnsemble,
    probe_x: &[f64],
    probe_v: &[f64],
    kernel: &KernelSpec,
    subsample_size: usize,
) -> Result<f64> {
    check_probe(reference, probe_x, probe_v)?;
    if subsample_size == 0 {
        return domain("subsample_size must be positive");
    }
    let mut sup: f64 = 0.0;
    for j in 0..reference.count() {
        let r = reference.position(j).iter().zip(probe_x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let w = kernel.eval(r)?;
        let sq = reference.velocity(j).iter().zip(probe_v).map(|(a, b)| (w * (a - b)).powi(2)).sum::<f64>();
        sup = sup.max(sq);
    }
    Ok(4.0 * sup / subsample_size as f64)
}
