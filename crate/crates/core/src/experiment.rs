//! Pipelines behind the command-line subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, ExperimentConfig, Model, OdiSettings, SystemConfig};
use crate::coupling::{estimate_chaos_energies, marginal_w2_bound, marginal_w2_stderr, ChaosAggregate};
use crate::diagnostics::{
    diagnostics_series, envelope_check, fit_decay_rate, observed_diameter, DiagnosticsOptions, EnvelopeFit,
    EnvelopeForm, EnvelopeParams, FlockDiagnostics,
};
use crate::dynamics::integrate;
use crate::ensemble::{ForceParams, ParticleEnsemble};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::odi::{damped_excess, fit_odi_bounds, integrate_odi, OdiBounds, OdiSystem};
use crate::output::{fmt_f64, read_points, write_csv, write_json, write_trajectory, Population, Provenance};
use crate::rng::{self, domain as stream};
use crate::transport::{w2_bruteforce, w2_exact, EmpiricalMeasure, MAX_BRUTEFORCE};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILURE: i32 = 1;
pub const EXIT_CONFIG_ERROR: i32 = 2;
pub const EXIT_NUMERICAL_FAILURE: i32 = 3;

/// Noise floor below which decaying observables are not fitted.
pub const FIT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.to_string(), passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub checks: Vec<Check>,
    pub files: Vec<PathBuf>,
    /// Lines meant for standard output.
    pub messages: Vec<String>,
    /// Fitted envelope constants, written to `summary.json`.
    pub fitted: Value,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            EXIT_PASS
        } else {
            EXIT_CHECK_FAILURE
        }
    }
}

/// Exit status for a finished or failed run.
pub fn exit_code(res: &Result<RunOutcome>) -> i32 {
    match res {
        Ok(o) => o.exit_code(),
        Err(Error::Config(_)) | Err(Error::Domain(_)) | Err(Error::Contract(_)) => EXIT_CONFIG_ERROR,
        Err(Error::NumericalBlowup { .. }) => EXIT_NUMERICAL_FAILURE,
        Err(Error::Io(_)) | Err(Error::Csv(_)) => EXIT_CONFIG_ERROR,
    }
}

/// Runs the pipeline named by `cfg.command`, writing into `out_dir`.
pub fn run_experiment_in(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    std::fs::create_dir_all(out_dir)?;
    let prov = Provenance::of(cfg);
    let echo = out_dir.join("config_resolved.json");
    write_json(&echo, &prov, cfg)?;
    let mut outcome = match cfg.command {
        Command::Simulate => simulate(cfg, out_dir, &prov)?,
        Command::Flocking => flocking(cfg, out_dir, &prov)?,
        Command::Chaos => chaos(cfg, out_dir, &prov)?,
        Command::Odi => odi(cfg.odi.as_ref().expect("validated odi section"), cfg.master_seed, out_dir, &prov)?,
        Command::Oracle => oracle(cfg, out_dir, &prov)?,
    };
    let summary = out_dir.join("summary.json");
    write_json(
        &summary,
        &prov,
        &json!({
            "command": cfg.command,
            "passed": outcome.passed(),
            "checks": outcome.checks,
            "results": outcome.messages,
            "fitted": outcome.fitted,
        }),
    )?;
    outcome.files.insert(0, echo);
    outcome.files.push(summary);
    Ok(outcome)
}

/// [`run_experiment_in`] with `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    run_experiment_in(cfg, &cfg.output_dir)
}

fn system(cfg: &ExperimentConfig) -> &SystemConfig {
    cfg.system.as_ref().expect("validated system section")
}

fn initial_state(cfg: &ExperimentConfig) -> Result<ParticleEnsemble> {
    let s = system(cfg);
    s.init.sample(s.n_particles, rng::child_seed(cfg.master_seed, stream::ENSEMBLE, 0))
}

fn trajectory(cfg: &ExperimentConfig) -> Result<Vec<ParticleEnsemble>> {
    let s = system(cfg);
    integrate(&initial_state(cfg)?, &s.kernel, s.force.as_ref(), &s.integrator, &mut [])
}

fn simulate(cfg: &ExperimentConfig, out: &Path, prov: &Provenance) -> Result<RunOutcome> {
    let traj = trajectory(cfg)?;
    let first = &traj[0];
    let path = out.join("trajectory.csv");
    write_trajectory(&path, prov, &[(Population::Discrete, &traj)])?;

    let last = traj.last().expect("non-empty trajectory");
    let mut checks = vec![Check::new("finite", traj.iter().all(|s| s.all_finite()), "all states finite")];
    if cfg.model == Model::Forceless {
        let (m0, m1) = (first.mean_velocity(), last.mean_velocity());
        let drift = m0.iter().zip(&m1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        checks.push(Check::new("momentum_conserved", drift <= 1e-9, format!("max |Δ mean v| = {drift:e}")));
    }
    Ok(RunOutcome { checks, files: vec![path], messages: vec![format!("snapshots: {}", traj.len())], fitted: json!({}) })
}

/// `1 − cos g` without cancellation.
pub fn one_minus_cos(g: f64) -> f64 {
    let s = (0.5 * g).sin();
    2.0 * s * s
}

/// Leading samples of `series` with `t ≥ t_min`, up to the first value
/// at or below `floor`.
pub fn above_floor(series: &[(f64, f64)], t_min: f64, floor: f64) -> Vec<(f64, f64)> {
    series.iter().copied().filter(|(t, _)| *t >= t_min).take_while(|(_, v)| *v > floor).collect()
}

/// Checks on a flocking diagnostics series and the decay fits behind them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlockingReport {
    pub checks: Vec<Check>,
    #[serde(rename = "D_obs")]
    pub d_obs: f64,
    /// `φ(D_obs)`.
    pub rate: f64,
    pub fits: BTreeMap<String, EnvelopeFit>,
}

/// Flocking checks on a diagnostics series of one trajectory.
pub fn flocking_checks(
    series: &[FlockDiagnostics],
    last: &ParticleEnsemble,
    kernel: &KernelSpec,
    force: Option<&ForceParams>,
) -> Result<FlockingReport> {
    let d_obs = observed_diameter(series);
    let rate = kernel.eval(d_obs)?;
    let mut checks = Vec::new();
    let mut fits = BTreeMap::new();
    let a0 = series[0].a;
    let worst = series.iter().map(|d| d.a - (a0 * (-d.t * rate).exp() + 1e-6)).fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::new(
        "velocity_envelope",
        worst <= 0.0,
        format!("max A(t) − (A(0) e^(−t φ(D_obs)) + 1e-6) = {worst:e}, φ(D_obs) = {rate}"),
    ));
    if force.is_none() || kernel.heavy_tail() {
        let a: Vec<(f64, f64)> = series.iter().map(|d| (d.t, d.a)).collect();
        match fit_decay_rate(&above_floor(&a, 0.0, FIT_FLOOR), 0.0) {
            Ok(fit) => {
                let dh = fit.delta_hat.unwrap_or(f64::NAN);
                checks.push(Check::new(
                    "velocity_decay_rate",
                    !kernel.heavy_tail() || dh >= 0.9 * rate,
                    format!("delta_hat = {dh}, 0.9 φ(D_obs) = {}", 0.9 * rate),
                ));
                fits.insert("A".to_string(), fit);
            }
            Err(e) => checks.push(Check::new("velocity_decay_rate", false, e.to_string())),
        }
    }
    let excess = series
        .iter()
        .filter(|d| !d.angle_undefined)
        .map(|d| d.gamma - d.gamma2d)
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::new("gamma2d_dominates", excess <= 1e-10, format!("max γ − γ²ᴰ = {excess:e}")));

    if let Some(f) = force {
        let q0 = series[0].q;
        let qrate = f.kappa * rate;
        let worst = series.iter().map(|d| d.q - (q0 * (-d.t * qrate).exp() + 1e-6)).fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check::new(
            "theta_envelope",
            worst <= 0.0,
            format!("max Q(t) − (Q(0) e^(−t κ φ(D_obs)) + 1e-6) = {worst:e}"),
        ));
        let mono = series.windows(2).map(|w| (w[1].theta_plus - w[0].theta_plus).max(w[0].theta_minus - w[1].theta_minus)).fold(
            f64::NEG_INFINITY,
            f64::max,
        );
        checks.push(Check::new("theta_extremes_monotone", mono <= 1e-9, format!("worst step violation {mono:e}")));

        let t_end = series.last().map(|d| d.t).unwrap_or(0.0);
        let mut fit_check = |name: &str, pts: Vec<(f64, f64)>| {
            match fit_decay_rate(&above_floor(&pts, 0.1 * t_end, FIT_FLOOR), 0.1 * t_end) {
                Ok(fit) => {
                    let dh = fit.delta_hat.unwrap_or(f64::NAN);
                    checks.push(Check::new(name, dh > 0.0, format!("delta_hat = {dh}")));
                    fits.insert(name.to_string(), fit);
                }
                Err(e) => checks.push(Check::new(name, false, e.to_string())),
            }
        };
        fit_check("speed_ratio_decay", series.iter().map(|d| (d.t, d.rratio - 1.0)).collect());
        fit_check("projected_angle_decay", series.iter().map(|d| (d.t, one_minus_cos(d.gamma2d))).collect());

        let th = last.thetas.as_ref().expect("forced state carries thetas");
        let n = last.count();
        let gap = (0..n)
            .map(|i| {
                let s: f64 = last.velocity(i).iter().map(|x| x * x).sum::<f64>().sqrt();
                (s.powf(f.p) - th[i]).abs()
            })
            .sum::<f64>()
            / n as f64;
        let vbar = last.mean_velocity();
        let mean_gap = (vbar.iter().map(|x| x * x).sum::<f64>().sqrt().powf(f.p) - last.mean_theta().unwrap()).abs();
        checks.push(Check::new(
            "terminal_speed_relation",
            gap <= 1e-3,
            format!("mean_i ||v_i|^p − θ_i| = {gap:e}; ||v̄|^p − θ̄| = {mean_gap:e}"),
        ));
    }
    Ok(FlockingReport { checks, d_obs, rate, fits })
}

fn diagnostics_csv(path: &Path, prov: &Provenance, series: &[FlockDiagnostics]) -> Result<()> {
    let header: Vec<String> = ["t", "D", "A", "Q", "theta_plus", "theta_minus", "v_plus", "v_minus", "gamma", "gamma2d", "Rratio"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = series.iter().map(|d| {
        [d.t, d.d, d.a, d.q, d.theta_plus, d.theta_minus, d.v_plus, d.v_minus, d.gamma, d.gamma2d, d.rratio]
            .iter()
            .map(|x| fmt_f64(*x))
            .collect()
    });
    write_csv(path, prov, &header, rows)
}

fn flocking(cfg: &ExperimentConfig, out: &Path, prov: &Provenance) -> Result<RunOutcome> {
    let s = system(cfg);
    let fl = cfg.flocking.as_ref().expect("validated flocking section");
    let traj = trajectory(cfg)?;
    let opts = DiagnosticsOptions { extra_planes: fl.extra_planes, plane_seed: fl.plane_seed };
    let series = diagnostics_series(&traj, &fl.axis, opts)?;
    let path = out.join("diagnostics.csv");
    diagnostics_csv(&path, prov, &series)?;
    let report = flocking_checks(&series, traj.last().unwrap(), &s.kernel, s.force.as_ref())?;
    let last = traj.last().unwrap();
    let msg = format!(
        "D_obs = {}, late mean velocity = {:?}, late mean theta = {:?}",
        observed_diameter(&series),
        last.mean_velocity(),
        last.mean_theta()
    );
    let fitted = json!({ "D_obs": report.d_obs, "phi_D_obs": report.rate, "decay": report.fits });
    Ok(RunOutcome { checks: report.checks, files: vec![path], messages: vec![msg], fitted })
}

fn aggregate_csv(path: &Path, prov: &Provenance, agg: &ChaosAggregate) -> Result<()> {
    let header: Vec<String> =
        ["t", "P_mean", "K_mean", "C_mean", "total_mean", "total_stderr", "trials"].iter().map(|s| s.to_string()).collect();
    let rows = agg.rows.iter().map(|r| {
        let mut v: Vec<String> =
            [r.t, r.p_mean, r.k_mean, r.c_mean, r.total_mean, r.total_stderr].iter().map(|x| fmt_f64(*x)).collect();
        v.push(r.trials.to_string());
        v
    });
    write_csv(path, prov, &header, rows)
}

/// Writes `chaos_aggregate.csv` for `agg`; exposed for reproducibility tests.
pub fn write_chaos_aggregate(dir: &Path, prov: &Provenance, agg: &ChaosAggregate) -> Result<PathBuf> {
    let path = dir.join("chaos_aggregate.csv");
    aggregate_csv(&path, prov, agg)?;
    Ok(path)
}

fn chaos(cfg: &ExperimentConfig, out: &Path, prov: &Provenance) -> Result<RunOutcome> {
    let cc = cfg.coupling_config().expect("validated coupling section");
    let k = cfg.coupling.as_ref().unwrap().k;
    let agg = estimate_chaos_energies(&cc)?;
    let csv_path = write_chaos_aggregate(out, prov, &agg)?;
    let json_path = out.join("chaos_aggregate.json");
    let trial_seeds: Vec<u64> = (0..cc.trials).map(|t| cc.trial_seed(t)).collect();
    let reference_seeds: Vec<u64> = (0..cc.trials).map(|t| cc.reference_seed(t)).collect();
    write_json(
        &json_path,
        prov,
        &json!({
            "config": cfg,
            "trial_seeds": trial_seeds,
            "reference_seeds": reference_seeds,
            "aggregate": agg,
        }),
    )?;

    let n = cc.n_particles;
    let bound = marginal_w2_bound(&agg, k, n)?;
    let se = marginal_w2_stderr(&agg, k, n)?;
    let bound_path = out.join("chaos_bound.csv");
    write_csv(
        &bound_path,
        prov,
        &["t".into(), "bound".into(), "bound_stderr".into()],
        agg.rows.iter().zip(bound.iter().zip(&se)).map(|(r, (b, s))| vec![fmt_f64(r.t), fmt_f64(*b), fmt_f64(*s)]),
    )?;

    if let Some(f) = agg.failures.first() {
        return Err(Error::NumericalBlowup {
            time: f.time,
            detail: format!(
                "{} of {} trials aborted; first: trial {} (trial seed {}, reference seed {}): {}",
                agg.failures.len(),
                agg.trials_requested,
                f.trial,
                f.trial_seed,
                f.reference_seed,
                f.detail
            ),
        });
    }
    let form = if cfg.model == Model::Forced { EnvelopeForm::QuadMin } else { EnvelopeForm::LinMin };
    let series: Vec<(f64, f64)> = agg.rows.iter().map(|r| r.t).zip(bound.iter().copied()).collect();
    let fit = envelope_check(&series, form, &EnvelopeParams { n: Some(n), ..Default::default() })?;
    let t0 = &agg.rows[0];
    let checks = vec![
        Check::new("t0_exactness", t0.t == 0.0 && t0.total_mean == 0.0, format!("total(0) = {}", t0.total_mean)),
        Check::new("envelope_finite", fit.c_hat.is_finite() && !fit.zero_time_violation, format!("{form:?} C_hat = {}", fit.c_hat)),
    ];
    let msg = format!("{:?} C_hat = {} (k = {k}, N = {n}, trials = {})", form, fit.c_hat, cc.trials);
    let key = if form == EnvelopeForm::QuadMin { "quad_min" } else { "lin_min" };
    Ok(RunOutcome { checks, files: vec![csv_path, json_path, bound_path], messages: vec![msg], fitted: json!({ key: fit }) })
}

/// Fitted constants for one `(c, δ)` and system at `t_end` and `2 t_end`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdiStudy {
    pub system: OdiSystem,
    pub c: f64,
    pub delta: f64,
    pub bounds: OdiBounds,
    pub bounds_doubled: OdiBounds,
    /// Largest ratio between matching constants at the two horizons.
    pub stability_ratio: f64,
    pub damped_excess: f64,
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else if a.min(b) <= 0.0 {
        f64::INFINITY
    } else {
        a.max(b) / a.min(b)
    }
}

pub fn odi_study(sys: OdiSystem, c: f64, delta: f64, t_end: f64, dt: f64, seed: u64) -> Result<(OdiStudy, Vec<crate::odi::OdiState>)> {
    let long = integrate_odi(sys, c, delta, 2.0 * t_end, dt)?;
    let cut = long.iter().position(|s| s.t > t_end * (1.0 + 1e-12)).unwrap_or(long.len());
    let bounds = fit_odi_bounds(sys, &long[..cut]);
    let bounds_doubled = fit_odi_bounds(sys, &long);
    let stability_ratio = ratio(bounds.c_x, bounds_doubled.c_x)
        .max(ratio(bounds.c_y, bounds_doubled.c_y))
        .max(ratio(bounds.c_z.unwrap_or(0.0), bounds_doubled.c_z.unwrap_or(0.0)));
    let damped_excess = damped_excess(sys, c, delta, t_end, dt, seed)?;
    let mut traj = long;
    traj.truncate(cut);
    Ok((OdiStudy { system: sys, c, delta, bounds, bounds_doubled, stability_ratio, damped_excess }, traj))
}

fn odi(s: &OdiSettings, seed: u64, out: &Path, prov: &Provenance) -> Result<RunOutcome> {
    let mut studies = Vec::new();
    let mut files = Vec::new();
    let mut idx = 0u64;
    for sys in [OdiSystem::Forceless, OdiSystem::Forced] {
        for &c in &s.c {
            for &delta in &s.delta {
                let (study, traj) = odi_study(sys, c, delta, s.t_end, s.dt, rng::child_seed(seed, stream::ENSEMBLE, idx))?;
                idx += 1;
                let name = format!("odi_{}_c{}_delta{}.csv", if sys == OdiSystem::Forced { "forced" } else { "forceless" }, c, delta);
                let path = out.join(name);
                let rows = traj.iter().enumerate().filter(|(i, _)| i % s.output_stride == 0 || *i + 1 == traj.len()).map(|(_, st)| {
                    vec![fmt_f64(st.t), fmt_f64(st.x), fmt_f64(st.y), st.z.map(fmt_f64).unwrap_or_default()]
                });
                write_csv(&path, prov, &["t".into(), "x".into(), "y".into(), "z".into()], rows)?;
                files.push(path);
                studies.push(study);
            }
        }
    }
    let consts = out.join("odi_constants.json");
    write_json(&consts, prov, &json!({ "t_end": s.t_end, "dt": s.dt, "studies": studies }))?;
    files.push(consts);
    let finite = studies.iter().all(|x| x.bounds.is_finite() && x.bounds_doubled.is_finite());
    let worst = studies.iter().map(|x| x.stability_ratio).fold(1.0, f64::max);
    let excess = studies.iter().map(|x| x.damped_excess).fold(f64::NEG_INFINITY, f64::max);
    let checks = vec![
        Check::new("constants_finite", finite, "all fitted envelope constants finite"),
        Check::new("constants_stable", worst < 2.0, format!("worst ratio under horizon doubling = {worst}")),
        Check::new("comparison_principle", excess <= 1e-8, format!("max damped − equality = {excess:e}")),
    ];
    let fitted = json!({ "studies": studies });
    Ok(RunOutcome { checks, files, messages: vec![format!("{} envelope studies", studies.len())], fitted })
}

fn oracle(cfg: &ExperimentConfig, out: &Path, prov: &Provenance) -> Result<RunOutcome> {
    let o = cfg.oracle.as_ref().expect("validated oracle section");
    let mu = EmpiricalMeasure::from_rows(&read_points(&o.mu)?)?;
    let nu = EmpiricalMeasure::from_rows(&read_points(&o.nu)?)?;
    let w2 = w2_exact(&mu, &nu)?;
    let mut checks = vec![Check::new("finite", w2.is_finite(), format!("W2 = {w2}"))];
    let brute = if mu.len() <= MAX_BRUTEFORCE {
        let b = w2_bruteforce(&mu, &nu)?;
        checks.push(Check::new("matches_bruteforce", (b - w2).abs() <= 1e-10, format!("brute force W2 = {b}")));
        Some(b)
    } else {
        None
    };
    let path = out.join("oracle.json");
    write_json(&path, prov, &json!({ "m": mu.len(), "dim": mu.dim(), "w2_exact": w2, "w2_bruteforce": brute }))?;
    Ok(RunOutcome { checks, files: vec![path], messages: vec![format!("W2 = {}", fmt_f64(w2))], fitted: json!({ "w2_exact": w2 }) })
}
