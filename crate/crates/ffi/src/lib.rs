//! C ABI for `flockchaos`.
//!
//! Objects cross the boundary as opaque handles created by `fc_*_new` style
//! constructors and released with the matching `fc_*_free`. Every fallible
//! call returns an [`FcStatus`]; on failure a message is kept per thread and
//! can be fetched with [`fc_last_error_message`]. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use flockchaos::config::parse_config;
use flockchaos::coupling::{estimate_chaos_energies, marginal_w2_bound, ChaosAggregate};
use flockchaos::dynamics::{integrate, IntegratorConfig};
use flockchaos::experiment::run_experiment_in;
use flockchaos::sampling::{AxisBox, InitialDistribution, VelocityRegion};
use flockchaos::transport::{w2_bruteforce, w2_exact, EmpiricalMeasure};
use flockchaos::{Error, ForceParams, KernelSpec, ParticleEnsemble};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcStatus {
    Ok = 0,
    Domain = 1,
    Config = 2,
    Contract = 3,
    Numerical = 4,
    Io = 5,
    NullPointer = 6,
    Panic = 7,
}

/// Communication kernel handle.
pub struct FcKernel(KernelSpec);

/// Particle ensemble handle.
pub struct FcEnsemble(ParticleEnsemble);

/// Monte Carlo chaos aggregate handle.
pub struct FcAggregate(ChaosAggregate);

/// Self-propulsion parameters, passed by value.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FcForceParams {
    pub sigma: f64,
    pub p: f64,
    pub kappa: f64,
}

/// One row of a chaos aggregate.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FcAggregateRow {
    pub t: f64,
    pub p_mean: f64,
    pub k_mean: f64,
    pub c_mean: f64,
    pub total_mean: f64,
    pub total_stderr: f64,
    pub trials: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> FcStatus {
    match e {
        Error::Domain(_) => FcStatus::Domain,
        Error::Config(_) => FcStatus::Config,
        Error::Contract(_) => FcStatus::Contract,
        Error::NumericalBlowup { .. } => FcStatus::Numerical,
        Error::Io(_) | Error::Csv(_) => FcStatus::Io,
    }
}

struct Fail(FcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(FcStatus::NullPointer, format!("{what} is null"))
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> FcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            FcStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            FcStatus::Panic
        }
    }
}

unsafe fn read<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

fn publish<T>(slot: &mut *mut T, value: T) {
    *slot = Box::into_raw(Box::new(value));
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(FcStatus::Domain, format!("{what} is not valid UTF-8")))
}

/// Copies the calling thread's last error message (NUL-terminated, truncated
/// to `len − 1` bytes) into `buf` and returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn fc_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

// ---------------------------------------------------------------------------
// Kernels

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fc_kernel_power(lambda: f64, beta: f64, out_kernel: *mut *mut FcKernel) -> FcStatus {
    guard(|| {
        let slot = out(out_kernel, "out_kernel")?;
        let k = KernelSpec::power(lambda, beta);
        k.validate()?;
        publish(slot, FcKernel(k));
        Ok(())
    })
}

/// # Safety
/// `out_kernel` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fc_kernel_constant(lambda: f64, out_kernel: *mut *mut FcKernel) -> FcStatus {
    guard(|| {
        let slot = out(out_kernel, "out_kernel")?;
        let k = KernelSpec::constant(lambda);
        k.validate()?;
        publish(slot, FcKernel(k));
        Ok(())
    })
}

/// # Safety
/// `kernel` must be a live handle and `value` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fc_kernel_eval(kernel: *const FcKernel, r: f64, value: *mut f64) -> FcStatus {
    guard(|| {
        let k = handle(kernel, "kernel")?;
        *out(value, "value")? = k.0.eval(r)?;
        Ok(())
    })
}

/// # Safety
/// `kernel` must be a live handle and `heavy` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fc_kernel_heavy_tail(kernel: *const FcKernel, heavy: *mut bool) -> FcStatus {
    guard(|| {
        *out(heavy, "heavy")? = handle(kernel, "kernel")?.0.heavy_tail();
        Ok(())
    })
}

/// # Safety
/// `kernel` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_kernel_free(kernel: *mut FcKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

// ---------------------------------------------------------------------------
// Ensembles

/// Builds an ensemble from row-major `count × dim` positions and velocities;
/// `thetas` (length `count`) may be null for the forceless model.
///
/// # Safety
/// Arrays must be valid for the stated lengths; `out_ensemble` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fc_ensemble_new(
    dim: usize,
    count: usize,
    positions: *const f64,
    velocities: *const f64,
    thetas: *const f64,
    out_ensemble: *mut *mut FcEnsemble,
) -> FcStatus {
    guard(|| {
        let slot = out(out_ensemble, "out_ensemble")?;
        let n = dim.checked_mul(count).ok_or(Fail(FcStatus::Domain, "dim * count overflows".into()))?;
        let pos = read(positions, n, "positions")?.to_vec();
        let vel = read(velocities, n, "velocities")?.to_vec();
        let th = if thetas.is_null() { None } else { Some(read(thetas, count, "thetas")?.to_vec()) };
        if !pos.iter().chain(&vel).chain(th.iter().flatten()).all(|v| v.is_finite()) {
            return Err(Fail(FcStatus::Domain, "ensemble state contains non-finite values".into()));
        }
        publish(slot, FcEnsemble(ParticleEnsemble::new(dim, pos, vel, th, 0.0)?));
        Ok(())
    })
}

/// `count` i.i.d. particles uniform on the position box `[pos_lo, pos_hi]`
/// and velocity box `[vel_lo, vel_hi]` (each of length `dim`).
///
/// # Safety
/// Bounds arrays must hold `dim` values; `out_ensemble` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fc_ensemble_sample_box(
    dim: usize,
    count: usize,
    pos_lo: *const f64,
    pos_hi: *const f64,
    vel_lo: *const f64,
    vel_hi: *const f64,
    seed: u64,
    out_ensemble: *mut *mut FcEnsemble,
) -> FcStatus {
    guard(|| {
        let slot = out(out_ensemble, "out_ensemble")?;
        let dist = InitialDistribution {
            position_box: AxisBox::new(read(pos_lo, dim, "pos_lo")?.to_vec(), read(pos_hi, dim, "pos_hi")?.to_vec()),
            velocity: VelocityRegion::Box {
                lo: read(vel_lo, dim, "vel_lo")?.to_vec(),
                hi: read(vel_hi, dim, "vel_hi")?.to_vec(),
            },
            theta_range: None,
        };
        publish(slot, FcEnsemble(dist.sample(count, seed)?));
        Ok(())
    })
}

/// # Safety
/// `ensemble` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_ensemble_count(ensemble: *const FcEnsemble) -> usize {
    ensemble.as_ref().map_or(0, |e| e.0.count())
}

/// # Safety
/// `ensemble` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_ensemble_dim(ensemble: *const FcEnsemble) -> usize {
    ensemble.as_ref().map_or(0, |e| e.0.dim())
}

/// # Safety
/// `ensemble` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_ensemble_time(ensemble: *const FcEnsemble) -> f64 {
    ensemble.as_ref().map_or(f64::NAN, |e| e.0.time)
}

unsafe fn copy_field(src: &[f64], buf: *mut f64, len: usize) -> Result<(), Fail> {
    if len < src.len() {
        return Err(Fail(FcStatus::Domain, format!("buffer holds {len} values, {} needed", src.len())));
    }
    if buf.is_null() {
        return Err(null("buf"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Copies the `count × dim` positions into `buf` (capacity `len`).
///
/// # Safety
/// `ensemble` live; `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fc_ensemble_positions(ensemble: *const FcEnsemble, buf: *mut f64, len: usize) -> FcStatus {
    guard(|| copy_field(&handle(ensemble, "ensemble")?.0.positions, buf, len))
}

/// # Safety
/// `ensemble` live; `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fc_ensemble_velocities(ensemble: *const FcEnsemble, buf: *mut f64, len: usize) -> FcStatus {
    guard(|| copy_field(&handle(ensemble, "ensemble")?.0.velocities, buf, len))
}

/// # Safety
/// `ensemble` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_ensemble_free(ensemble: *mut FcEnsemble) {
    if !ensemble.is_null() {
        drop(Box::from_raw(ensemble));
    }
}

/// Integrates `ensemble` over a span `t_end` past its current time with RK4
/// steps of `dt` and returns the final state. `force` may be null (forceless
/// model).
///
/// # Safety
/// Handles live; `force` null or valid; `out_ensemble` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fc_integrate(
    ensemble: *const FcEnsemble,
    kernel: *const FcKernel,
    force: *const FcForceParams,
    dt: f64,
    t_end: f64,
    out_ensemble: *mut *mut FcEnsemble,
) -> FcStatus {
    guard(|| {
        let slot = out(out_ensemble, "out_ensemble")?;
        let e = handle(ensemble, "ensemble")?;
        let k = handle(kernel, "kernel")?;
        let f = force.as_ref().map(|f| ForceParams::new(f.sigma, f.p, f.kappa));
        let cfg = IntegratorConfig::new(dt, t_end, usize::MAX);
        let traj = integrate(&e.0, &k.0, f.as_ref(), &cfg, &mut [])?;
        publish(slot, FcEnsemble(traj.into_iter().last().expect("non-empty trajectory")));
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Transport

unsafe fn measures(m: usize, dim: usize, mu: *const f64, nu: *const f64) -> Result<(EmpiricalMeasure, EmpiricalMeasure), Fail> {
    let n = m.checked_mul(dim).ok_or(Fail(FcStatus::Domain, "m * dim overflows".into()))?;
    Ok((
        EmpiricalMeasure::new(dim, read(mu, n, "mu")?.to_vec())?,
        EmpiricalMeasure::new(dim, read(nu, n, "nu")?.to_vec())?,
    ))
}

/// Exact W2 between two uniform `m`-point measures in `R^dim` (row-major).
///
/// # Safety
/// `mu`, `nu` valid for `m·dim` reads; `w2` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fc_w2_exact(m: usize, dim: usize, mu: *const f64, nu: *const f64, w2: *mut f64) -> FcStatus {
    guard(|| {
        let (a, b) = measures(m, dim, mu, nu)?;
        *out(w2, "w2")? = w2_exact(&a, &b)?;
        Ok(())
    })
}

/// Brute-force W2 (`m ≤ 8`).
///
/// # Safety
/// As [`fc_w2_exact`].
#[no_mangle]
pub unsafe extern "C" fn fc_w2_bruteforce(m: usize, dim: usize, mu: *const f64, nu: *const f64, w2: *mut f64) -> FcStatus {
    guard(|| {
        let (a, b) = measures(m, dim, mu, nu)?;
        *out(w2, "w2")? = w2_bruteforce(&a, &b)?;
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Experiments

/// Runs the experiment described by the TOML document `config` and stores
/// the process exit status it implies (0 pass, 1 check failure, 2 config
/// error, 3 numerical failure) in `exit_code`. `output_dir` may be null to
/// use the directory named in the config.
///
/// # Safety
/// `config` and `output_dir` NUL-terminated (or null for `output_dir`);
/// `exit_code` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fc_run_config(config: *const c_char, output_dir: *const c_char, exit_code: *mut i32) -> FcStatus {
    guard(|| {
        let code = out(exit_code, "exit_code")?;
        let cfg = parse_config(text(config, "config")?).map_err(|e| Fail(FcStatus::Config, e.to_string()))?;
        let dir = if output_dir.is_null() { cfg.output_dir.clone() } else { PathBuf::from(text(output_dir, "output_dir")?) };
        let res = run_experiment_in(&cfg, &dir);
        *code = flockchaos::experiment::exit_code(&res);
        res.map(|_| ()).map_err(Fail::from)
    })
}

/// Runs the `chaos` experiment in `config` and returns its aggregate.
///
/// # Safety
/// `config` NUL-terminated; `out_aggregate` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fc_chaos_estimate(config: *const c_char, out_aggregate: *mut *mut FcAggregate) -> FcStatus {
    guard(|| {
        let slot = out(out_aggregate, "out_aggregate")?;
        let cfg = parse_config(text(config, "config")?).map_err(|e| Fail(FcStatus::Config, e.to_string()))?;
        let cc = cfg
            .coupling_config()
            .ok_or_else(|| Fail(FcStatus::Config, "config has no coupling experiment".into()))?;
        publish(slot, FcAggregate(estimate_chaos_energies(&cc)?));
        Ok(())
    })
}

/// # Safety
/// `aggregate` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_aggregate_len(aggregate: *const FcAggregate) -> usize {
    aggregate.as_ref().map_or(0, |a| a.0.rows.len())
}

/// # Safety
/// `aggregate` live; `row` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fc_aggregate_row(aggregate: *const FcAggregate, index: usize, row: *mut FcAggregateRow) -> FcStatus {
    guard(|| {
        let a = handle(aggregate, "aggregate")?;
        let r = a.0.rows.get(index).ok_or_else(|| {
            Fail(FcStatus::Domain, format!("row {index} out of range (len {})", a.0.rows.len()))
        })?;
        *out(row, "row")? = FcAggregateRow {
            t: r.t,
            p_mean: r.p_mean,
            k_mean: r.k_mean,
            c_mean: r.c_mean,
            total_mean: r.total_mean,
            total_stderr: r.total_stderr,
            trials: r.trials,
        };
        Ok(())
    })
}

/// Writes `sqrt((k/N) mean_total(t))` for every row into `buf`.
///
/// # Safety
/// `aggregate` live; `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn fc_marginal_w2_bound(aggregate: *const FcAggregate, k: usize, n: usize, buf: *mut f64, len: usize) -> FcStatus {
    guard(|| {
        let b = marginal_w2_bound(&handle(aggregate, "aggregate")?.0, k, n)?;
        copy_field(&b, buf, len)
    })
}

/// # Safety
/// `aggregate` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_aggregate_free(aggregate: *mut FcAggregate) {
    if !aggregate.is_null() {
        drop(Box::from_raw(aggregate));
    }
}
