//! Experiment configuration: a TOML document with a strict schema.
//!
//! ```toml
//! command = "chaos"          # simulate | chaos | flocking | odi | oracle
//! model = "forceless"        # forceless | forced
//! master_seed = 42
//! output_dir = "out"
//! n_particles = 64
//!
//! [kernel]
//! kind = "power"
//! lambda = 1.0
//! beta = 0.5
//!
//! [init]
//! position_box = { lo = [0.0, 0.0], hi = [1.0, 1.0] }
//! velocity = { kind = "box", lo = [-1.0, -1.0], hi = [1.0, 1.0] }
//!
//! [integrator]
//! t_end = 4.0
//!
//! [coupling]
//! trials = 100
//! ```
//!
//! Forced runs add `[force]` (`sigma`, `p`, `kappa`) and `init.theta_range`.
//! Every problem in a document is reported, not just the first.

use std::fmt;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::coupling::{default_reference_size, observation_times, CouplingConfig, DEFAULT_OBS_POINTS, DEFAULT_TRIALS};
use crate::diagnostics::DEFAULT_EXTRA_PLANES;
use crate::dynamics::IntegratorConfig;
use crate::ensemble::{check_unit, ForceParams};
use crate::error::Error;
use crate::kernel::KernelSpec;
use crate::odi::DEFAULT_ODI_DT;
use crate::sampling::InitialDistribution;

pub const OUTPUT_DIR_ENV: &str = "FLOCKCHAOS_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "flockchaos-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Chaos,
    Flocking,
    Odi,
    Oracle,
}

impl Command {
    fn needs_system(self) -> bool {
        matches!(self, Command::Simulate | Command::Chaos | Command::Flocking)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Forceless,
    Forced,
}

/// The particle system shared by `simulate`, `chaos` and `flocking`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_particles: usize,
    pub kernel: KernelSpec,
    pub force: Option<ForceParams>,
    pub init: InitialDistribution,
    pub integrator: IntegratorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSection {
    pub n_reference: Option<usize>,
    pub trials: Option<usize>,
    pub reference_pool: Option<usize>,
    pub k: Option<usize>,
    pub obs_points: Option<usize>,
    pub obs_t_min: Option<f64>,
}

/// `[coupling]` with defaults resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSettings {
    pub n_reference: usize,
    pub trials: usize,
    pub reference_pool: Option<usize>,
    pub k: usize,
    pub obs_points: usize,
    pub obs_t_min: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlockingSection {
    pub axis: Option<Vec<f64>>,
    pub extra_planes: Option<usize>,
    pub plane_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlockingSettings {
    pub axis: Vec<f64>,
    pub extra_planes: usize,
    pub plane_seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdiSection {
    pub c: Option<Vec<f64>>,
    pub delta: Option<Vec<f64>>,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub output_stride: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdiSettings {
    pub c: Vec<f64>,
    pub delta: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub output_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSettings {
    pub mu: PathBuf,
    pub nu: PathBuf,
}

/// A fully validated experiment with every default resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub model: Model,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub system: Option<SystemConfig>,
    pub coupling: Option<CouplingSettings>,
    pub flocking: Option<FlockingSettings>,
    pub odi: Option<OdiSettings>,
    pub oracle: Option<OracleSettings>,
}

impl ExperimentConfig {
    pub fn coupling_config(&self) -> Option<CouplingConfig> {
        let (sys, c) = (self.system.as_ref()?, self.coupling.as_ref()?);
        Some(CouplingConfig {
            n_particles: sys.n_particles,
            n_reference: c.n_reference,
            trials: c.trials,
            kernel: sys.kernel.clone(),
            force: sys.force,
            init: sys.init.clone(),
            integrator: sys.integrator,
            master_seed: self.master_seed,
            obs_points: c.obs_points,
            obs_t_min: Some(c.obs_t_min),
            reference_pool: c.reference_pool,
        })
    }
}

/// Every problem found in a configuration document.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl From<ConfigErrors> for Error {
    fn from(e: ConfigErrors) -> Self {
        Error::Config(e.0.join("; "))
    }
}

const TOP_KEYS: &[&str] = &[
    "command",
    "model",
    "master_seed",
    "output_dir",
    "n_particles",
    "kernel",
    "force",
    "init",
    "integrator",
    "coupling",
    "flocking",
    "odi",
    "oracle",
];

struct Reader {
    table: toml::Table,
    errors: Vec<String>,
}

impl Reader {
    fn take<T: DeserializeOwned>(&mut self, key: &str) -> Option<T> {
        let v = self.table.get(key)?.clone();
        match T::deserialize(v) {
            Ok(x) => Some(x),
            Err(e) => {
                self.errors.push(format!("{key}: {}", e.message().trim()));
                None
            }
        }
    }

    fn require<T: DeserializeOwned>(&mut self, key: &str, why: &str) -> Option<T> {
        if !self.table.contains_key(key) {
            self.errors.push(format!("{key}: missing required field ({why})"));
            return None;
        }
        self.take(key)
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigErrors(vec![e.message().trim().to_string()]))?;
    let mut r = Reader { table, errors: Vec::new() };
    for key in r.table.keys() {
        if !TOP_KEYS.contains(&key.as_str()) {
            r.errors.push(format!("{key}: unknown field"));
        }
    }

    let command: Option<Command> = r.require("command", "one of simulate, chaos, flocking, odi, oracle");
    let model: Model = r.take("model").unwrap_or(Model::Forceless);
    let master_seed: u64 = r.take("master_seed").unwrap_or(0);
    let output_dir: PathBuf = r.take("output_dir").unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));

    let Some(command) = command else {
        return Err(ConfigErrors(r.errors));
    };

    let mut system = None;
    let mut coupling = None;
    let mut flocking = None;
    if command.needs_system() {
        let n: Option<usize> = r.require("n_particles", "number of agents");
        let kernel: Option<KernelSpec> = r.require("kernel", "communication kernel");
        let init: Option<InitialDistribution> = r.require("init", "initial distribution");
        let integrator: Option<IntegratorConfig> = r.require("integrator", "time stepping");
        let force: Option<ForceParams> = match model {
            Model::Forced => r.require("force", "the forced model needs sigma, p and kappa"),
            Model::Forceless => {
                if r.table.contains_key("force") {
                    r.errors.push("force: only allowed with model = \"forced\"".into());
                }
                None
            }
        };
        let coupling_raw: Option<CouplingSection> = r.take("coupling");
        let flocking_raw: FlockingSection = r.take("flocking").unwrap_or_default();

        if let Some(k) = &kernel {
            r.errors.extend(k.violations());
        }
        if let Some(f) = &force {
            r.errors.extend(f.violations());
        }
        if let Some(i) = &integrator {
            r.errors.extend(i.violations());
        }
        if n == Some(0) {
            r.errors.push("n_particles must be at least 1".into());
        }
        if let Some(init) = &init {
            r.errors.extend(init.violations());
            match (model, init.theta_range.is_some()) {
                (Model::Forced, false) => r.errors.push("init.theta_range: required by model = \"forced\"".into()),
                (Model::Forceless, true) => {
                    r.errors.push("init.theta_range: only allowed with model = \"forced\"".into())
                }
                _ => {}
            }
        }
        let dim = init.as_ref().map(|i| i.dim());

        if let (Some(n), Some(i)) = (n, &integrator) {
            if command == Command::Chaos || coupling_raw.is_some() {
                let c = coupling_raw.clone().unwrap_or(CouplingSection {
                    n_reference: None,
                    trials: None,
                    reference_pool: None,
                    k: None,
                    obs_points: None,
                    obs_t_min: None,
                });
                let s = CouplingSettings {
                    n_reference: c.n_reference.unwrap_or_else(|| default_reference_size(n)),
                    trials: c.trials.unwrap_or(DEFAULT_TRIALS),
                    reference_pool: c.reference_pool,
                    k: c.k.unwrap_or(1),
                    obs_points: c.obs_points.unwrap_or(DEFAULT_OBS_POINTS),
                    obs_t_min: c.obs_t_min.unwrap_or(i.t_end / 64.0),
                };
                if s.n_reference < n {
                    r.errors.push(format!("coupling.n_reference = {} must be >= n_particles = {n}", s.n_reference));
                }
                if s.trials == 0 {
                    r.errors.push("coupling.trials must be at least 1".into());
                }
                if s.reference_pool == Some(0) {
                    r.errors.push("coupling.reference_pool must be at least 1".into());
                }
                if s.k == 0 || s.k > n {
                    r.errors.push(format!("coupling.k = {} must lie in 1..=n_particles ({n})", s.k));
                }
                if i.violations().is_empty() {
                    if let Err(e) = observation_times(i.t_end, s.obs_points, Some(s.obs_t_min)) {
                        r.errors.push(format!("coupling.obs_points / coupling.obs_t_min: {e}"));
                    }
                }
                coupling = Some(s);
            }
        }

        let axis = flocking_raw.axis.clone().or_else(|| {
            dim.map(|d| {
                let mut a = vec![0.0; d];
                a[d - 1] = 1.0;
                a
            })
        });
        if let (Some(a), Some(d)) = (&axis, dim) {
            if let Err(e) = check_unit(a, d) {
                r.errors.push(format!("flocking.axis: {e}"));
            }
        }
        if let Some(axis) = axis {
            flocking = Some(FlockingSettings {
                axis,
                extra_planes: flocking_raw.extra_planes.unwrap_or(DEFAULT_EXTRA_PLANES),
                plane_seed: flocking_raw.plane_seed.unwrap_or(0),
            });
        }

        if let (Some(n_particles), Some(kernel), Some(init), Some(integrator)) = (n, kernel, init, integrator) {
            if model == Model::Forceless || force.is_some() {
                system = Some(SystemConfig { n_particles, kernel, force, init, integrator });
            }
        }
    } else {
        for key in ["n_particles", "kernel", "force", "init", "integrator", "coupling", "flocking"] {
            if r.table.contains_key(key) {
                r.errors.push(format!("{key}: not used by command {command:?}").to_lowercase());
            }
        }
    }

    let odi = if command == Command::Odi {
        let raw: OdiSection = r.take("odi").unwrap_or_default();
        let s = OdiSettings {
            c: raw.c.unwrap_or_else(|| vec![0.25, 1.0, 4.0]),
            delta: raw.delta.unwrap_or_else(|| vec![0.25, 1.0, 4.0]),
            t_end: raw.t_end.unwrap_or(50.0),
            dt: raw.dt.unwrap_or(DEFAULT_ODI_DT),
            output_stride: raw.output_stride.unwrap_or(100),
        };
        if s.c.is_empty() || s.c.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            r.errors.push("odi.c must be a non-empty list of finite values >= 0".into());
        }
        if s.delta.is_empty() || s.delta.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            r.errors.push("odi.delta must be a non-empty list of positive values".into());
        }
        if !(s.t_end > 0.0 && s.t_end.is_finite()) {
            r.errors.push(format!("odi.t_end must be positive, got {}", s.t_end));
        }
        if !(s.dt > 0.0 && s.dt <= s.t_end) {
            r.errors.push(format!("odi.dt must lie in (0, t_end], got {}", s.dt));
        }
        if s.output_stride == 0 {
            r.errors.push("odi.output_stride must be positive".into());
        }
        Some(s)
    } else {
        if r.table.contains_key("odi") {
            r.errors.push("odi: only used by command odi".into());
        }
        None
    };

    let oracle = if command == Command::Oracle {
        r.require::<OracleSettings>("oracle", "paths of the two point sets mu and nu")
    } else {
        if r.table.contains_key("oracle") {
            r.errors.push("oracle: only used by command oracle".into());
        }
        None
    };

    if !r.errors.is_empty() {
        return Err(ConfigErrors(r.errors));
    }
    Ok(ExperimentConfig { command, model, master_seed, output_dir, system, coupling, flocking, odi, oracle })
}
