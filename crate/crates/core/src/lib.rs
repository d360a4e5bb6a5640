//! Numerical laboratory for the Cucker-Smale alignment model, its
//! Rayleigh-forced variant with variable characteristic speeds, and the
//! propagation of chaos between the N-particle flow and the mean-field
//! (Vlasov) characteristic flow.
//!
//! Modules, bottom-up:
//!
//! - [`kernel`], [`ensemble`], [`sampling`], [`rng`]: communication kernels,
//!   particle state, initial laws and seed derivation.
//! - [`dynamics`]: discrete right-hand sides and fixed-step RK4.
//! - [`meanfield`]: characteristics driven by a reference ensemble.
//! - [`coupling`]: coupled trials, chaos energies, marginal W2 bounds.
//! - [`transport`]: exact W2 between equal-size empirical measures.
//! - [`diagnostics`]: flocking observables and envelope fits.
//! - [`odi`]: the Grönwall envelope systems.
//! - [`config`], [`experiment`], [`output`]: the experiment runner behind the CLI.

pub mod error;
pub mod rng;
pub mod kernel;
pub mod ensemble;
pub mod sampling;
pub mod dynamics;
pub mod meanfield;
pub mod coupling;
pub mod transport;
pub mod diagnostics;
pub mod odi;
pub mod config;
pub mod output;
pub mod experiment;

pub use error::{Error, Result};
pub use kernel::{KernelKind, KernelSpec};
pub use ensemble::{sector_margin, ForceParams, ParticleEnsemble};
pub use sampling::{sample_initial, AxisBox, InitialDistribution, VelocityRegion};
pub use dynamics::{cs_rhs, csr_rhs, integrate, rk4_step, Derivatives, IntegratorConfig};
pub use meanfield::{advance_coupled_system, meanfield_rhs, MeanFieldSystem};
pub use transport::{w2_bruteforce, w2_exact, EmpiricalMeasure};
pub use coupling::{
    estimate_chaos_energies, marginal_w2_bound, run_coupled_trial, sznitman_functional, ChaosAggregate,
    ChaosMetricsSample, CouplingConfig,
};
pub use diagnostics::{
    envelope_check, fit_decay_rate, flock_diagnostics, projected_max_angle, EnvelopeFit, EnvelopeForm,
    FlockDiagnostics,
};
pub use odi::{integrate_odi_forced, integrate_odi_forceless, OdiState};
pub use config::{parse_config, ConfigErrors, ExperimentConfig};
