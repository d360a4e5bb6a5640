use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flockchaos::config::{parse_config, Command, OUTPUT_DIR_ENV};
use flockchaos::experiment::{exit_code, run_experiment, EXIT_CONFIG_ERROR};

#[derive(Parser)]
#[command(name = "flockchaos", version, about = "Cucker-Smale flocking and propagation-of-chaos experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// Override `master_seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Size of the worker pool (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Sub {
    /// Integrate the discrete system and write the trajectory.
    Simulate { config: PathBuf },
    /// Coupled Monte Carlo estimate of the chaos energies.
    Chaos { config: PathBuf },
    /// Flocking diagnostics along one trajectory.
    Flocking { config: PathBuf },
    /// Envelope systems over a (c, δ) grid.
    Odi { config: PathBuf },
    /// Exact W2 between two point sets.
    Oracle { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (expected, path) = match &cli.command {
        Sub::Simulate { config } => (Command::Simulate, config),
        Sub::Chaos { config } => (Command::Chaos, config),
        Sub::Flocking { config } => (Command::Flocking, config),
        Sub::Odi { config } => (Command::Odi, config),
        Sub::Oracle { config } => (Command::Oracle, config),
    };
    let fail = |msg: String| {
        eprintln!("{msg}");
        ExitCode::from(EXIT_CONFIG_ERROR as u8)
    };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return fail(format!("cannot read {}: {e}", path.display())),
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(errs) => return fail(format!("invalid configuration {}:\n{errs}", path.display())),
    };
    if cfg.command != expected {
        return fail(format!("config {} declares command {:?}, not {:?}", path.display(), cfg.command, expected));
    }
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
        cfg.output_dir = PathBuf::from(dir);
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return fail("--threads must be at least 1".into());
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(format!("cannot size the worker pool: {e}"));
        }
    }

    let res = run_experiment(&cfg);
    match &res {
        Ok(out) => {
            for m in &out.messages {
                println!("{m}");
            }
            for c in &out.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("outputs in {}", cfg.output_dir.display());
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&res) as u8)
}
