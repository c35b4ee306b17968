//! `pibm`: batch runner for simulations, cross-checks and asymptotic
//! experiments. Every run writes `config.json`, `manifest.json` and its CSV
//! tables into `--out`.
//!
//! Exit codes: 0 all checks passed, 2 a check failed, 3 invalid
//! configuration, 4 numerical failure, 5 capacity exceeded.

mod config;
mod experiments;
mod output;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use pibm::error::ErrorClass;

use config::{
    ExperimentConfig, Grid, KernelChoice, Operation, ProfileChoice, SchemeChoice, TransitionCheck,
    TwDist,
};
use output::{write_json, RunManifest};

/// Environment variable holding the worker count.
const WORKERS_ENV: &str = "PIBM_WORKERS";

const EXIT_CHECK_FAILED: u8 = 2;
const EXIT_INVALID_CONFIG: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;
const EXIT_CAPACITY: u8 = 5;

#[derive(Parser, Debug)]
#[command(
    name = "pibm",
    version,
    about = "Point-interacting Brownian motions: experiments and cross-checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Master seed of the random streams.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Monte Carlo paths or replicas.
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    /// Time step of the simulation schemes.
    #[arg(long)]
    dt: Option<f64>,
    /// Tolerance override for the experiment's checks.
    #[arg(long)]
    tol: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "pibm-out")]
    out: PathBuf,
    /// Experiment identifier recorded in the manifest.
    #[arg(long)]
    id: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a saved configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Terminal positions of the oblique, dual or potential scheme.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_negative_numbers = true
        )]
        positions: Vec<f64>,
        #[arg(long, default_value_t = 0.5)]
        t: f64,
        #[arg(long, value_enum, default_value_t = SchemeChoice::Oblique)]
        scheme: SchemeChoice,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Lattice duality check for the exclusion process.
    Asep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_negative_numbers = true
        )]
        x: Vec<f64>,
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_negative_numbers = true
        )]
        y: Vec<f64>,
        #[arg(long, default_value_t = 2.0)]
        t: f64,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
    },
    /// Duality check for the continuous system.
    DualityCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_negative_numbers = true
        )]
        x: Vec<f64>,
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_negative_numbers = true
        )]
        y: Vec<f64>,
        #[arg(long, default_value_t = 0.5)]
        t: f64,
    },
    /// Generating function by nested contours, optionally against Monte Carlo.
    Genfun {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_negative_numbers = true
        )]
        x: Vec<f64>,
        #[arg(long, default_value_t = 0.5)]
        t: f64,
        #[arg(long)]
        mc: bool,
    },
    /// Bethe ansatz transition density checks.
    Transition {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        t: f64,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long, value_enum, default_value_t = TransitionCheck::All)]
        check: TransitionCheck,
    },
    /// Fredholm determinants and Tracy-Widom distribution functions.
    Fredholm {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = KernelChoice::Both)]
        kernel: KernelChoice,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long, default_value_t = 1.0)]
        u: f64,
        /// Time in the rescaled clock.
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = vec![-0.05, -0.1, -0.2])]
        zeta: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value = "-4:2:0.25", allow_hyphen_values = true)]
        grid: Grid,
        #[arg(long, value_enum, default_value_t = TwDist::Gue)]
        dist: TwDist,
    },
    /// Height fluctuations from a half-line Poisson start.
    Scaling {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.2)]
        tau: f64,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        /// Time in the rescaled clock.
        #[arg(long, default_value_t = 50.0)]
        t: f64,
        #[arg(long, default_value_t = 200)]
        particles: usize,
    },
    /// Non-universal KPZ constants for a pressure profile.
    Constants {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        /// point-interaction, gaussian-chain or constant:<value>.
        #[arg(long, default_value = "point-interaction")]
        profile: ProfileChoice,
        #[arg(long, default_value_t = 1.0)]
        slope: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
    },
}

fn into_config(command: Command) -> Result<ExperimentConfig, String> {
    let (common, operation) = match command {
        Command::Run { config } => {
            let text =
                fs::read_to_string(&config).map_err(|e| format!("{}: {e}", config.display()))?;
            return serde_json::from_str(&text).map_err(|e| format!("{}: {e}", config.display()));
        }
        Command::Simulate {
            common,
            tau,
            positions,
            t,
            scheme,
            epsilon,
        } => (
            common,
            Operation::Simulate {
                tau,
                positions,
                t,
                scheme,
                epsilon,
            },
        ),
        Command::Asep {
            common,
            tau,
            x,
            y,
            t,
            epsilon,
        } => (
            common,
            Operation::Asep {
                tau,
                x,
                y,
                t,
                epsilon,
            },
        ),
        Command::DualityCheck {
            common,
            tau,
            x,
            y,
            t,
        } => (common, Operation::DualityCheck { tau, x, y, t }),
        Command::Genfun {
            common,
            tau,
            x,
            t,
            mc,
        } => (common, Operation::Genfun { tau, x, t, mc }),
        Command::Transition {
            common,
            n,
            t,
            tau,
            check,
        } => (common, Operation::Transition { n, t, tau, check }),
        Command::Fredholm {
            common,
            kernel,
            tau,
            u,
            t,
            zeta,
            a,
            grid,
            dist,
        } => (
            common,
            Operation::Fredholm {
                kernel,
                tau,
                u,
                t,
                zeta,
                a,
                grid,
                dist,
            },
        ),
        Command::Scaling {
            common,
            tau,
            a,
            t,
            particles,
        } => (
            common,
            Operation::Scaling {
                tau,
                a,
                t,
                particles,
            },
        ),
        Command::Constants {
            common,
            tau,
            profile,
            slope,
            t,
        } => (
            common,
            Operation::Constants {
                tau,
                profile,
                slope,
                t,
            },
        ),
    };
    Ok(ExperimentConfig {
        id: common.id.unwrap_or_else(|| operation.name().to_string()),
        seed: common.seed,
        paths: common.paths,
        dt: common.dt,
        tol: common.tol,
        out: common.out,
        operation,
    })
}

fn configure_workers() -> Result<(), String> {
    let Ok(value) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let workers: usize = value
        .parse()
        .map_err(|_| format!("{WORKERS_ENV}={value:?} is not a count"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| e.to_string())
}

fn fail(code: u8, message: &str) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn execute(cfg: &ExperimentConfig) -> ExitCode {
    let start = Instant::now();
    let outcome = match experiments::run(cfg) {
        Ok(o) => o,
        Err(e) => {
            let code = match e.class() {
                ErrorClass::InvalidConfig => EXIT_INVALID_CONFIG,
                ErrorClass::Numerical => EXIT_NUMERICAL,
                ErrorClass::Capacity => EXIT_CAPACITY,
            };
            return fail(code, &e.to_string());
        }
    };
    let passed = outcome.checks.iter().all(|c| c.passed);
    let manifest = RunManifest {
        config: cfg,
        version: env!("CARGO_PKG_VERSION"),
        wall_time_s: start.elapsed().as_secs_f64(),
        passed,
        checks: &outcome.checks,
        summary: &outcome.summary,
        files: outcome.tables.iter().map(|t| t.file.as_str()).collect(),
    };
    let written = fs::create_dir_all(&cfg.out)
        .and_then(|_| write_json(&cfg.out.join("config.json"), cfg))
        .and_then(|_| outcome.tables.iter().try_for_each(|t| t.write(&cfg.out)))
        .and_then(|_| write_json(&cfg.out.join("manifest.json"), &manifest));
    if let Err(e) = written {
        return fail(
            EXIT_INVALID_CONFIG,
            &format!("cannot write to {}: {e}", cfg.out.display()),
        );
    }
    for c in &outcome.checks {
        println!(
            "{} {}: {:e} (tolerance {:e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.tolerance
        );
    }
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let informational = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if informational {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_INVALID_CONFIG)
            };
        }
    };
    if let Err(e) = configure_workers() {
        return fail(EXIT_INVALID_CONFIG, &e);
    }
    match into_config(cli.command) {
        Ok(cfg) => execute(&cfg),
        Err(e) => fail(EXIT_INVALID_CONFIG, &e),
    }
}
