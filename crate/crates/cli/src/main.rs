//! `perlick`: command-line front end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 numerical or I/O
//! failure, 3 configuration error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::LevelFilter;
use perlick::Error;

use commands::{OrbitMode, SweepGrid};
use config::{RunConfig, RunFlags};

#[derive(Parser)]
#[command(name = "perlick", version, about = "Perlick type-I superintegrable system on curved spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Effective potential V_eff(ξ) on a grid, with E_min and E_escape
    Potential {
        #[command(flatten)]
        run: RunFlags,
        #[arg(long = "xi-min")]
        xi_min: Option<f64>,
        #[arg(long = "xi-max")]
        xi_max: Option<f64>,
    },
    /// Energy window, turning points, classification and conic parameters
    Bounds {
        #[command(flatten)]
        run: RunFlags,
    },
    /// Integrate from the circular radius and write the trajectory with
    /// conservation diagnostics
    Simulate {
        #[command(flatten)]
        run: RunFlags,
    },
    /// Planar generalized conic, or an integrated 3D orbit
    Orbit {
        #[command(flatten)]
        run: RunFlags,
        #[arg(long, value_enum, default_value = "planar")]
        mode: OrbitMode,
    },
    /// Numerical check of the Poisson algebra at seeded random points
    Verify {
        #[command(flatten)]
        run: RunFlags,
        /// relative residual threshold; 1e-6 for β = 1, else 1e-5
        #[arg(long)]
        threshold: Option<f64>,
        /// restrict to the named relations (repeatable); all when absent
        #[arg(long = "relation")]
        relations: Vec<String>,
    },
    /// Measured radial, polar and azimuthal frequencies
    Frequencies {
        #[command(flatten)]
        run: RunFlags,
    },
    /// Simulate and classify over a (κ, β, E) grid
    Sweep {
        #[command(flatten)]
        run: RunFlags,
        #[command(flatten)]
        grid: SweepGrid,
    },
}

/// Failure kinds, one per nonzero exit code.
#[derive(Debug)]
pub enum Failure {
    Verification(String),
    Runtime(anyhow::Error),
    Config(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Verification(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Config(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Verification(msg) => write!(f, "verification failed: {msg}"),
            Failure::Runtime(e) => write!(f, "{e:#}"),
            Failure::Config(e) => write!(f, "configuration error: {e:#}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParams(_)
            | Error::UnknownStrategy { .. }
            | Error::NoSolution { .. }
            | Error::NoBoundStates { .. }
            | Error::NonZeroOffset(_)
            | Error::ZeroAngularMomentum
            | Error::ZeroAzimuthalMomentum
            | Error::InvalidDiscriminant(_)
            | Error::Unbounded { .. } => Failure::Config(e.into()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

fn init_logging() -> Result<(), Failure> {
    let level = match std::env::var("PERLICK_LOG").as_deref() {
        Err(_) | Ok("") => LevelFilter::Warn,
        Ok("quiet") => LevelFilter::Off,
        Ok("info") => LevelFilter::Info,
        Ok("debug") => LevelFilter::Debug,
        Ok(other) => {
            return Err(Failure::Config(anyhow::anyhow!("PERLICK_LOG must be quiet, info or debug, got '{other}'")))
        }
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let resolve = |flags: &RunFlags| RunConfig::resolve(flags).map_err(Failure::Config);
    let serial = || rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| Failure::Runtime(e.into()));
    match &cli.command {
        Command::Sweep { run, grid } => commands::sweep(&resolve(run)?, grid),
        Command::Potential { run, xi_min, xi_max } => commands::potential(&resolve(run)?, *xi_min, *xi_max),
        Command::Bounds { run } => commands::bounds(&resolve(run)?),
        Command::Simulate { run } => commands::simulate(&resolve(run)?),
        Command::Orbit { run, mode } => commands::orbit(&resolve(run)?, *mode),
        Command::Frequencies { run } => commands::frequencies(&resolve(run)?),
        Command::Verify { run, threshold, relations } => {
            let cfg = resolve(run)?;
            serial()?.install(|| commands::verify(&cfg, *threshold, relations))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = init_logging().and_then(|()| dispatch(cli));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("perlick: {f}");
            ExitCode::from(f.code())
        }
    }
}
