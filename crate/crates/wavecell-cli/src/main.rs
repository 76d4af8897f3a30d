//! Command-line front end: scenario runs, parameter tables, order sweeps,
//! and SVG rendering of the resulting CSVs.
//!
//! Exit codes: 0 success, 2 configuration error, 3 divergence during time
//! stepping, 4 singular (or indefinite) mass matrix, 1 anything else.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use wavecell::scenarios::ScenarioError;
use wavecell::solver::SolverError;

mod config;
mod plot;
mod studies;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Divergence(String),
    #[error("{0}")]
    SingularMass(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::SingularMass(_) => 4,
            CliError::Io(_) | CliError::Other(_) => 1,
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        let msg = e.to_string();
        match e {
            SolverError::Diverged { .. } => CliError::Divergence(msg),
            SolverError::SingularMass { .. }
            | SolverError::MassNotSpd
            | SolverError::EffectiveNotSpd => CliError::SingularMass(msg),
            SolverError::BadBreaks(_)
            | SolverError::BadOrder { .. }
            | SolverError::BadDt(_)
            | SolverError::ConstraintOutOfRange { .. }
            | SolverError::NoActiveElements
            | SolverError::ProbeInactive { .. }
            | SolverError::BadLoadDof { .. } => CliError::Config(msg),
            _ => CliError::Other(msg),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Solver(s) => CliError::from(s),
            other => CliError::Config(other.to_string()),
        }
    }
}

/// Immersed-boundary explicit elastodynamics: run scenarios, tabulate
/// critical time steps and operator conditioning, and render figures.
#[derive(Parser)]
#[command(name = "wavecell", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute one scenario: probe histories as CSV plus a TOML summary.
    Run { config: PathBuf },
    /// Accuracy-versus-order sweep scored against a refined self-reference.
    Sweep { config: PathBuf },
    /// Parameter tables over stabilization variants and orders.
    Tables {
        #[command(subcommand)]
        which: TableCmd,
    },
    /// Render a study CSV (probe history or sweep) to a deterministic SVG.
    Plot { csv: PathBuf },
}

#[derive(Subcommand)]
enum TableCmd {
    /// Critical-time-step table, normalized by the plain lumped variant.
    Dtcr { config: PathBuf },
    /// Operator conditioning across the six stabilization settings.
    Kappa { config: PathBuf },
}

fn dispatch(cmd: Cmd, workers: usize) -> Result<Vec<PathBuf>, CliError> {
    match cmd {
        Cmd::Run { config } => {
            let cfg = config::RunConfig::load(&config)?;
            studies::single_run(&cfg, workers)
        }
        Cmd::Sweep { config } => {
            let cfg = config::RunConfig::load(&config)?;
            studies::p_sweep(&cfg, workers)
        }
        Cmd::Tables { which } => match which {
            TableCmd::Dtcr { config } => {
                let cfg = config::RunConfig::load(&config)?;
                studies::dtcr_table(&cfg, workers)
            }
            TableCmd::Kappa { config } => {
                let cfg = config::RunConfig::load(&config)?;
                studies::kappa_table(&cfg, workers)
            }
        },
        Cmd::Plot { csv } => plot::emit_plot(&csv).map(|p| vec![p]),
    }
}

fn main() {
    let cli = Cli::parse();
    let workers = config::workers();
    match dispatch(cli.cmd, workers) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
