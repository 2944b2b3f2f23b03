//! The `dirac-thermo` command line: `run`, `compare` and `check`.

pub mod check;
pub mod compare;
pub mod config;
pub mod simulate;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::error::DiracError;
pub use check::{check_scenario, stage_membership, CheckReport, PropertyResult};
pub use compare::{compare_methods, CompareReport, Divergence};
pub use config::{Method, ScenarioConfig, Schedule, Tolerances};
pub use simulate::{run_scenario, summarize, RunOutput, Scenario, Summary, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_TOLERANCE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("solver error: {0}")]
    Solver(#[from] DiracError),
    #[error("inadmissible: {0}")]
    Inadmissible(String),
    #[error("usage: {0}")]
    Usage(String),
}

impl CliError {
    /// A config error attributed to the dotted field path `field`.
    pub fn field(field: &str, msg: &str) -> Self {
        CliError::Config(format!("{field}: {msg}"))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Inadmissible(_) | CliError::Usage(_) => EXIT_CONFIG,
            CliError::Solver(_) => EXIT_SOLVER,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dirac-thermo", version, about = "Simulate open thermodynamic and nonholonomic systems with Dirac-structure integrators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// Scenario file (JSON).
    pub config: PathBuf,
    /// Output directory; overrides `output.dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use this value for every monitored tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate and write trajectory.csv, invariants.csv and summary.txt.
    Run(Common),
    /// Integrate with several formulations and report their divergence.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated methods; the first is the reference.
        #[arg(long, value_delimiter = ',', required = true)]
        formulations: Vec<Method>,
    },
    /// Verify Dirac membership, rank, isotropy and derivatives along a run.
    Check {
        #[command(flatten)]
        common: Common,
        /// Number of stages at which membership, rank and isotropy are tested.
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Seed for the derivative check's sample points.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

struct Prepared {
    cfg: ScenarioConfig,
    tol: Tolerances,
    out: PathBuf,
}

fn prepare(common: &Common) -> Result<Prepared, CliError> {
    let cfg = ScenarioConfig::load(&common.config)?;
    let mut tol = cfg.tolerances.clone();
    if let Some(t) = common.tol {
        if !(t.is_finite() && t > 0.0) {
            return Err(CliError::Usage(format!("--tol must be positive, got {t}")));
        }
        tol.override_all(t);
    }
    let out = common.out.clone().or_else(|| cfg.output.dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    Ok(Prepared { cfg, tol, out })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Executes a parsed command, returning its report text and whether every
/// check passed.
pub fn execute(cli: &Cli) -> Result<(String, bool), CliError> {
    match &cli.command {
        Command::Run(common) => {
            let p = prepare(common)?;
            let out = run_scenario(&p.cfg, &p.tol)?;
            out.table.write_csv(&p.out.join("trajectory.csv"))?;
            simulate::invariant_table(&out.reports).write_csv(&p.out.join("invariants.csv"))?;
            let text = out.summary.render();
            write_text(&p.out.join("summary.txt"), &text)?;
            Ok((text, out.summary.passed()))
        }
        Command::Compare { common, formulations } => {
            let p = prepare(common)?;
            let rep = compare_methods(&p.cfg, formulations, p.tol.compare)?;
            let text = rep.render();
            write_text(&p.out.join("compare.txt"), &text)?;
            Ok((text, rep.passed()))
        }
        Command::Check { common, samples, seed } => {
            let p = prepare(common)?;
            let rep = check_scenario(&p.cfg, &p.tol, *samples, *seed)?;
            let text = rep.render();
            write_text(&p.out.join("check.txt"), &text)?;
            Ok((text, rep.passed()))
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok((text, passed)) => {
            print!("{text}");
            if passed {
                EXIT_OK
            } else {
                EXIT_TOLERANCE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
