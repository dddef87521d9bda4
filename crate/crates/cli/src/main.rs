//! `backflow`: certify, scan and tabulate quantum backflow states.

mod commands;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use backflow_core::BackflowError;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "backflow", version, about = "Quantum backflow numerics for free particles")]
pub struct Cli {
    /// Output file (or directory for `curves`); stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Output format. `certify` prints a `key: value` report unless `json` is chosen.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Seed for randomized output.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct StateArgs {
    /// State JSON file: {profile:{kind,params}, a:[re,im], family_factor, units:{hbar,mass}}.
    #[arg(long, conflicts_with = "catalog")]
    pub state: Option<PathBuf>,
    /// Catalog state: gaussian_0684, bracken_melloy, eveson, penz_numeric[:n].
    #[arg(long)]
    pub catalog: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Moments, backflow verdict, J(0), negative window and flux of a state.
    Certify(StateArgs),
    /// Window flux over a grid of family constants, with golden-section refinement.
    Scan(ScanArgs),
    /// Nyström estimates of the Bracken–Melloy constant.
    BmBound(BmArgs),
    /// J(t) and P(t) tables.
    Curves(CurvesArgs),
    /// Regularized-current limit trace.
    Limit(LimitArgs),
    /// List catalog states, or generate random family states.
    Catalog(CatalogArgs),
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Family profile f; defaults to the Gaussian exp(−γ₀²p²).
    #[command(flatten)]
    pub source: StateArgs,
    /// γ₀ of the default Gaussian profile.
    #[arg(long, default_value_t = 1.0)]
    pub gamma0: f64,
    /// Sweep start in units of 1/γ₀ (of the momentum scale for non-Gaussian profiles).
    #[arg(long, default_value_t = 0.57)]
    pub from: f64,
    #[arg(long, default_value_t = 0.88)]
    pub to: f64,
    #[arg(long, default_value_t = 64)]
    pub points: usize,
    /// Imaginary parts of a (same units), one sweep per value.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub imag: Vec<f64>,
    /// Resolution of the refinement around the real-axis argmin.
    #[arg(long, default_value_t = 1e-3)]
    pub refine_tol: f64,
    #[arg(long)]
    pub no_refine: bool,
}

#[derive(Debug, Args)]
pub struct BmArgs {
    /// Matrix sizes.
    #[arg(long, value_delimiter = ',', default_value = "256,512,1024")]
    pub n: Vec<usize>,
    /// Momentum cutoff is pmax_scale·√n in units of √(4mħ/Δ).
    #[arg(long, default_value_t = 1.0)]
    pub pmax_scale: f64,
    #[arg(long, num_args = 2, value_names = ["T1", "T2"], default_values_t = [0.0, 1.0])]
    pub window: Vec<f64>,
    /// Write the maximizing state at the largest n as state JSON.
    #[arg(long)]
    pub export_state: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    #[command(flatten)]
    pub source: StateArgs,
    /// Half-width of the time range; defaults to 5 timescales of the state.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 201)]
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Rule {
    Tracked,
    Fixed,
}

#[derive(Debug, Args)]
pub struct LimitArgs {
    /// Fiducial profile f; defaults to exp(−p²).
    #[command(flatten)]
    pub source: StateArgs,
    #[arg(long, default_value_t = 12)]
    pub steps: usize,
    #[arg(long, value_enum, default_value_t = Rule::Tracked)]
    pub rule: Rule,
}

#[derive(Debug, Args)]
pub struct CatalogArgs {
    /// Generate this many random family states instead of listing the catalog.
    #[arg(long)]
    pub random: Option<usize>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::usage(format!("{}: {e}", path.display()))
    }

    pub fn csv(e: csv::Error) -> Self {
        Self::usage(format!("writing CSV: {e}"))
    }
}

impl From<BackflowError> for CliError {
    fn from(e: BackflowError) -> Self {
        let code = match e {
            BackflowError::Accuracy { .. } => 3,
            BackflowError::Solver { .. } => 4,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
