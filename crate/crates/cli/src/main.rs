//! `qubus`: parameter sweeps, figure-data tables, and Monte-Carlo
//! validation for the coherent-bus entanglement library, as CSV or JSON.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid configuration,
//! 3 numeric assertion failure.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qubus_core::QubusError;

mod commands;
mod config;
mod table;

use config::FileConfig;
use table::Table;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Io(String),
}

impl From<QubusError> for CliError {
    fn from(e: QubusError) -> Self {
        match e {
            QubusError::NumericAssertion(_)
            | QubusError::NormLeakage { .. }
            | QubusError::NotNormalized(_)
            | QubusError::NotDensity(_)
            | QubusError::ZeroSuccessProbability => CliError::Numeric(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "qubus", version, about = "Coherent-bus entanglement link sweeps and reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Entanglement of formation of the transmitted pair over an amplitude sweep
    Fig2(Fig2Args),
    /// Quantum-optimal discrimination failure bound over target fidelities
    Fig4(Fig4Args),
    /// Failure probability of each heralding scheme next to that bound
    Fig6(Fig6Args),
    /// Sampled receiver shots against the analytic pattern distribution
    Montecarlo(MonteArgs),
    /// Closed-form link report per parameter point
    Link(LinkArgs),
    /// Branch-by-branch hybrid Bell measurement report for a two-link swap
    Swap(SwapArgs),
}

#[derive(Args)]
pub struct OutputArgs {
    /// Flat key = value config file; command-line flags override it
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output format: csv or json
    #[arg(long)]
    format: Option<String>,
    /// Write the table here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct Fig2Args {
    /// Field amplitude grid: "x" or "lo,hi,count"
    #[arg(long)]
    pub alpha_range: Option<String>,
    /// Conditional rotation angle in radians
    #[arg(long)]
    pub theta: Option<f64>,
    /// Fiber length grid in km: "x" or "lo,hi,count"
    #[arg(long)]
    pub distance_range: Option<String>,
    /// Fiber attenuation in dB per km
    #[arg(long)]
    pub loss_db_per_km: Option<f64>,
    /// Receiver beam-splitter parameter
    #[arg(long)]
    pub lambda: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
pub struct Fig4Args {
    /// Target-fidelity grid: "x" or "lo,hi,count"
    #[arg(long)]
    pub fidelity_range: Option<String>,
    /// Fiber length grid in km: "x" or "lo,hi,count"
    #[arg(long)]
    pub distance_range: Option<String>,
    /// Fiber attenuation in dB per km
    #[arg(long)]
    pub loss_db_per_km: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
pub struct Fig6Args {
    /// Target-fidelity grid: "x" or "lo,hi,count"
    #[arg(long)]
    pub fidelity_range: Option<String>,
    /// Conditional rotation angle in radians
    #[arg(long)]
    pub theta: Option<f64>,
    /// Fiber length grid in km: "x" or "lo,hi,count"
    #[arg(long)]
    pub distance_range: Option<String>,
    /// Fiber attenuation in dB per km
    #[arg(long)]
    pub loss_db_per_km: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
pub struct MonteArgs {
    /// Field amplitude grid: "x" or "lo,hi,count"
    #[arg(long)]
    pub alpha_range: Option<String>,
    /// Conditional rotation angle in radians
    #[arg(long)]
    pub theta: Option<f64>,
    /// Fiber length grid in km: "x" or "lo,hi,count"
    #[arg(long)]
    pub distance_range: Option<String>,
    /// Fiber attenuation in dB per km
    #[arg(long)]
    pub loss_db_per_km: Option<f64>,
    /// Receiver beam-splitter parameter
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Number of receiver shots
    #[arg(long)]
    pub trials: Option<u64>,
    /// RNG seed; identical seeds give byte-identical reports
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
pub struct LinkArgs {
    /// Field amplitude grid: "x" or "lo,hi,count"
    #[arg(long)]
    pub alpha_range: Option<String>,
    /// Conditional rotation angle in radians
    #[arg(long)]
    pub theta: Option<f64>,
    /// Fiber length grid in km: "x" or "lo,hi,count"
    #[arg(long)]
    pub distance_range: Option<String>,
    /// Fiber attenuation in dB per km
    #[arg(long)]
    pub loss_db_per_km: Option<f64>,
    /// Receiver beam-splitter parameter
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Heralding scheme: even, odd-ent, total-usd, homodyne
    #[arg(long)]
    pub scheme: Option<String>,
    /// Homodyne window halfwidth (homodyne scheme only; default is the
    /// midpoint to the rotated field states)
    #[arg(long)]
    pub window: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
pub struct SwapArgs {
    /// Field amplitude grid: "x" or "lo,hi,count"
    #[arg(long)]
    pub alpha_range: Option<String>,
    /// Conditional rotation angle in radians
    #[arg(long)]
    pub theta: Option<f64>,
    /// Fiber length grid in km: "x" or "lo,hi,count"
    #[arg(long)]
    pub distance_range: Option<String>,
    /// Fiber attenuation in dB per km
    #[arg(long)]
    pub loss_db_per_km: Option<f64>,
    /// Receiver beam-splitter parameter
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Field discriminator: usd, usd-parity, homodyne
    #[arg(long)]
    pub scheme: Option<String>,
    /// Homodyne window halfwidth (homodyne scheme only)
    #[arg(long)]
    pub window: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            let (code, message) = match error {
                CliError::Io(m) => (1, m),
                CliError::Config(m) => (2, m),
                CliError::Numeric(m) => (3, m),
            };
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (table, output) = match &cli.command {
        Command::Fig2(args) => {
            let file = load(&args.output)?;
            (commands::fig2(args, &file)?, resolve_output(&args.output, &file)?)
        }
        Command::Fig4(args) => {
            let file = load(&args.output)?;
            (commands::fig4(args, &file)?, resolve_output(&args.output, &file)?)
        }
        Command::Fig6(args) => {
            let file = load(&args.output)?;
            (commands::fig6(args, &file)?, resolve_output(&args.output, &file)?)
        }
        Command::Montecarlo(args) => {
            let file = load(&args.output)?;
            (commands::montecarlo(args, &file)?, resolve_output(&args.output, &file)?)
        }
        Command::Link(args) => {
            let file = load(&args.output)?;
            (commands::link(args, &file)?, resolve_output(&args.output, &file)?)
        }
        Command::Swap(args) => {
            let file = load(&args.output)?;
            (commands::swap(args, &file)?, resolve_output(&args.output, &file)?)
        }
    };
    emit(&table, &output)
}

struct ResolvedOutput {
    format: String,
    out: Option<PathBuf>,
}

fn load(output: &OutputArgs) -> Result<FileConfig, CliError> {
    match &output.config {
        Some(path) => FileConfig::load(path),
        None => Ok(FileConfig::empty()),
    }
}

fn resolve_output(output: &OutputArgs, file: &FileConfig) -> Result<ResolvedOutput, CliError> {
    let format = config::str_of(&output.format, file, "format", "csv");
    if format != "csv" && format != "json" {
        return Err(CliError::Config(format!(
            "format {format:?} is neither csv nor json"
        )));
    }
    Ok(ResolvedOutput {
        format,
        out: config::path_of(&output.out, file),
    })
}

fn emit(table: &Table, output: &ResolvedOutput) -> Result<(), CliError> {
    table.check_finite()?;
    let body = match output.format.as_str() {
        "csv" => table.to_csv(),
        _ => table.to_json(),
    };
    match &output.out {
        Some(path) => fs::write(path, body)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}
