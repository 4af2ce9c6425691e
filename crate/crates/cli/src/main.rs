mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "psho", version, about = "Eigenvalues from powers of sin(H tau)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Flags {
    /// TOML file with the same keys as the flags; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    run: RunConfig,
}

#[derive(Subcommand)]
enum Command {
    /// Ground energy by descending tau from the reference energy
    Ground(Flags),
    /// Excited-state plateaus over a tau window, one curve per reference
    Excited(Flags),
    /// Moment table and estimates at one tau
    Moments(Flags),
    /// Trotter deviation of the first moments and its scaling with delta
    TrotterError(Flags),
    /// Monte-Carlo success rate of repeated post-selection
    #[command(alias = "direct-prob")]
    Direct(Flags),
    /// Exact eigenvalues, with reference weights when a reference is given
    Spectrum(Flags),
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable files, malformed input.
    Input(String),
    /// Valid input that produced no answer.
    NoResult(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::NoResult(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::NoResult(m) => write!(f, "no result: {m}"),
        }
    }
}

impl From<psho_core::PshoError> for CliError {
    fn from(e: psho_core::PshoError) -> Self {
        use psho_core::PshoError as E;
        match e {
            E::Parse { .. }
            | E::QubitOutOfRange { .. }
            | E::OracleLimit { .. }
            | E::InvalidBitstring(_)
            | E::DimensionMismatch { .. }
            | E::InsufficientDepth { .. }
            | E::InsufficientPrecision { .. }
            | E::InvalidArgument(_) => CliError::Input(e.to_string()),
            _ => CliError::NoResult(e.to_string()),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, flags, exec): (&str, Flags, commands::Runner) = match cli.command {
        Command::Ground(f) => ("ground", f, commands::ground),
        Command::Excited(f) => ("excited", f, commands::excited),
        Command::Moments(f) => ("moments", f, commands::moments),
        Command::TrotterError(f) => ("trotter-error", f, commands::trotter_error),
        Command::Direct(f) => ("direct", f, commands::direct),
        Command::Spectrum(f) => ("spectrum", f, commands::spectrum),
    };
    let file = match &flags.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let cfg = flags.run.over(file);
    if let Some(t) = cfg.threads {
        if t == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    let artifact = exec(&cfg)?;
    output::emit(name, &cfg, &artifact)?;
    match artifact.missing {
        Some(why) => Err(CliError::NoResult(why)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("psho: {e}");
            ExitCode::from(e.code())
        }
    }
}
