use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Every knob of a run. Flags override the optional TOML file field by field,
/// and the merged value is echoed into each artifact.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    /// Hamiltonian file in the Pauli-string text format
    #[arg(long)]
    pub ham: Option<PathBuf>,
    /// Reference bitstring(s), qubit 0 first; comma separated or repeated
    #[arg(long = "ref", value_delimiter = ',')]
    pub refs: Option<Vec<String>>,
    /// Single evolution time for moments and direct
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub tau_start: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub tau_stop: Option<f64>,
    #[arg(long)]
    pub tau_steps: Option<usize>,
    /// Powers, ascending, comma separated
    #[arg(long, value_delimiter = ',')]
    pub powers: Option<Vec<usize>>,
    /// Trotter step; a comma-separated list for trotter-error
    #[arg(long, value_delimiter = ',')]
    pub delta: Option<Vec<f64>>,
    /// exact | trotter
    #[arg(long)]
    pub mode: Option<String>,
    /// exact | quantize:D | shots:N:SEED | shots:N:SEED:quantize:D
    #[arg(long)]
    pub noise: Option<String>,
    /// Constant added to the Hamiltonian before filtering
    #[arg(long, allow_hyphen_values = true)]
    pub offset: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of post-selection rounds for direct
    #[arg(long)]
    pub n: Option<usize>,
    /// Monte-Carlo trials for direct
    #[arg(long)]
    pub trials: Option<u64>,
    /// Ground energy for excited; searched for when absent
    #[arg(long, allow_hyphen_values = true)]
    pub e0: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    /// Fields set in `self` win over `base`.
    pub fn over(self, base: RunConfig) -> RunConfig {
        RunConfig {
            ham: self.ham.or(base.ham),
            refs: self.refs.or(base.refs),
            tau: self.tau.or(base.tau),
            tau_start: self.tau_start.or(base.tau_start),
            tau_stop: self.tau_stop.or(base.tau_stop),
            tau_steps: self.tau_steps.or(base.tau_steps),
            powers: self.powers.or(base.powers),
            delta: self.delta.or(base.delta),
            mode: self.mode.or(base.mode),
            noise: self.noise.or(base.noise),
            offset: self.offset.or(base.offset),
            seed: self.seed.or(base.seed),
            n: self.n.or(base.n),
            trials: self.trials.or(base.trials),
            e0: self.e0.or(base.e0),
            out: self.out.or(base.out),
            format: self.format.or(base.format),
            threads: self.threads.or(base.threads),
        }
    }
}
