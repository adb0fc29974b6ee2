//! `timeop`: configure a weight, grid and constants, run named check suites
//! against the weighted time operator, and emit machine- and human-readable
//! reports.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    /// Unparseable or invalid configuration (exit 2).
    Config(String),
    /// Filesystem failure (exit 3).
    Io(String),
    /// A check could not be evaluated, e.g. a margin violation (exit 1).
    Check(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Io(msg) => write!(f, "io error: {msg}"),
            CliError::Check(msg) => write!(f, "check error: {msg}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "timeop",
    version,
    about = "Numerical checks for a self-adjoint time operator on weighted energy space"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// JSON configuration file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Registry weight name (flat, shifted_gaussian, sinusoidal,
    /// gaussian_violating).
    #[arg(long)]
    weight: Option<String>,

    /// Weight parameter as key=value; repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,

    /// Two-column E,w CSV defining the weight by samples.
    #[arg(long, conflicts_with = "weight")]
    samples_file: Option<PathBuf>,

    /// Grid half-width L.
    #[arg(long)]
    half_width: Option<f64>,

    /// Grid node count N (odd, >= 3).
    #[arg(long)]
    nodes: Option<usize>,

    #[arg(long)]
    hbar: Option<f64>,

    /// Finite-difference stencil order (2 or 4).
    #[arg(long)]
    order: Option<usize>,

    /// Operator assembly: conjugated or direct.
    #[arg(long)]
    construction: Option<String>,

    /// Output directory for reports and CSV files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the weight constraints (positivity, smoothness proxy, bounds).
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the named residual checks and write a verification report.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated list restricting the suite to these checks.
        #[arg(long, value_delimiter = ',')]
        checks: Option<Vec<String>>,
        /// Comma-separated list of checks to skip.
        #[arg(long, value_delimiter = ',')]
        skip: Option<Vec<String>>,
        /// Run the suite even if the weight fails validation.
        #[arg(long)]
        force: bool,
    },
    /// Shift a wavefunction through the unitary group and report residuals.
    Propagate {
        #[command(flatten)]
        common: CommonArgs,
        /// Energy shift (must be node-aligned unless --interpolate).
        #[arg(long)]
        sigma: Option<f64>,
        /// Read the input wavefunction from a CSV file instead of sampling
        /// the configured test function.
        #[arg(long)]
        input_csv: Option<PathBuf>,
        /// Allow unaligned shifts via cubic interpolation.
        #[arg(long)]
        interpolate: bool,
    },
    /// Write the dense operator matrix as CSV plus JSON metadata.
    ExportMatrix {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn parse_params(raw: &[String]) -> Result<Vec<(String, f64)>, CliError> {
    raw.iter()
        .map(|item| {
            let (key, value) = item.split_once('=').ok_or_else(|| {
                CliError::Config(format!("--param expects KEY=VALUE, got '{item}'"))
            })?;
            let value: f64 = value
                .parse()
                .map_err(|e| CliError::Config(format!("--param {key}: {e}")))?;
            Ok((key.to_string(), value))
        })
        .collect()
}

/// Precedence: flags > TIMEOP_OUTPUT_DIR > config file > defaults.
fn resolve_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    config.apply_env();

    if common.weight.is_some() || common.samples_file.is_some() {
        config.weight.name = common.weight.clone();
        config.weight.samples_file = common.samples_file.clone();
        config.weight.params.clear();
    }
    for (key, value) in parse_params(&common.params)? {
        config.weight.params.insert(key, value);
    }
    if let Some(half_width) = common.half_width {
        config.half_width = half_width;
    }
    if let Some(nodes) = common.nodes {
        config.nodes = nodes;
    }
    if let Some(hbar) = common.hbar {
        config.hbar = hbar;
    }
    if let Some(order) = common.order {
        config.order = order;
    }
    if let Some(construction) = &common.construction {
        config.construction = construction.clone();
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn run() -> Result<i32, CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { common } => {
            let config = resolve_config(&common)?;
            commands::cmd_validate(&config)
        }
        Command::Verify {
            common,
            checks,
            skip,
            force,
        } => {
            let mut config = resolve_config(&common)?;
            if checks.is_some() {
                config.checks = checks;
            }
            if let Some(skip) = skip {
                config.skip = skip;
            }
            commands::cmd_verify(&config, force)
        }
        Command::Propagate {
            common,
            sigma,
            input_csv,
            interpolate,
        } => {
            let mut config = resolve_config(&common)?;
            if let Some(sigma) = sigma {
                config.sigma = sigma;
            }
            commands::cmd_propagate(&config, input_csv.as_deref(), interpolate)
        }
        Command::ExportMatrix { common } => {
            let config = resolve_config(&common)?;
            commands::cmd_export_matrix(&config)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
