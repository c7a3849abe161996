mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConfigError, RawConfig, RunConfig};

#[derive(Parser)]
#[command(name = "gdnet", version, about = "Gated-dilation classifier on synthetic blob images")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat key = value file; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Dataset file written by gen-data.
    #[arg(long, global = true, value_name = "PATH")]
    data: Option<PathBuf>,
    /// Weight file for eval and probe (default: OUT/weights.bin).
    #[arg(long, global = true, value_name = "PATH")]
    weights: Option<PathBuf>,
    /// Normalization file (default: norm.csv beside the weights).
    #[arg(long, global = true, value_name = "PATH")]
    norm: Option<PathBuf>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    /// Fold count for cv.
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    n_samples: Option<usize>,
    /// Any config key, e.g. --set widths=8,8,16,16,16. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate a synthetic dataset.
    GenData,
    /// Train on a dataset and save weights.
    Train,
    /// Score a dataset with saved weights.
    Eval,
    /// Stratified k-fold cross-validation.
    Cv,
    /// Attention-signal and size-bucket probes of saved weights.
    Probe,
    /// Finite-difference gradient checks.
    Gradcheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Cv => "cv",
            Command::Probe => "probe",
            Command::Gradcheck => "gradcheck",
        }
    }
}

/// Process exit codes.
pub mod exit {
    pub const RUNTIME: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    pub const FORMAT: u8 = 4;
    pub const GRADCHECK: u8 = 5;
}

pub enum Failure {
    Config(String),
    Run(gdnet::Error),
    Gradcheck(String),
}

impl From<gdnet::Error> for Failure {
    fn from(e: gdnet::Error) -> Self {
        Failure::Run(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.into())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        use gdnet::Error as E;
        match self {
            Failure::Config(_) => exit::USAGE,
            Failure::Gradcheck(_) => exit::GRADCHECK,
            Failure::Run(E::Io(_)) => exit::IO,
            Failure::Run(e) if e.is_format_error() => exit::FORMAT,
            Failure::Run(E::InvalidShape(_) | E::ChannelMismatch(_)) => exit::FORMAT,
            Failure::Run(E::InfeasibleSpec(_) | E::InvalidArgument(_) | E::ClassTooSmall { .. }) => {
                exit::USAGE
            }
            Failure::Run(_) => exit::RUNTIME,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Config(m) => format!("config: {m}"),
            Failure::Run(e) => e.to_string(),
            Failure::Gradcheck(m) => format!("gradcheck failed: {m}"),
        }
    }
}

fn layered(cli: &Cli) -> Result<RawConfig, Failure> {
    let mut raw = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Run(gdnet::Error::Io(std::io::Error::new(
                    e.kind(),
                    format!("{}: {e}", path.display()),
                ))))?;
            RawConfig::parse(&text)?
        }
        None => RawConfig::default(),
    };
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    let flags = [
        ("seed", cli.seed.map(|v| v.to_string())),
        ("out", path(&cli.out)),
        ("data", path(&cli.data)),
        ("weights", path(&cli.weights)),
        ("norm", path(&cli.norm)),
        ("epochs", cli.epochs.map(|v| v.to_string())),
        ("batch_size", cli.batch_size.map(|v| v.to_string())),
        ("k", cli.k.map(|v| v.to_string())),
        ("n_samples", cli.n_samples.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            raw.set(key, v)?;
        }
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        raw.set(k.trim(), v.trim())?;
    }
    Ok(raw)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let raw = layered(cli)?;
    let config = RunConfig::resolve(cli.command.name(), &raw)?;
    let mut out = commands::Outputs::create(&config.out)?;
    out.write("resolved_config.txt", config.echo())?;
    match cli.command {
        Command::GenData => commands::gen_data(&config, &mut out),
        Command::Train => commands::train(&config, &mut out),
        Command::Eval => commands::eval(&config, &mut out),
        Command::Cv => commands::cv(&config, &mut out),
        Command::Probe => commands::probe(&config, &mut out),
        Command::Gradcheck => commands::gradcheck(&config, &mut out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("gdnet {}: {}", cli.command.name(), f.message());
            ExitCode::from(f.code())
        }
    }
}
