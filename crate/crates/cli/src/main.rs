use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod output;

/// Bell violations from aggregate detector intensities.
#[derive(Debug, Parser)]
#[command(name = "bellint", version, about)]
pub struct Cli {
    /// Read defaults from a `key = value` file; flags on the command line win.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// S_N for n pairs per run.
    Sn(SnArgs),
    /// Optimized (or reference-setting) S_N over a grid of visibilities and n.
    Sweep(SweepArgs),
    /// Critical detection efficiency for each n.
    Etamin(EtaminArgs),
    /// Monte Carlo of the pairing-erasure experiment.
    Simulate(SimulateArgs),
    /// Large-n limit of S_N at the reference settings.
    Asymptote(AsymptoteArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SettingsSource {
    /// The fixed reference settings.
    Paper,
    /// Multi-start minimization over all four measurement directions.
    Optimize,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SnArgs {
    /// Pairs per run.
    #[arg(long)]
    pub n: usize,
    /// Werner visibility.
    #[arg(long, default_value_t = 1.0)]
    pub v: f64,
    /// Detection efficiency.
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    #[arg(long, value_enum, default_value_t = SettingsSource::Paper)]
    pub settings: SettingsSource,
    /// Eight angles theta1,phi1,...,theta4,phi4 (A1, A2, B1, B2); overrides --settings.
    #[arg(long, value_delimiter = ',')]
    pub angles: Option<Vec<f64>>,
    /// Optimizer starts (with --settings optimize).
    #[arg(long, default_value_t = 32)]
    pub starts: usize,
    /// Optimizer master seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write a JSON summary here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SweepArgs {
    /// Largest n in the sweep.
    #[arg(long)]
    pub n_max: usize,
    /// Visibilities, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.95,0.97,0.99,1")]
    pub v: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    /// Optimize the settings per cell instead of using the reference settings.
    #[arg(long)]
    pub optimize: bool,
    #[arg(long, default_value_t = 32)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest n-max accepted.
    #[arg(long, default_value_t = 24)]
    pub n_cap: usize,
    /// CSV output path; CSV goes to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EtaminArgs {
    /// Pair counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub v: f64,
    /// Bisection tolerance (at least 1e-10).
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// CSV output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SimulateArgs {
    /// Pairs per run (at most 15).
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub v: f64,
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    #[arg(long, default_value_t = 100_000)]
    pub runs: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Keep only runs whose photon pairing is ambiguous.
    #[arg(long)]
    pub ambiguity: bool,
    /// Alice's path delays in units of tau, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "6,7,8,9,10")]
    pub delays: Vec<u32>,
    /// Pulse period.
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Bootstrap resamples for the standard error.
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    /// Write the summary JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write one JSON line per run here.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct AsymptoteArgs {
    #[arg(long, default_value_t = 1.0)]
    pub v: f64,
}

/// Exit status contract: 0 success, 1 usage error, 2 numerical failure.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<bellint::Error> for Failure {
    fn from(err: bellint::Error) -> Self {
        match err {
            bellint::Error::Domain(_) | bellint::Error::Size(_) => Failure::Usage(err.to_string()),
            _ => Failure::Numerical(err.to_string()),
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("BELLINT_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::Usage(format!("BELLINT_THREADS must be a count, got `{raw}`")))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot configure thread pool: {e}")))?;
    }
    Ok(())
}

fn run() -> Result<(), Failure> {
    let args = config::expand_args(std::env::args().collect()).map_err(Failure::Usage)?;
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) if !err.use_stderr() => {
            print!("{err}");
            return Ok(());
        }
        Err(err) => {
            let rendered = err.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            return Err(Failure::Usage(first.trim_start_matches("error: ").to_string()));
        }
    };
    configure_threads()?;
    match cli.command {
        Command::Sn(args) => commands::run_sn(&args),
        Command::Sweep(args) => commands::run_sweep(&args),
        Command::Etamin(args) => commands::run_etamin(&args),
        Command::Simulate(args) => commands::run_simulate(&args),
        Command::Asymptote(args) => commands::run_asymptote(&args),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}
