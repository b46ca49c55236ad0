//! `mmzi`: landscape scans, quantum bounds, working points and adaptive
//! Monte Carlo runs for the three- and four-arm interferometers.
//!
//! Values are resolved in this order, later wins: built-in defaults, the
//! `--config` JSON document, command-line flags.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmzi::commands::{cmd_adaptive, cmd_bounds, cmd_scan, cmd_workpoints, CommandError};
use mmzi::config::{ConfigError, Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "mmzi",
    version,
    about = "Multiphase estimation in multi-arm interferometers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan Tr[F^-1] over the phase square and export the grid (CSV or JSON by extension).
    Scan(Flags),
    /// Print quantum and separable bounds with witness verdicts as JSON.
    Bounds(Flags),
    /// Run the adaptive protocol p times and write a run record.
    Adaptive(Flags),
    /// List the landscape minima with their metrics as JSON.
    Workpoints(Flags),
}

#[derive(Args)]
struct Flags {
    /// JSON config; unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for the adaptive runs.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path (grid file, run record or working-point list).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid points per axis.
    #[arg(long)]
    resolution: Option<usize>,
    /// Fixed phase of the four-arm reference mode.
    #[arg(long)]
    phi0: Option<f64>,
    /// Total photon budget per run.
    #[arg(long)]
    nu: Option<u64>,
    /// Monte Carlo repetitions.
    #[arg(long)]
    reps: Option<usize>,
}

impl Flags {
    fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        config.apply(&Overrides {
            seed: self.seed,
            resolution: self.resolution,
            phi0: self.phi0,
            nu: self.nu,
            repetitions: self.reps,
        })?;
        Ok(config)
    }
}

fn run(command: Command) -> Result<(), CommandError> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match command {
        Command::Scan(flags) => {
            let mut config = flags.resolve()?;
            if flags.out.is_some() {
                config.scan.output = flags.out.clone();
            }
            cmd_scan(&config, &mut out)?;
        }
        Command::Bounds(flags) => {
            cmd_bounds(&flags.resolve()?, &mut out)?;
        }
        Command::Adaptive(flags) => {
            let mut config = flags.resolve()?;
            if flags.out.is_some() {
                config.adaptive.output = flags.out.clone();
            }
            cmd_adaptive(&config, &mut out)?;
        }
        Command::Workpoints(flags) => {
            let config = flags.resolve()?;
            cmd_workpoints(&config, flags.out.as_deref(), &mut out)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
