//! `metasim`: run reconfigurable-surface experiments from a JSON scenario
//! file. Every command reads `--config`, writes its artifacts under
//! `--out`, and is deterministic for a fixed config and seed. On any
//! failure the binary prints a one-line JSON error object to stderr and
//! exits nonzero.
//!
//! Flags can also come from the environment with the `METASIM_` prefix
//! (`METASIM_SEED`, `METASIM_OUT`, `METASIM_THREADS`, `METASIM_STRICT`);
//! explicit flags win over the environment.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use metasim_cli::run::{run, Command, RunOptions};
use metasim_cli::{config::load_scenario, CliError};

#[derive(Parser)]
#[command(
    name = "metasim",
    version,
    about = "Reconfigurable-surface link simulation and optimization runner"
)]
struct Cli {
    /// Scenario file (strict JSON, `$schema_version` required).
    #[arg(long, global = true, env = "METASIM_CONFIG")]
    config: Option<PathBuf>,

    /// Master seed; overrides the config's `seeds` list.
    #[arg(long, global = true, env = "METASIM_SEED")]
    seed: Option<u64>,

    /// Output directory for JSON and CSV artifacts.
    #[arg(long, global = true, env = "METASIM_OUT")]
    out: Option<PathBuf>,

    /// Worker threads for sweeps; library default when omitted.
    #[arg(long, global = true, env = "METASIM_THREADS")]
    threads: Option<usize>,

    /// Refuse implicit defaults: seed, output directory, and the section
    /// a command consumes must be stated explicitly.
    #[arg(long, global = true, env = "METASIM_STRICT")]
    strict: bool,

    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Metrics for the unoptimized surface state.
    Simulate,
    /// Tune the surface (and precoder, where the architecture has one).
    Optimize,
    /// Pilot-based channel estimation against a simulated ground truth.
    Estimate,
    /// Design a periodic element modulation serving carrier and harmonic.
    Waveform,
    /// Sum rate over the elements-per-layer and layer-count grid.
    Sweep,
    /// Communication/sensing trade-off over the weight grid.
    Pareto,
}

impl CliCommand {
    fn to_command(&self) -> Command {
        match self {
            CliCommand::Simulate => Command::Simulate,
            CliCommand::Optimize => Command::Optimize,
            CliCommand::Estimate => Command::Estimate,
            CliCommand::Waveform => Command::Waveform,
            CliCommand::Sweep => Command::Sweep,
            CliCommand::Pareto => Command::Pareto,
        }
    }
}

fn execute(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let config_path = cli.config.as_ref().ok_or_else(|| CliError::Validation {
        issues: vec!["--config: a scenario file is required".into()],
    })?;
    let cfg = load_scenario(config_path)?;
    let opts = RunOptions {
        seed: cli.seed,
        out: cli.out.clone(),
        threads: cli.threads,
        strict: cli.strict,
    };
    let outcome = run(cli.command.to_command(), &cfg, &opts)?;
    Ok(outcome.artifacts)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(artifacts) => {
            for path in artifacts {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
