//! `decspray`: experiments and file round-trips for decentralized erasure codes.

mod config;
mod experiments;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::Failure;

#[derive(Debug, Parser)]
#[command(name = "decspray", version, about = "Decentralized erasure codes over GF(2^u)")]
struct Cli {
    /// JSON file with default values for the subcommand's flags; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo decode-failure estimate for one code configuration.
    Simulate(experiments::SimulateArgs),
    /// Decode-failure rate at a fixed per-node degree.
    Converse(experiments::ConverseArgs),
    /// Draws needed to hit every storage node.
    Coverage(experiments::CoverageArgs),
    /// Largest storage-node load after throwing balls into bins.
    Maxload(experiments::MaxloadArgs),
    /// Grid network with storage on the perimeter; hop counts per trial.
    Perimetric(experiments::PerimetricArgs),
    /// Sufficient degree constant for a redundancy ratio.
    Minc(experiments::MincArgs),
    /// Encode k equal-length files into n storage packets.
    Encode(files::EncodeArgs),
    /// Recover the original files from k storage packets.
    Decode(files::DecodeArgs),
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("DECSPRAY_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::Usage(format!("DECSPRAY_THREADS must be a non-negative integer (got {raw:?})")))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Other(e.into()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    let file = config::load(cli.config.as_deref())?;
    let file = file.as_ref();
    match cli.command {
        Command::Simulate(a) => experiments::simulate(config::merge(&a, file)?),
        Command::Converse(a) => experiments::converse(config::merge(&a, file)?),
        Command::Coverage(a) => experiments::coverage(config::merge(&a, file)?),
        Command::Maxload(a) => experiments::maxload(config::merge(&a, file)?),
        Command::Perimetric(a) => experiments::perimetric(config::merge(&a, file)?),
        Command::Minc(a) => experiments::minc(config::merge(&a, file)?),
        Command::Encode(a) => files::encode(config::merge(&a, file)?),
        Command::Decode(a) => files::decode(config::merge(&a, file)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("decspray: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
