mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use seld_forge::{Error, ErrorKind};

/// Synthetic sound event localization and detection toolkit.
#[derive(Debug, Parser)]
#[command(name = "seld-forge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// TOML or JSON (by `.json` extension) configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dual-array dataset.
    Synth(Common),
    /// Compute feature files for every clip of a dataset.
    Extract(Common),
    /// Write augmented feature and label files.
    Augment(Common),
    /// Train the track-wise network.
    Train(Common),
    /// Run a trained network over feature files.
    Predict(Common),
    /// Combine several models' predictions.
    Ensemble(Common),
    /// Score predictions against a dataset's references.
    Eval(Common),
    /// Compare single, averaged and track-wise ensembles on permuted predictors.
    ReproEnsembleGap(Common),
}

fn run(cmd: Command) -> Result<(), Error> {
    use commands::*;
    macro_rules! go {
        ($c:expr, $f:ident) => {{
            let c = $c;
            $f(config::load(&c.config)?, c.seed, c.out)
        }};
    }
    match cmd {
        Command::Synth(c) => go!(c, synth),
        Command::Extract(c) => go!(c, extract),
        Command::Augment(c) => go!(c, augment),
        Command::Train(c) => go!(c, train_cmd),
        Command::Predict(c) => go!(c, predict),
        Command::Ensemble(c) => go!(c, ensemble),
        Command::Eval(c) => go!(c, eval),
        Command::ReproEnsembleGap(c) => go!(c, repro_ensemble_gap),
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("SELD_FORGE_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| Error::Config(format!("SELD_FORGE_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::Config(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match configure_threads().and_then(|_| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numerical => 4,
            })
        }
    }
}
