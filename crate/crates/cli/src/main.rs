use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fleetfuel::pipeline::{run, Overrides, PipelineConfig, Stage};
use fleetfuel::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "fleetfuel", version, about = "Fleet fuel modelling, anomaly detection and explanations")]
struct Cli {
    /// TOML config file, or a run manifest to repeat.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse the feed into daily records (far.csv).
    Ingest,
    /// Anomaly limits, noise removal, imputation and outlier labels.
    Clean,
    /// Fit the additive model and score it on the held-out split.
    Train,
    /// Per vehicle-day explanations filtered by the business rules.
    Explain,
    /// Model metrics and domain evaluations.
    Evaluate,
    /// Monthly extra fuel and CO2.
    Impact,
    /// Generate a synthetic fleet with planted ground truth.
    Synth,
    /// ingest, clean, train, explain, evaluate and impact in one go.
    Pipeline,
}

impl Command {
    fn stage(&self) -> Stage {
        match self {
            Command::Ingest => Stage::Ingest,
            Command::Clean => Stage::Clean,
            Command::Train => Stage::Train,
            Command::Explain => Stage::Explain,
            Command::Evaluate => Stage::Evaluate,
            Command::Impact => Stage::Impact,
            Command::Synth => Stage::Synth,
            Command::Pipeline => Stage::Pipeline,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Internal(_) => EXIT_INTERNAL,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let config = match &cli.config {
        Some(path) => match PipelineConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(exit_code(&e));
            }
        },
        None => PipelineConfig::default(),
    };
    let overrides = Overrides {
        seed: cli.seed,
        workers: cli.workers,
        out: cli.out.clone(),
    };
    let stage = cli.command.stage();
    match std::panic::catch_unwind(|| run(stage, &config, &overrides)) {
        Ok(Ok(outcome)) => {
            log::info!("wrote {}", outcome.manifest.display());
            ExitCode::SUCCESS
        }
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}
