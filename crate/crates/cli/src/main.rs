use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stackbess_cli::{run, Stage};

/// Day-ahead scheduling and closed-loop control of a behind-the-meter
/// battery stacking local services with aFRR.
///
/// Exit codes: 0 success, 1 runtime failure, 2 configuration or input
/// error, 3 no feasible schedule.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,

    /// Overrides the configured RNG seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Log progress to stderr.
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Net-load forecast from similar days and a PV forecast.
    Forecast(Common),
    /// Day-ahead schedule from the forecast.
    Schedule(Common),
    /// 30-s closed loop against the schedule.
    Simulate(Common),
    /// Bill, revenue and tracking report of the simulated day.
    Report(Common),
}

impl Command {
    fn split(self) -> (Stage, Common) {
        match self {
            Command::Forecast(c) => (Stage::Forecast, c),
            Command::Schedule(c) => (Stage::Schedule, c),
            Command::Simulate(c) => (Stage::Simulate, c),
            Command::Report(c) => (Stage::Report, c),
        }
    }
}

fn main() -> ExitCode {
    let (stage, cli) = Cli::parse().command.split();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .format_timestamp(None)
        .init();
    match run(&cli.config, stage, cli.seed, cli.out.as_deref()) {
        Ok(files) => {
            for f in files {
                log::info!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            ExitCode::from(failure.exit_code())
        }
    }
}
