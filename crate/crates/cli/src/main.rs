mod commands;
mod manifest;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Outcome;

/// Depot siting, fleet sizing and daily routing under random demand.
#[derive(Parser, Debug)]
#[command(name = "fleetroute", version, about, propagate_version = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Worker threads for scenario, pricing and day parallelism (default:
    /// available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log progress; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Where to write the run manifest (default: next to the output, with
    /// a `.manifest.json` suffix).
    #[arg(long, global = true)]
    pub manifest: Option<std::path::PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic problem file (and optionally a demand history).
    Generate(commands::GenerateArgs),
    /// Fit a demand model to an order history CSV.
    Fit(commands::FitArgs),
    /// Simulate demand days from a fitted model.
    Simulate(commands::SimulateArgs),
    /// Pick conservative scenarios from a simulated sample.
    SelectScenarios(commands::SelectArgs),
    /// Choose depots and fleet sizes over a set of scenarios.
    Solve(commands::SolveArgs),
    /// Evaluate a solution on observed or simulated days.
    Evaluate(commands::EvaluateArgs),
    /// Route a single day with a solution's depots and vehicles.
    RouteDay(commands::RouteDayArgs),
    /// Compare two evaluation reports day by day.
    Compare(commands::CompareArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("FLEETROUTE_LOG")
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot set up {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial(why)) => {
            eprintln!("warning: {why}; the partial result was written");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
