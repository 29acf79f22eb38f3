use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod manifest;

use commands::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "heatkernel",
    version,
    about = "Heat-kernel random matrix experiments on U(N) and GL(N)",
    args_conflicts_with_subcommands = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Moments ν_n(t) of the limit law as JSON.
    Moments(commands::MomentsArgs),
    /// Exact expectation of a trace polynomial under the heat flow.
    Flow(commands::FlowArgs),
    /// Monte-Carlo ensemble: eigenvalue CSV and observable summary JSON.
    Simulate(commands::SimulateArgs),
    /// Density of the limit law on a grid as CSV.
    Density(commands::DensityArgs),
    /// Monte-Carlo variance of an observable across matrix sizes.
    VarianceScan(commands::VarianceScanArgs),
    /// Finite-difference check of the intertwining formula.
    CheckIntertwine(commands::CheckIntertwineArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Moments(a) => commands::moments(a),
        Command::Flow(a) => commands::flow(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Density(a) => commands::density(a),
        Command::VarianceScan(a) => commands::variance_scan(a),
        Command::CheckIntertwine(a) => commands::check_intertwine(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Core(ref inner) if inner.is_precondition() => ExitCode::from(2),
                CliError::Usage(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
