use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use fbcontrol::io::{read_json, write_artifacts, SavedState, Summary};
use fbcontrol::{check_state, run_experiment, Example, ExperimentSpec};
use fbcontrol_core::{PenaltyConfig, Regularization};

#[derive(Parser)]
#[command(
    name = "fbcontrol",
    version,
    about = "Penalty homotopy for optimal control with complementarity constraints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one of the benchmark examples and write its artifacts.
    Solve {
        /// Benchmark example: 1, 2 or 3.
        #[arg(long)]
        example: Example,
        /// Grid cells per side.
        #[arg(long, default_value_t = 80)]
        nx: usize,
        /// H¹ control cost.
        #[arg(long, default_value_t = 1e-8)]
        epsilon: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma0: f64,
        #[arg(long, default_value_t = 10.0)]
        sigma_factor: f64,
        #[arg(long, default_value_t = 1e12)]
        sigma_max: f64,
        /// Stop once the controls move less than this between penalties.
        #[arg(long, default_value_t = 1e-6)]
        eps_stop: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the stationarity test on a saved state.json.
    Check {
        #[arg(long)]
        state: PathBuf,
        /// Activity threshold; defaults to 1e-6 (1 + max|u⁰| + max|v⁰|).
        #[arg(long)]
        tau_act: Option<f64>,
    },
}

fn print_summary(s: &Summary) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(s)?);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Solve {
            example,
            nx,
            epsilon,
            sigma0,
            sigma_factor,
            sigma_max,
            eps_stop,
            out,
        } => {
            let spec = ExperimentSpec {
                example,
                nx,
                config: PenaltyConfig {
                    regularization: Regularization {
                        epsilon,
                        ..Regularization::default()
                    },
                    sigma0,
                    sigma_factor,
                    sigma_max,
                    eps_stop,
                    ..PenaltyConfig::default()
                },
            };
            let result = run_experiment(&spec)?;
            let written = write_artifacts(&result, &out).with_context(|| format!("writing to {}", out.display()))?;
            for p in &written {
                log::info!("wrote {}", p.display());
            }
            print_summary(&Summary::from_result(&result))?;
            if !result.outcome.converged() {
                log::warn!(
                    "homotopy stopped without convergence: {:?}",
                    result.outcome.trace.status
                );
            }
            Ok(result.outcome.converged())
        }
        Command::Check { state, tau_act } => {
            let saved: SavedState = read_json(&state)?;
            let checked = check_state(&saved, tau_act)?;
            let counts = checked.report.counts;
            log::info!(
                "{} positive, {} zero, {} negative pairs; tau_act {:e}",
                counts.positive,
                counts.zero,
                counts.negative,
                checked.report.tau_act
            );
            print_summary(&Summary::new(
                checked.example,
                checked.nx,
                checked.complementarity,
                &checked.report,
                0,
            ))?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
