use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coverage_cli::config;
use coverage_cli::run::{self, RunError};

#[derive(Parser)]
#[command(name = "coverage", version, about = "Density-driven multi-agent coverage scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts.
    Run {
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario and print a JSON report.
    Validate {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_INVALID: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Validate { config, seed, out } => {
            let loaded = config::load(&config, seed, out.as_deref());
            let report = config::report(&loaded);
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            if report.valid {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_INVALID)
            }
        }
        Command::Run { config, seed, out } => {
            let (raw, scenario) = match config::load(&config, seed, out.as_deref()) {
                Ok(v) => v,
                Err(findings) => {
                    for f in &findings {
                        eprintln!("invalid config: {f}");
                    }
                    return ExitCode::from(EXIT_INVALID);
                }
            };
            log::info!("running {} into {}", scenario.pipeline.name(), scenario.output.display());
            match run::run(&raw, &scenario) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e @ RunError::Numerical(_)) => {
                    eprintln!("{e}");
                    ExitCode::from(EXIT_NUMERICAL)
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
