//! Command line front end: `run` executes a configured sweep, `validate`
//! checks a config and prints its resolved form.
//!
//! Exit codes: 0 on success, 1 when the config (or invocation) is invalid,
//! 2 when a validated experiment fails at runtime.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedstale::config::{parse_config, Overrides};
use fedstale::runner::run_experiment;

#[derive(Parser)]
#[command(name = "fedstale", version, about = "Staleness-aware asynchronous FL simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment sweep described by a config file.
    Run {
        /// Path to a key = value config file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory override.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated metric list override.
        #[arg(long)]
        metrics: Option<String>,
        /// Comma-separated scenario list override.
        #[arg(long)]
        scenarios: Option<String>,
        /// Seed repetition count override.
        #[arg(long)]
        seeds: Option<u32>,
        /// Virtual time budget override, in seconds.
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Parse and validate a config file without running it.
    Validate {
        /// Path to a key = value config file.
        #[arg(long)]
        config: PathBuf,
    },
}

const VALIDATION_FAILURE: u8 = 1;
const RUNTIME_FAILURE: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests land here too; only real usage
            // errors count as validation failures.
            let failed = e.use_stderr();
            let _ = e.print();
            return if failed { ExitCode::from(VALIDATION_FAILURE) } else { ExitCode::SUCCESS };
        }
    };

    match cli.command {
        Command::Validate { config } => match parse_config(&config) {
            Ok(cfg) => {
                print!("{}", cfg.resolved_text());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(VALIDATION_FAILURE)
            }
        },
        Command::Run { config, out, metrics, scenarios, seeds, budget } => {
            let mut cfg = match parse_config(&config) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(VALIDATION_FAILURE);
                }
            };
            let overrides = Overrides { out, metrics, scenarios, seeds, budget };
            if let Err(e) = cfg.apply_overrides(&overrides) {
                eprintln!("error: {e}");
                return ExitCode::from(VALIDATION_FAILURE);
            }
            match run_experiment(&cfg) {
                Ok(output) => {
                    println!("wrote {}", output.curves_path.display());
                    println!("wrote {}", output.summary_path.display());
                    println!("wrote {}", output.config_path.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(RUNTIME_FAILURE)
                }
            }
        }
    }
}
