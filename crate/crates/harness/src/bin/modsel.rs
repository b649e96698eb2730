use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use modsel_harness::run::{cmd_run, load_config, RunOptions};
use modsel_harness::{report, selfcheck, HarnessError};

#[derive(Debug, Parser)]
#[command(
    name = "modsel",
    version,
    about = "Online model selection over tabular RL agents"
)]
struct Cli {
    /// Override the master seed of the experiment.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (run) instead of the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment file or a bundled experiment by name.
    Run { config: String },
    /// Summarize the logs of a finished run directory.
    Report { dir: PathBuf },
    /// Check the structural invariants.
    Selfcheck,
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config } => {
            let config = load_config(&config)?;
            let options = RunOptions {
                seed: cli.seed,
                out: cli.out,
            };
            let outcome = cmd_run(&config, &options)?;
            if !cli.quiet {
                println!("wrote {}", outcome.out_dir.display());
            }
            if outcome.failures.is_empty() {
                Ok(())
            } else {
                Err(HarnessError::Runtime(format!(
                    "{} run(s) failed: {}",
                    outcome.failures.len(),
                    outcome.failures.join("; ")
                )))
            }
        }
        Command::Report { dir } => {
            let table = report::cmd_report(&dir)?;
            if !cli.quiet {
                print!("{table}");
            }
            Ok(())
        }
        Command::Selfcheck => {
            let results = selfcheck::run_selfcheck()?;
            let failed: Vec<&str> = results
                .iter()
                .filter(|r| !r.passed)
                .map(|r| r.name)
                .collect();
            if !cli.quiet || !failed.is_empty() {
                for r in &results {
                    println!("{r}");
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(HarnessError::Runtime(format!(
                    "invariant violated: {}",
                    failed.join(", ")
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
