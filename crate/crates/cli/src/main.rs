use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mixmax_cli::config::load_config;
use mixmax_cli::experiments::run_experiment;
use mixmax_cli::suites::{run_suite, DEFAULT_SEED};

#[derive(Parser)]
#[command(
    name = "mixmax",
    version,
    about = "Group-robust data mixture weights by concave maximization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON config (or a previous run's manifest).
    Run {
        /// Path to the config or manifest file.
        config: PathBuf,
        /// Output directory (overrides MIXMAX_OUT and the config's `output`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for trial execution.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Run a verification suite: gradients, concavity, unbiasedness, oracle.
    Verify {
        suite: String,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> anyhow::Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, workers } => {
            let experiment = load_config(&config)?;
            let out_dir = out
                .or_else(|| std::env::var_os("MIXMAX_OUT").map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from(&experiment.output));
            let outcome = run_experiment(&experiment, &out_dir, workers)?;
            println!(
                "wrote {} ({} rows, {} failed) and {}",
                outcome.csv_path.display(),
                outcome.rows,
                outcome.row_failures,
                outcome.manifest_path.display()
            );
            if let Some(chains) = outcome.chains_path {
                println!("wrote {}", chains.display());
            }
            Ok(true)
        }
        Command::Verify { suite, seed } => run_suite(&suite, seed.unwrap_or(DEFAULT_SEED)),
    }
}
