mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "leon", version, about = "Conditional black-box optimization under surrogate shift")]
struct Cli {
    /// Worker threads for cohort runs; 1 runs sequentially.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured method on a target cohort.
    Run {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Repeat the cohort for each surrogate/oracle mixture weight.
    AblateShift {
        #[arg(short, long)]
        config: PathBuf,
        /// Comma-separated weights in [0, 1], e.g. `0,0.5,1`.
        #[arg(long, value_parser = config::parse_weights)]
        weights: Option<config::Weights>,
    },
    /// Run the brute-force verification checks.
    Verify,
    /// Print a task definition as JSON.
    DumpTask {
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { commands::EXIT_CONFIG as u8 } else { 0 });
        }
    };
    if cli.jobs == 0 {
        eprintln!("error: --jobs must be >= 1");
        return ExitCode::from(commands::EXIT_CONFIG as u8);
    }
    let outcome = match cli.command {
        Command::Run { config } => commands::run(&config, cli.jobs),
        Command::AblateShift { config, weights } => commands::ablate_shift(&config, weights.map(|w| w.0), cli.jobs),
        Command::Verify => commands::verify(),
        Command::DumpTask { task, seed } => commands::dump_task(&task, seed),
    };
    match outcome {
        Ok(()) => ExitCode::from(commands::EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code() as u8)
        }
    }
}
