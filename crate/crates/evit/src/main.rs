use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use evit::cli::{cmd_evaluate, cmd_fit, cmd_generate, cmd_recommend, cmd_simulate_records};
use evit::config::load_run_config;
use evit::Result;

#[derive(Parser)]
#[command(name = "evit", version, about = "Transfer-strategy selection by expected value of information transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (JSON).
    #[arg(long, global = true, default_value = "evit.json")]
    config: PathBuf,

    /// Bound the worker thread count.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Override the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic population.
    Generate,
    /// Run pseudo-transfers and write similarity/quality records.
    SimulateRecords,
    /// Fit per-algorithm quality models from the records.
    Fit,
    /// Rank transfer strategies and write the recommendation.
    Recommend,
    /// Score all strategies against hidden target labels.
    Evaluate,
}

fn run(cli: &Cli) -> Result<()> {
    let out_override = std::env::var_os("EVIT_OUT").map(PathBuf::from);
    let config = load_run_config(&cli.config, cli.seed, out_override)?;
    match cli.command {
        Command::Generate => cmd_generate(&config),
        Command::SimulateRecords => cmd_simulate_records(&config),
        Command::Fit => cmd_fit(&config),
        Command::Recommend => {
            let table = cmd_recommend(&config)?;
            print!("{table}");
            Ok(())
        }
        Command::Evaluate => cmd_evaluate(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.jobs {
        Some(jobs) if jobs > 0 => match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => {
                eprintln!("evit: cannot build worker pool: {e}");
                return ExitCode::from(2);
            }
        },
        _ => run(&cli),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("evit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
