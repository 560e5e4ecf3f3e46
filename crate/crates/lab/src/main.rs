use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gwl_lab::config::{ExperimentConfig, EXPERIMENTS};
use gwl_lab::{run, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "gwl", version, about = "Experiments for the degenerate wave study")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// List the registered experiments.
    List,
    /// Check a config file without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for (name, about) in EXPERIMENTS {
                println!("{name:<18} {about}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match ExperimentConfig::load(&config) {
            Ok(cfg) => {
                println!("OK {}: {}", config.display(), cfg.experiment);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{}: {e}", config.display());
                ExitCode::from(EXIT_CONFIG)
            }
        },
        Command::Run { config } => match run(&config) {
            Ok((cfg, outcome)) => {
                for line in outcome.lines(&cfg.experiment) {
                    println!("{line}");
                }
                ExitCode::from(outcome.exit_code())
            }
            Err(e) => {
                eprintln!("{}: {e}", config.display());
                ExitCode::from(e.exit_code())
            }
        },
    }
}
