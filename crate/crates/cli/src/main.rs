use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stackmf_cli::presets;
use stackmf_cli::runner::{plan_summary, resolve_threads};
use stackmf_cli::{load_config, run_experiment, save_config, CliError, RunOptions};

#[derive(Parser)]
#[command(name = "stackmf", version, about = "Delayed Stackelberg games and their mean-field limits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a scenario file.
    Run {
        config: PathBuf,
        /// Worker threads (falls back to STACKMF_THREADS, then all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory that receives the result files.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Validate and print the plan without simulating.
        #[arg(long)]
        dry_run: bool,
    },
    /// Check a scenario file and list every problem.
    Validate { config: PathBuf },
    /// Built-in scenarios.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    /// Write a preset as a scenario file.
    Write { name: String, path: PathBuf },
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn real_main(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run { config, threads, seed, out, dry_run } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if dry_run {
                print!("{}", plan_summary(&cfg));
                return Ok(0);
            }
            let opts = RunOptions { threads: resolve_threads(threads), seed: None, out_dir: out };
            let outcome = run_experiment(&cfg, &opts)?;
            for c in &outcome.checks {
                println!("{:<28} {:<12} {}", c.name, c.verdict.as_str(), c.detail);
            }
            match &outcome.reason {
                Some(r) => println!("status: {:?} ({r})", outcome.status),
                None => println!("status: {:?}", outcome.status),
            }
            if outcome.out_dir.is_none() {
                print!("{}", outcome.csv);
            }
            Ok(outcome.exit_code())
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            println!("{}: ok ({})", config.display(), cfg.experiment.name());
            Ok(0)
        }
        Command::Presets { action: PresetAction::List } => {
            for (name, about) in presets::PRESETS {
                println!("{name:<24} {about}");
            }
            Ok(0)
        }
        Command::Presets { action: PresetAction::Write { name, path } } => {
            save_config(&presets::preset(&name)?, &path)?;
            Ok(0)
        }
    }
}
