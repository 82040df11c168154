use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eigenbranch_lab::{run_with_threads, ExperimentConfig, LabError};

#[derive(Parser)]
#[command(name = "eigenbranch-lab", version, about = "Eigenbranch and Weyl remainder experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Parse and validate a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<(), LabError> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            println!("{}: ok ({})", config.display(), cfg.experiment.name());
            Ok(())
        }
        Command::Run {
            config,
            out,
            seed,
            threads,
        } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let out = out
                .or_else(|| cfg.output.clone())
                .unwrap_or_else(|| PathBuf::from(format!("runs/{}", cfg.experiment.name())));
            let report = run_with_threads(&cfg, &out, threads)?;
            for c in &report.checks {
                println!(
                    "{} {:<28} measured {:.6e} (tolerance {:.3e})  {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.measured,
                    c.tolerance,
                    c.detail
                );
            }
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
