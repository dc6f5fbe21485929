//! `coevo` command-line front end.

use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coevo_core::commands;
use coevo_core::sim::Mode;
use coevo_core::CoreError;

#[derive(Debug, Parser)]
#[command(name = "coevo", version, about = "Multi-task model co-evolution simulator and retraining planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write report.json, timeline.csv and events.jsonl.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Replay this workload trace instead of generating one.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        mode: Mode,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the generated workload of a seed as a JSONL trace.
    GenTrace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fuse and order the jobs of a snapshot file.
    Plan {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run both modes over a seed range, e.g. `0..9` (inclusive).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = commands::parse_seed_range)]
        seeds: RangeInclusive<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn execute(command: Command) -> Result<(), CoreError> {
    match command {
        Command::Simulate { config, trace, mode, seed, out } => {
            let r = commands::simulate(&config, trace.as_deref(), mode, seed, &out)?;
            println!(
                "{mode} seed {seed}: lowest_acc {:.4} mean_acc {:.4} requests {}/{} gpu_seconds {:.2}",
                r.lowest_acc, r.mean_acc, r.requests_completed, r.request_count, r.gpu_seconds
            );
        }
        Command::GenTrace { config, seed, out } => {
            let n = commands::generate_trace(&config, seed, &out)?;
            println!("wrote {n} events to {}", out.display());
        }
        Command::Plan { snapshot, out } => {
            let groups = commands::plan(&snapshot, &out)?;
            println!("wrote {} groups to {}", groups.len(), out.display());
        }
        Command::Sweep { config, seeds, out } => {
            let rows = commands::sweep(&config, seeds, &out)?;
            for row in &rows {
                println!(
                    "seed {:>4}: coevolve {:.4} independent {:.4} margin {:+.4}",
                    row.seed, row.coevolve_lowest_acc, row.independent_lowest_acc, row.margin
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
