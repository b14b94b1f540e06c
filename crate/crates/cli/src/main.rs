//! Command-line driver for the distillation laboratory.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error,
//! 4 verification failure.

mod commands;
mod config;
mod report;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use distillab_core::Error;

#[derive(Parser)]
#[command(name = "distillab", version, about = "Desk-scale knowledge distillation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel runs within sweeps/grids (each run stays deterministic).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Added to every seed in the config's seed list.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Train a teacher (optionally on a shortened schedule) and checkpoint it.
    TrainTeacher(RunArgs),
    /// Run the configured experiment pipeline and write its record.
    Distill(RunArgs),
    /// Render CSV/SVG reports from a record directory.
    Report {
        /// The experiment output directory.
        record: PathBuf,
        /// One of: sweep_curve, train_curve, eskd_table, sequential_table.
        #[arg(long)]
        kind: String,
        /// Where to write the report files (defaults to the record dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in gradient, loss and metric checks.
    Verify {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_VERIFY: u8 = 4;

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Parameter(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn run_with_config(
    args: &RunArgs,
    f: impl FnOnce(&RunConfig, &commands::CommonArgs) -> distillab_core::Result<()>,
) -> ExitCode {
    let cfg = match RunConfig::load(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let common = commands::CommonArgs {
        out_override: args.out.clone(),
        jobs: args.jobs.max(1),
        seed_offset: args.seed_offset,
    };
    match f(&cfg, &common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::TrainTeacher(args) => run_with_config(&args, commands::cmd_train_teacher),
        Command::Distill(args) => run_with_config(&args, commands::cmd_distill),
        Command::Report { record, kind, out } => {
            let kind = match kind.parse::<report::ReportKind>() {
                Ok(k) => k,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            match commands::cmd_report(&record, kind, out.as_deref()) {
                Ok(paths) => {
                    for p in paths {
                        println!("wrote {}", p.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(exit_code_for(&e))
                }
            }
        }
        Command::Verify { seed } => {
            if commands::cmd_verify(seed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFY)
            }
        }
    }
}
