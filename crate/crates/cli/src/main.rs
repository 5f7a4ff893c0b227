//! `efq`: design, rate-distortion sweeps, filter fitting, simulation and
//! verification of optimal error-feedback quantizers.
//!
//! Exit status: 0 success, 1 invalid input, 2 numerical failure, 3 failed
//! invariant check.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::{ExperimentConfig, Overrides};
use crate::error::{CliError, CliResult};
use crate::output::OutDir;

#[derive(Debug, Parser)]
#[command(name = "efq", version, about = "Optimal error-feedback quantizer toolkit")]
struct Cli {
    /// JSON experiment configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "efq-out")]
    out: PathBuf,

    /// Overrides the base simulation seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the number of frequency grid points.
    #[arg(long, global = true)]
    grid: Option<usize>,

    /// Suppresses progress output on stdout.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimal shaping amplitude and distortion for every (bits, lambda) cell.
    Design,
    /// Distortion, uniform-quantizer MSE and upper bound per cell as CSV.
    RdCurve,
    /// Realizable shaping filters fitted to a design artifact.
    Fit {
        /// Design artifact; defaults to design.json in the output directory.
        #[arg(long)]
        design: Option<PathBuf>,
    },
    /// Seeded loop simulations of the fitted filters.
    Simulate {
        /// Fit artifact; defaults to fit.json in the output directory.
        #[arg(long)]
        fit: Option<PathBuf>,
    },
    /// Full invariant suite; fails with status 3 if any check is red.
    Verify,
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("EFQ_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| CliError::Validation(format!("EFQ_THREADS: expected a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Validation(format!("EFQ_THREADS: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    let cfg = ExperimentConfig::load(
        cli.config.as_deref(),
        Overrides {
            seed: cli.seed,
            grid: cli.grid,
        },
    )?;
    let out = OutDir::create(&cli.out, cfg.hash())?;
    let ctx = Context {
        cfg: &cfg,
        quiet: cli.quiet,
        out,
    };
    match cli.command {
        Command::Design => commands::design(&ctx),
        Command::RdCurve => commands::rd_curve(&ctx),
        Command::Fit { design } => {
            let path = design.unwrap_or_else(|| ctx.out.path("design.json"));
            commands::fit(&ctx, &path)
        }
        Command::Simulate { fit } => {
            let path = fit.unwrap_or_else(|| ctx.out.path("fit.json"));
            commands::simulate(&ctx, &path)
        }
        Command::Verify => commands::verify(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("efq: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
