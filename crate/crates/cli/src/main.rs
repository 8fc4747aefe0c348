//! `hdmdc`: batch front end for Hankel-DMDc identification, prediction and validation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hdmdc::exec::Execution;

use commands::{BayesArgs, Context, FitArgs, MetricsArgs, PredictArgs, SweepArgs, SynthArgs, ValidatePdfArgs};
use config::{load_config, output_dir, resolve, CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "hdmdc", version, about)]
struct Cli {
    /// TOML file; top-level keys apply to every command, `[command]` tables to one.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory (default: $HDMDC_OUT_DIR, else the working directory).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a wave, Duffing or linear-system record.
    Synth(SynthArgs),
    /// Fit a model to one record.
    Fit(FitArgs),
    /// Predict a trajectory with a fitted model.
    Predict(PredictArgs),
    /// Score a prediction against a reference record.
    Metrics(MetricsArgs),
    /// Full-factorial hyperparameter sweep over a split manifest.
    Sweep(SweepArgs),
    /// Monte Carlo ensemble over uncertain hyperparameters.
    Bayes(BayesArgs),
    /// Bootstrap comparison of reference and predicted densities.
    ValidatePdf(ValidatePdfArgs),
}

fn execution(jobs: Option<usize>) -> CliResult<Execution> {
    match jobs {
        Some(0) => Err(CliError::config("--jobs must be at least 1")),
        Some(1) => Ok(Execution::Sequential),
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::config(e.to_string()))?;
            Ok(Execution::Parallel)
        }
        None => Ok(Execution::Parallel),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = cli.config.as_deref().map(load_config).transpose()?;
    let jobs = match cli.jobs {
        Some(j) => Some(j),
        None => match cfg.as_ref().and_then(|c| c.get("jobs")) {
            Some(v) => Some(
                v.as_integer()
                    .and_then(|j| usize::try_from(j).ok())
                    .ok_or_else(|| CliError::config("`jobs` must be a non-negative integer"))?,
            ),
            None => None,
        },
    };
    let ctx = Context { out_dir: output_dir(cli.out_dir.as_deref(), cfg.as_ref()), exec: execution(jobs)? };
    let cfg = cfg.as_ref();
    match &cli.command {
        Command::Synth(a) => commands::synth(&resolve(a, cfg, "synth")?, &ctx),
        Command::Fit(a) => commands::fit(&resolve(a, cfg, "fit")?, &ctx),
        Command::Predict(a) => commands::predict(&resolve(a, cfg, "predict")?, &ctx),
        Command::Metrics(a) => commands::metrics(&resolve(a, cfg, "metrics")?, &ctx),
        Command::Sweep(a) => commands::sweep(&resolve(a, cfg, "sweep")?, &ctx),
        Command::Bayes(a) => commands::bayes(&resolve(a, cfg, "bayes")?, &ctx),
        Command::ValidatePdf(a) => commands::validate_pdf_cmd(&resolve(a, cfg, "validate-pdf")?, &ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::config(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code as u8)
        }
    }
}
