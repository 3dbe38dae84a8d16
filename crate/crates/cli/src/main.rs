//! `refbench`: run benchmarking simulations and analyze measured data.

mod commands;
mod config;
mod report;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::{FitRequest, RunOptions};
use config::ModelName;
use tables::Format;

#[derive(Parser)]
#[command(
    name = "refbench",
    version,
    about = "Interleaved gate benchmarking with single-qubit references"
)]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Format of curve and CDF tables.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured experiments and write their fidelity curves.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Estimate a target gate against simultaneous single-qubit references.
    Interleave {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare pooled output probabilities against the reference distributions.
    DistTest {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit decay models to a fidelity-point or counts file.
    Fit(FitArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Fidelity points (depth,fidelity[,stderr]) or counts (depth,circuit,bitstring,count).
    data: PathBuf,
    /// Ideal probabilities for a counts file; defaults to `<stem>_ideal.csv` beside it.
    #[arg(long)]
    ideal: Option<PathBuf>,
    /// Model to fit; repeatable. Defaults to every model the data supports.
    #[arg(long = "model", value_enum)]
    models: Vec<ModelName>,
    /// Register size, needed by f-single on fidelity-point data.
    #[arg(long)]
    qubits: Option<usize>,
    /// Smallest depth used in the fits.
    #[arg(long, default_value_t = refbench_core::fit::DEFAULT_M_MIN)]
    m_min: usize,
    /// Bootstrap resamples for counts data; 0 disables.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Reference error rates e_i, comma separated; adds the interleaved gate estimate.
    #[arg(long, value_delimiter = ',')]
    ref_errors: Option<Vec<f64>>,
    /// Hilbert-space dimension of the target gate.
    #[arg(long, default_value_t = 4)]
    gate_dim: usize,
}

fn run(cli: Cli) -> Result<PathBuf> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()?;
    }
    let opts = RunOptions {
        seed: cli.seed,
        out: cli.out,
        format: cli.format,
    };
    match cli.command {
        Command::Simulate { config } => commands::simulate(&config, &opts),
        Command::Interleave { config } => commands::interleave(&config, &opts),
        Command::DistTest { config } => commands::dist_test(&config, &opts),
        Command::Fit(a) => commands::fit(
            &FitRequest {
                data: a.data,
                ideal: a.ideal,
                models: a.models,
                qubits: a.qubits,
                m_min: a.m_min,
                bootstrap: a.bootstrap,
                ref_errors: a.ref_errors,
                gate_dim: a.gate_dim,
            },
            &opts,
        ),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(report) => {
            println!("{}", report.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
