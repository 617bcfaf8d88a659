//! `affine-lpv`: embed, sweep, compare, simulate and inspect affine LPV
//! models from the command line.
//!
//! Exit codes: 0 success, 2 configuration error, 3 degenerate data,
//! 4 numerical failure. Tables go to stdout, diagnostics to stderr.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "affine-lpv", version, about = "Affine LPV embedding with reduced scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Where the system and the data come from, and how to embed.
#[derive(Args, Debug, Clone, Default)]
pub struct Source {
    /// Built-in system (example1, example2); supplies default data and settings.
    #[arg(long, conflicts_with = "system")]
    pub fixture: Option<String>,
    /// System description file.
    #[arg(long)]
    pub system: Option<PathBuf>,
    /// Trajectory CSV (`t` column plus one column per variable).
    #[arg(long, conflicts_with = "generate")]
    pub data: Option<PathBuf>,
    /// Generator spec, inline or `@file`.
    #[arg(long)]
    pub generate: Option<String>,
    /// Sampling period for --generate.
    #[arg(long)]
    pub period: Option<f64>,
    /// Sample count for --generate (defaults to the grid length when bounded).
    #[arg(long)]
    pub samples: Option<usize>,
    /// key = value file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Tuning {
    /// Number of scheduling variables.
    #[arg(long, conflicts_with = "energy")]
    pub order: Option<usize>,
    /// Pick the smallest order capturing this fraction of the energy.
    #[arg(long)]
    pub energy: Option<f64>,
    /// auto | axis-aligned | box | ellipsoid
    #[arg(long)]
    pub region: Option<String>,
    /// Standard deviation estimator: population | sample.
    #[arg(long)]
    pub std: Option<String>,
    /// Rows with std below eps * max(1, |mean|) are treated as constant.
    #[arg(long)]
    pub eps_sigma: Option<f64>,
    #[arg(long)]
    pub tol_mvee: Option<f64>,
    /// Relative volume tolerance of the 3D box search.
    #[arg(long)]
    pub box_eps: Option<f64>,
    /// Seed for randomized search orderings.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a model and print its accuracy and region.
    Embed {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        tuning: Tuning,
        /// Model JSON output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy index for a range of orders.
    Accuracy {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        tuning: Tuning,
        /// Inclusive range `lo..hi` (default: every available order).
        #[arg(long)]
        orders: Option<String>,
    },
    /// Proposed embedding against scheduling-trajectory PCA.
    Compare {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        tuning: Tuning,
        /// Directory for the two model files.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the original system and a saved model side by side.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        model: PathBuf,
        /// Initial state, comma separated.
        #[arg(long)]
        x0: String,
        /// Input generator spec (`u1 = ...`); zero input when absent.
        #[arg(long)]
        input: Option<String>,
        /// Signals for system variables that are not states or inputs.
        #[arg(long)]
        exogenous: Option<String>,
        /// Constant state-feedback gain, row-major `n_u x n_x`.
        #[arg(long)]
        gain: Option<String>,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Directory for `nl.csv` and `lpv.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Frozen-scheduling frequency response magnitudes as CSV.
    Freqresp {
        #[arg(long)]
        model: PathBuf,
        /// Frozen scheduling vector, comma separated; repeatable.
        #[arg(long, required = true)]
        theta: Vec<String>,
        /// `lo:hi:count` in rad/s, log spaced.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reduced coordinates, enclosing shapes and alignment details.
    RegionDebug {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        tuning: Tuning,
        /// CSV of reduced and final scheduling coordinates per sample.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Embed { source, tuning, out } => commands::embed(&source, &tuning, out.as_deref()),
        Command::Accuracy { source, tuning, orders } => commands::accuracy(&source, &tuning, orders.as_deref()),
        Command::Compare { source, tuning, out } => commands::compare(&source, &tuning, out.as_deref()),
        Command::Simulate {
            source,
            model,
            x0,
            input,
            exogenous,
            gain,
            step,
            steps,
            out,
        } => commands::simulate(
            &source,
            &commands::SimArgs {
                model,
                x0,
                input,
                exogenous,
                gain,
                step,
                steps,
                out,
            },
        ),
        Command::Freqresp { model, theta, grid, out } => commands::freqresp(&model, &theta, grid.as_deref(), out.as_deref()),
        Command::RegionDebug { source, tuning, out } => commands::region_debug(&source, &tuning, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
