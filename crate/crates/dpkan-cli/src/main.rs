//! `dpkan`: train, calibrate, diagnose, sweep, and generate data for
//! differentially private spline-network experiments.
//!
//! Exit codes are part of the interface: 0 on success, 1 for an invalid or
//! unreadable config, 2 for a failure while running, 3 for a usage mistake
//! (bad flags, unknown suite, unknown sweep parameter).

mod commands;
mod config;
mod svg;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::GlobalFlags;

#[derive(Parser)]
#[command(
    name = "dpkan",
    version,
    about = "Differentially private training of two-layer spline networks \
             with temporally correlated noise"
)]
struct Cli {
    /// Replace the [train] seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print a machine-readable JSON report on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Suppress informational output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run training from a config file and write run artifacts.
    Train {
        /// Run config file (key=value sections, or JSON when named *.json).
        config: PathBuf,
        /// Output directory for trajectory.csv, model.ckpt, summary.json,
        /// and plots.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Closed-form noise calibration for a privacy budget.
    Calibrate {
        /// Privacy parameter epsilon, in (0, 1].
        #[arg(long)]
        epsilon: f64,
        /// Privacy parameter delta, in (0, 1].
        #[arg(long)]
        delta: f64,
        /// Dataset size n.
        #[arg(long)]
        n: usize,
        /// Mini-batch size B.
        #[arg(long)]
        batch: usize,
        /// Number of training steps T.
        #[arg(long)]
        steps: usize,
        /// Noise correlation weight lambda (correlated mechanism only).
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        /// Mechanism: "independent" or "correlated".
        #[arg(long)]
        mechanism: String,
        /// Fraction of delta spent on the participation threshold
        /// (correlated mechanism).
        #[arg(long, default_value_t = 0.5)]
        split: f64,
    },
    /// Run one desk-scale check suite against a config.
    Diagnose {
        /// Suite name: grad, sampling, noise, shifted, stability, or tails.
        suite: String,
        /// Run config file.
        config: PathBuf,
    },
    /// One training run per value of a single parameter, with a combined
    /// trajectory CSV.
    Sweep {
        /// Run config file.
        config: PathBuf,
        /// Parameter to vary: lambda, eta, B, or kappa.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. "0,0.5,0.9".
        #[arg(long)]
        values: String,
        /// Output directory for sweep.csv and sweep_summary.json.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Generate the synthetic dataset described by the [data] section.
    GenData {
        /// Run config file with a [data] generator section.
        config: PathBuf,
        /// Destination CSV path.
        #[arg(long, default_value = "dataset.csv")]
        out: PathBuf,
    },
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
            let _ = err.print();
            return code;
        }
    };
    let flags = GlobalFlags {
        seed: cli.seed,
        json: cli.json,
        quiet: cli.quiet,
    };
    let result = match cli.command {
        Command::Train { config, out } => commands::cmd_train(&config, &out, flags),
        Command::Calibrate {
            epsilon,
            delta,
            n,
            batch,
            steps,
            lambda,
            mechanism,
            split,
        } => commands::cmd_calibrate(
            epsilon, delta, n, batch, steps, lambda, &mechanism, split, flags,
        ),
        Command::Diagnose { suite, config } => commands::cmd_diagnose(&suite, &config, flags),
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => commands::cmd_sweep(&config, &param, &values, &out, flags),
        Command::GenData { config, out } => commands::cmd_gen_data(&config, &out, flags),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.code()
        }
    }
}
