//! `fewspike`: fit FS-neuron parameters, train and convert networks, and
//! evaluate the resulting spiking networks.
//!
//! Exit codes: 0 on success, 2 for usage or validation errors, 1 for
//! runtime failures (I/O, divergence).

mod args;
mod convert;
mod eval;
mod fit;
mod profile;
mod trace;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "fewspike", version, about = "Few-spike neuron fitting, ANN-to-SNN conversion and simulation")]
struct Cli {
    /// Base seed for every stochastic step (overrides seeds in config files).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit FS-neuron parameters to an activation from a JSON config.
    Fit(fit::FitArgs),
    /// Write the analytic ReLU parameters for a given K and alpha.
    ReluParams(fit::ReluArgs),
    /// Train a dense network.
    Train(train::TrainArgs),
    /// Convert a trained network into an FS-neuron network.
    Convert(convert::ConvertArgs),
    /// Compare a converted network with its source on a dataset.
    Eval(eval::EvalArgs),
    /// Produce a CSV profile (spike counts, MSE or accuracy sweeps).
    Profile(profile::ProfileArgs),
    /// Record the spiking dynamics of one input as CSV.
    Trace(trace::TraceArgs),
}

fn is_usage(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<args::Usage>() || e.downcast_ref::<fewspike::Error>().is_some_and(fewspike::Error::is_usage)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let seed = cli.seed;
    let result = match cli.command {
        Command::Fit(a) => fit::run(a, seed),
        Command::ReluParams(a) => fit::run_relu(a),
        Command::Train(a) => train::run(a, seed),
        Command::Convert(a) => convert::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Profile(a) => profile::run(a, seed),
        Command::Trace(a) => trace::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage(&e) { 2 } else { 1 })
        }
    }
}
