//! `stconv`: generate data, train, benchmark, fuse, and analyze separate
//! versus fused convolutional EEG encoders.

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand};
use commands::{AnalyzeArgs, BenchArgs, FuseArgs, GenDataArgs, ReportArgs, ReproArgs, TrainArgs};

#[derive(Parser, Debug)]
#[command(name = "stconv", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic trial set.
    GenData(GenDataArgs),
    /// Cross-validated training of one or more model types.
    Train(TrainArgs),
    /// Per-epoch training time of each model type on random data.
    Bench(BenchArgs),
    /// Convert a separate-1D checkpoint into its fused-2D equivalent.
    Fuse(FuseArgs),
    /// Band-power reconstruction, kernel correlations, and RSA over checkpoints.
    Analyze(AnalyzeArgs),
    /// Render SVG figures from analysis CSVs.
    Report(ReportArgs),
    /// Run gen-data, train, bench, analyze, and report in one go.
    Repro(ReproArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match &cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Bench(a) => commands::bench(a),
        Command::Fuse(a) => commands::fuse(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Report(a) => commands::report(a),
        Command::Repro(a) => commands::repro(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
