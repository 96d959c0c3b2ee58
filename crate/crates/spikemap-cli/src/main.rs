//! Command-line front end: training, conversion, inference, attribution
//! maps, adversarial evaluation, and sweep reports.
//!
//! Environment:
//!   SPIKEMAP_OUT_DIR   overrides every --out flag
//!   SPIKEMAP_THREADS   worker threads for per-image jobs (default 1)

mod cmd_attack;
mod cmd_explain;
mod cmd_report;
mod cmd_train;
mod common;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "spikemap", version, about = "Spiking network runtime with temporal attribution maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a spiking or analog network and write a checkpoint.
    Train(cmd_train::TrainArgs),
    /// Convert a trained analog checkpoint into a spiking network by
    /// threshold balancing.
    Convert(cmd_train::ConvertArgs),
    /// Evaluate a checkpoint on the test split.
    Infer(cmd_train::InferArgs),
    /// Emit attribution heatmaps (and a spike raster) for one image.
    Explain(cmd_explain::ExplainArgs),
    /// FGSM robustness: accuracy sweep and heatmap stability.
    Attack(cmd_attack::AttackArgs),
    /// Localization-error measurements against an analog Grad-CAM
    /// reference over the test split.
    Metrics(cmd_explain::MetricsArgs),
    /// Present two images at once and watch where the attention settles.
    Suppress(cmd_explain::SuppressArgs),
    /// Aggregate metrics from a sweep directory into tables.
    Report(cmd_report::ReportArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => cmd_train::run_train(args),
        Command::Convert(args) => cmd_train::run_convert(args),
        Command::Infer(args) => cmd_train::run_infer(args),
        Command::Explain(args) => cmd_explain::run_explain(args),
        Command::Attack(args) => cmd_attack::run_attack(args),
        Command::Metrics(args) => cmd_explain::run_metrics(args),
        Command::Suppress(args) => cmd_explain::run_suppress(args),
        Command::Report(args) => cmd_report::run_report(args),
    };
    if let Err(err) = result {
        eprintln!("error: {:#}", err);
        std::process::exit(1);
    }
}
