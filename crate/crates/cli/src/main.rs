mod config;
mod experiments;

use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::ExperimentKind;

/// Convergence experiments for the relaxed ordered-subsets solvers:
/// LASSO duality-gap studies, CT reconstruction curves, and spectral
/// tables of the underlying second-order recursion.
#[derive(Parser)]
#[command(name = "lalm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing); all outputs land here.
    #[arg(long)]
    out: PathBuf,
    /// Override the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sparse-regression gap study and write CSV curves.
    RunLasso(CommonArgs),
    /// Run the CT reconstruction study and write CSV curves and images.
    RunCt(CommonArgs),
    /// Write the spectral analysis table for a grid of eigenvalue ratios.
    AnalyzeSpectral(CommonArgs),
}

fn run(args: &CommonArgs, expected: ExperimentKind) -> experiments::Result<()> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| format!("cannot read {}: {e}", args.config.display()))?;
    let cfg = config::parse_config(&text, args.seed)?;
    if cfg.kind != expected {
        return Err(format!(
            "config declares experiment kind {:?}, but this subcommand runs {:?}",
            cfg.kind, expected
        )
        .into());
    }
    fs::create_dir_all(&args.out)?;
    match expected {
        ExperimentKind::Lasso => experiments::run_lasso_experiment(&cfg, &args.out),
        ExperimentKind::Ct => experiments::run_ct_experiment(&cfg, &args.out),
        ExperimentKind::Spectral => experiments::analyze_spectral(&cfg, &args.out),
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::RunLasso(args) => run(args, ExperimentKind::Lasso),
        Command::RunCt(args) => run(args, ExperimentKind::Ct),
        Command::AnalyzeSpectral(args) => run(args, ExperimentKind::Spectral),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
