//! `setid`: estimation of set-identified linearized equilibrium models with
//! friction-robust moment restrictions.

mod config;
mod csvio;
mod error;
mod expr;
mod pipeline;
mod svg;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::pipeline::Workspace;

#[derive(Parser)]
#[command(
    name = "setid",
    about = "Set-identified dynamic equilibrium models: solve, estimate, extract wedges, test",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the configured RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for chains and bootstrap replicates (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the model at the configured parameter values.
    Solve(CommonArgs),
    /// Run the Kalman filter on the data at the configured parameters.
    Filter(CommonArgs),
    /// Estimate the identified set by quasi-posterior MCMC.
    Estimate(CommonArgs),
    /// Estimate, then extract wedge envelopes over the identified set.
    Wedges(CommonArgs),
    /// Test a complete candidate model against the robust wedge set.
    Test(CommonArgs),
    /// Simulate data (and optional injected wedges) from the model.
    Simulate(CommonArgs),
}

fn main() {
    let log_env = env_logger::Env::default().filter_or("SETID_LOG_LEVEL", "warn");
    env_logger::Builder::from_env(log_env).init();

    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Solve(a) => ("solve", a),
        Command::Filter(a) => ("filter", a),
        Command::Estimate(a) => ("estimate", a),
        Command::Wedges(a) => ("wedges", a),
        Command::Test(a) => ("test", a),
        Command::Simulate(a) => ("simulate", a),
    };
    if args.workers > 0 {
        // Worker pool sized once for chains and bootstrap fan-out.
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(args.workers)
            .build_global()
        {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    let ws = match Workspace::load(&args.config, &args.out, args.seed) {
        Ok(ws) => ws,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    };
    if let Err(e) = pipeline::dispatch(name, &ws) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
