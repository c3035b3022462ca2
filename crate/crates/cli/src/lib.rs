//! Command-line pipeline over the `follownet` estimators.
//!
//! Each subcommand is one stage; all of them write into a single output
//! directory as CSV tables with a `#` provenance line plus a JSON summary.

pub mod config;
pub mod failure;
pub mod output;
pub mod pipeline;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use failure::{Failure, Outcome};
pub use pipeline::{Run, Stage};

#[derive(Debug, Parser)]
#[command(name = "follownet", version, about = "Temporal follow-network analysis pipeline")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest events and scores; write the network and the completed panel.
    Build,
    /// Weekly structural measures and degree histograms.
    Metrics,
    /// Configuration and joint-degree null ensembles.
    Nulls,
    /// Observed assortativity against the null bands (needs `nulls`).
    Homophily,
    /// Tie-formation model on rolling blocks.
    Selection,
    /// Fixed-effects OLS and 2SLS peer-effect panels per window.
    Influence,
    /// Synthetic events and scores with planted parameters.
    Simulate,
    /// build, metrics, nulls, homophily, selection and influence in order.
    All,
}

impl Command {
    pub fn stage(&self) -> Stage {
        match self {
            Command::Build => Stage::Build,
            Command::Metrics => Stage::Metrics,
            Command::Nulls => Stage::Nulls,
            Command::Homophily => Stage::Homophily,
            Command::Selection => Stage::Selection,
            Command::Influence => Stage::Influence,
            Command::Simulate => Stage::Simulate,
            Command::All => Stage::All,
        }
    }
}

/// Resolves the config and flags into a [`Run`].
pub fn prepare(cli: &Cli) -> Outcome<Run> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    cfg.out = None;
    Run::new(cfg, out)
}

/// Runs the parsed command; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return 2;
        }
        // Fails only if a pool already exists, e.g. in tests.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = prepare(cli).and_then(|run| run.stage(cli.command.stage()));
    match result {
        Ok(files) => {
            for f in files {
                log::info!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
