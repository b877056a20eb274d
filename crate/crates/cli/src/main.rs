mod commands;
mod manifest;
mod policy;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Parser)]
#[command(name = "segar", version, about = "Sample, simulate and compare procedurally generated tasks")]
pub struct Cli {
    /// Root seed; every random choice derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory. Defaults to $SEGAR_DATA_DIR/<command> or ./segar-data/<command>.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for rollouts and renders (0 = all cores).
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Format of the summary printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a task set from a template into an archive directory.
    Sample {
        /// Template file, or the name of a built-in template.
        #[arg(long, short)]
        template: String,
        /// Number of instances.
        #[arg(long, short)]
        n: usize,
        /// Override the template's difficulty preset.
        #[arg(long, value_parser = ["easy", "medium", "hard"])]
        difficulty: Option<String>,
    },
    /// Run episodes over the tasks of an archive and log trajectories.
    Rollout {
        /// Archive directory written by `sample`.
        #[arg(long)]
        archive: PathBuf,
        /// `random`, `still`, or a JSON file of per-step forces.
        #[arg(long, default_value = "random")]
        policy: String,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        /// Include the full state vector in every trajectory record.
        #[arg(long)]
        dump_state: bool,
    },
    /// Compare two archives: W2 distance, per-factor KS and entropy.
    Metrics {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Z-score each column over both sets before computing W2.
        #[arg(long)]
        normalize: bool,
    },
    /// Render the initial state of every task in an archive to PNG.
    Render {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long, default_value_t = 0)]
        renderer_seed: u64,
        #[arg(long)]
        resolution: Option<u32>,
    },
    /// Print a template's entities, priors and entropy.
    Describe {
        #[arg(long, short)]
        template: String,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Sample { .. } => "sample",
            Command::Rollout { .. } => "rollout",
            Command::Metrics { .. } => "metrics",
            Command::Render { .. } => "render",
            Command::Describe { .. } => "describe",
        }
    }
}

/// Short machine-readable category for a failure.
fn error_code(e: &anyhow::Error) -> &'static str {
    use segar_core::Error as E;
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<E>() {
            return match err {
                E::Template { .. } | E::InvalidPrior { .. } | E::Json(_) => "template",
                E::LayoutMismatch(_) => "layout",
                E::Placement { .. } => "placement",
                E::Archive(_) => "archive",
                E::Io(_) => "io",
                E::TooLarge { .. } | E::EmptySample | E::NotSquare { .. } | E::NonFiniteCost(..) => "metrics",
                _ => "engine",
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
    }
    "usage"
}

fn main() -> ExitCode {
    manifest::mark_start();
    let cli = Cli::parse();
    if cli.jobs > 0 {
        // Fails only if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("segar: error[{}]: {msg}", error_code(&e));
            ExitCode::FAILURE
        }
    }
}
