//! `vascage`: batch pipeline for brain vascular age estimation from
//! bilateral CBFV recordings.
//!
//! The stages hand off through files so each one is independently
//! re-runnable: `synth` writes a cohort, `extract` turns it into a feature
//! matrix, `rank` orders the features, `train` fits age models on the
//! healthy split, `evaluate` writes per-subject age gaps, and `report`
//! summarises the gaps into tables. Exit codes: 0 success, 2 input error,
//! 3 pipeline error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CliError;
use config::resolve_out;

#[derive(Parser)]
#[command(name = "vascage", version, about = "Brain vascular age estimation pipeline")]
struct Cli {
    /// Run configuration JSON; unknown keys are rejected.
    #[arg(long, global = true, value_name = "JSON")]
    config: Option<PathBuf>,

    /// Seed for any stage whose seed the config does not pin. Randomness
    /// is never seeded from the clock.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads; defaults to the core count.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with ground truth.
    Synth,
    /// Extract the feature matrix from a cohort manifest.
    Extract {
        /// Cohort manifest CSV with subject_id,path rows.
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Rank features by between-group variance.
    Rank {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        subjects: PathBuf,
        /// Features to keep; defaults to the configured top_k.
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Split the healthy cohort and train the configured models.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        subjects: PathBuf,
    },
    /// Predict ages with one model and write per-subject gaps.
    Evaluate {
        /// Model artifact JSON written by train.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        subjects: PathBuf,
        /// split.json written by train.
        #[arg(long)]
        split: PathBuf,
    },
    /// Summarise gaps files into the report bundle.
    Report {
        /// Gaps CSV written by evaluate; repeat for several models.
        #[arg(long = "gaps", required = true)]
        gaps: Vec<PathBuf>,
        /// split.json written by train.
        #[arg(long)]
        split: PathBuf,
    },
    /// Inspect the canonical feature manifest.
    Manifest {
        /// Print the manifest names, one per line.
        #[arg(long)]
        emit: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = config::load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Synth => commands::cmd_synth(&cfg, cli.seed, &resolve_out(cli.out.as_ref())?),
        Command::Extract { manifest } => {
            commands::cmd_extract(&cfg, &manifest, &resolve_out(cli.out.as_ref())?)
        }
        Command::Rank {
            features,
            subjects,
            top_k,
        } => commands::cmd_rank(
            &cfg,
            &features,
            &subjects,
            top_k,
            &resolve_out(cli.out.as_ref())?,
        ),
        Command::Train { features, subjects } => commands::cmd_train(
            &cfg,
            cli.seed,
            &features,
            &subjects,
            &resolve_out(cli.out.as_ref())?,
        ),
        Command::Evaluate {
            model,
            features,
            subjects,
            split,
        } => commands::cmd_evaluate(
            &model,
            &features,
            &subjects,
            &split,
            &resolve_out(cli.out.as_ref())?,
        ),
        Command::Report { gaps, split } => {
            commands::cmd_report(&cfg, &gaps, &split, &resolve_out(cli.out.as_ref())?)
        }
        Command::Manifest { emit } => commands::cmd_manifest(emit),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: Jobs: {e}");
            return ExitCode::from(3);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
