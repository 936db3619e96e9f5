//! `touchauth` — touch-dynamics continuous-authentication experiments.
//!
//! Subcommands mirror the pipeline stages and compose through the artifacts
//! persisted under the output directory; `run` executes the whole experiment.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use touchauth_cli::config::{DataSource, RunConfig};
use touchauth_cli::report::render_report;
use touchauth_cli::stages::{
    run_experiment, stage_clean, stage_data, stage_eval, stage_featurize, stage_split, stage_train,
    PipelineError,
};
use touchauth_core::classifiers::store::ModelKind;

#[derive(Parser)]
#[command(
    name = "touchauth",
    version,
    about = "Touch-dynamics continuous-authentication pipeline"
)]
struct Cli {
    /// JSON run configuration; defaults to the 15-user synthetic experiment.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainTarget {
    Knn,
    Rf,
    Svc,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic per-user capture CSVs.
    Synth,
    /// Parse raw event logs (or synthetic data) into metric CSVs.
    Ingest,
    /// Apply the cleaning rules and persist cleaned CSVs.
    Clean,
    /// Segment strokes and derive the kinematic features.
    Featurize,
    /// Build the 70/30 per-user train/test splits.
    Split,
    /// Fit models on the training split.
    Train {
        #[arg(value_enum, default_value_t = TrainTarget::All)]
        model: TrainTarget,
    },
    /// Evaluate trained models on every user's test set.
    Eval,
    /// Render the report tables from the eval artifacts.
    Report,
    /// Full pipeline: ingest through report.
    Run,
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_json_file(path)?,
        None => RunConfig::default_synthetic(PathBuf::from("out")),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn dispatch(cfg: &RunConfig, command: &Command) -> Result<(), PipelineError> {
    match command {
        Command::Synth => {
            if !matches!(cfg.data_source, DataSource::Synthetic { .. }) {
                return Err(PipelineError {
                    stage: "data",
                    message: "`synth` needs a synthetic data source in the config".into(),
                });
            }
            stage_data(cfg).map(|_| ())
        }
        Command::Ingest => stage_data(cfg).map(|_| ()),
        Command::Clean => {
            let data_dir = stage_data(cfg)?;
            stage_clean(cfg, &data_dir).map(|_| ())
        }
        Command::Featurize => stage_featurize(cfg).map(|_| ()),
        Command::Split => stage_split(cfg).map(|_| ()),
        Command::Train { model } => {
            let kinds: &[ModelKind] = match model {
                TrainTarget::Knn => &[ModelKind::Knn],
                TrainTarget::Rf => &[ModelKind::Forest],
                TrainTarget::Svc => &[ModelKind::Svc],
                TrainTarget::All => &[ModelKind::Knn, ModelKind::Forest, ModelKind::Svc],
            };
            stage_train(cfg, kinds)
        }
        Command::Eval => stage_eval(cfg).map(|_| ()),
        Command::Report => render_report(cfg),
        Command::Run => run_experiment(cfg).map(|_| ()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve_config(&cli) {
        Ok(cfg) => cfg,
        Err(message) => {
            eprintln!("error: [config] {message}");
            return ExitCode::FAILURE;
        }
    };
    match dispatch(&cfg, &cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
