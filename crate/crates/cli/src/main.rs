//! `lqg`: batch driver for the lqg-core experiments.
//!
//! Every subcommand reads an optional JSON config, writes CSV/JSON artifacts
//! to the output directory and finishes with `manifest.json`. Exit status is
//! 0 on success, 2 for configuration errors, 3 for inadmissible insertion
//! data and 4 for numerical failures; failures print an error JSON on stderr.

mod commands;
mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lqg_core::parallel::available_workers;

use commands::Experiment;
use config::Envelope;
use error::{CliError, CliResult};
use run::Run;

#[derive(Parser)]
#[command(
    name = "lqg",
    version,
    about = "Liouville quantum gravity experiments on the unit disk"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON file with the experiment parameters; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; falls back to the config, then to LQG_SEED, then to 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory, `lqg-out/<command>` by default.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Green function and Möbius identities on random inputs.
    GreenSelftest(Common),
    /// Regularised free field samples on a point set or polar grid.
    FieldSample(Common),
    /// Subcritical bulk chaos measures.
    GmcBulk(Common),
    /// Subcritical boundary chaos measures.
    GmcBoundary(Common),
    /// Critical chaos along a cutoff ladder, with and without the Seneta-Heyde factor.
    CriticalLadder(Common),
    /// Seiberg bounds for an insertion set.
    SeibergValidate(Common),
    /// Joint law of the Liouville volume and boundary length.
    VolumeLaw(Common),
    /// Reduced partition function.
    Partition(Common),
    /// Partition function ratio under a Möbius map against the conformal weights.
    KpzCovariance(Common),
    /// Weyl anomaly checks under mesh refinement.
    WeylAnomaly(Common),
    /// Exact and asymptotic quadrangulation counts.
    MapsCount(Common),
    /// Boltzmann draws of (inner faces, half-perimeter) against the exact law.
    MapsSample(Common),
    /// Rescaled Boltzmann draws against the conjectured continuum density.
    MapsDensity(Common),
    /// Lists every violated precondition of a config without running it.
    Validate {
        #[arg(value_enum)]
        experiment: Experiment,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

impl Command {
    fn split(self) -> Result<(Experiment, Common), (Experiment, Option<PathBuf>)> {
        use Command::*;
        Ok(match self {
            GreenSelftest(c) => (Experiment::GreenSelftest, c),
            FieldSample(c) => (Experiment::FieldSample, c),
            GmcBulk(c) => (Experiment::GmcBulk, c),
            GmcBoundary(c) => (Experiment::GmcBoundary, c),
            CriticalLadder(c) => (Experiment::CriticalLadder, c),
            SeibergValidate(c) => (Experiment::SeibergValidate, c),
            VolumeLaw(c) => (Experiment::VolumeLaw, c),
            Partition(c) => (Experiment::Partition, c),
            KpzCovariance(c) => (Experiment::KpzCovariance, c),
            WeylAnomaly(c) => (Experiment::WeylAnomaly, c),
            MapsCount(c) => (Experiment::MapsCount, c),
            MapsSample(c) => (Experiment::MapsSample, c),
            MapsDensity(c) => (Experiment::MapsDensity, c),
            Validate { experiment, config } => return Err((experiment, config)),
        })
    }
}

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var("LQG_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|e| CliError::Config(format!("LQG_SEED={s:?} is not a u64: {e}"))),
        Err(_) => Ok(None),
    }
}

fn execute(experiment: Experiment, common: Common) -> CliResult<()> {
    let envelope = Envelope::load(common.config.as_deref())?;
    let seed = match common.seed.or(envelope.seed) {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    let workers = common.workers.or(envelope.workers).unwrap_or_else(available_workers);
    if workers == 0 {
        return Err(CliError::Config("workers must be at least 1".into()));
    }
    let out = common
        .out
        .or(envelope.out.clone())
        .unwrap_or_else(|| PathBuf::from("lqg-out").join(experiment.name()));
    let mut run = Run::new(experiment.name(), seed, workers, out)?;
    let output = experiment.run(&envelope, &mut run)?;
    let out_dir = run.out().to_path_buf();
    let manifest = run.finish(output.config, output.summary)?;
    let report = serde_json::json!({
        "status": if output.failure.is_some() { "rejected" } else { "ok" },
        "out": out_dir,
        "files": manifest.files.len(),
        "summary": manifest.summary,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    match output.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command.split() {
        Ok((experiment, common)) => execute(experiment, common),
        Err((experiment, config)) => {
            let findings = commands::validate(experiment, config.as_deref());
            let report = serde_json::json!({
                "experiment": experiment.name(),
                "ok": findings.is_empty(),
                "findings": findings,
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("findings serialise"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
