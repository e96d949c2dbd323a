mod field;
mod geometry;
mod liouville;
mod maps;

use std::path::Path;

use clap::ValueEnum;
use serde_json::Value;

use crate::config::Envelope;
use crate::error::{CliError, CliResult};
use crate::run::{Run, Summary};

/// What an experiment hands back to the driver. `failure` is reported after
/// the artifacts and manifest have been written.
pub struct Output {
    pub config: Value,
    pub summary: Summary,
    pub failure: Option<CliError>,
}

impl Output {
    pub fn new<C: serde::Serialize>(config: &C, summary: Summary) -> CliResult<Self> {
        Ok(Self {
            config: serde_json::to_value(config)?,
            summary,
            failure: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    GreenSelftest,
    FieldSample,
    GmcBulk,
    GmcBoundary,
    CriticalLadder,
    SeibergValidate,
    VolumeLaw,
    Partition,
    KpzCovariance,
    WeylAnomaly,
    MapsCount,
    MapsSample,
    MapsDensity,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        use Experiment::*;
        match self {
            GreenSelftest => "green-selftest",
            FieldSample => "field-sample",
            GmcBulk => "gmc-bulk",
            GmcBoundary => "gmc-boundary",
            CriticalLadder => "critical-ladder",
            SeibergValidate => "seiberg-validate",
            VolumeLaw => "volume-law",
            Partition => "partition",
            KpzCovariance => "kpz-covariance",
            WeylAnomaly => "weyl-anomaly",
            MapsCount => "maps-count",
            MapsSample => "maps-sample",
            MapsDensity => "maps-density",
        }
    }

    pub fn run(self, env: &Envelope, run: &mut Run) -> CliResult<Output> {
        use Experiment::*;
        match self {
            GreenSelftest => geometry::green_selftest(&env.parse()?, run),
            WeylAnomaly => geometry::weyl_anomaly(&env.parse()?, run),
            FieldSample => field::field_sample(&env.parse()?, run),
            GmcBulk => field::gmc_bulk(&env.parse()?, run),
            GmcBoundary => field::gmc_boundary(&env.parse()?, run),
            CriticalLadder => field::critical_ladder(&env.parse()?, run),
            SeibergValidate => liouville::seiberg_validate(&env.parse()?, run),
            VolumeLaw => liouville::volume_law(&env.parse()?, run),
            Partition => liouville::partition(&env.parse()?, run),
            KpzCovariance => liouville::kpz_covariance(&env.parse()?, run),
            MapsCount => maps::maps_count(&env.parse()?, run),
            MapsSample => maps::maps_sample(&env.parse()?, run),
            MapsDensity => maps::maps_density(&env.parse()?, run),
        }
    }
}

/// Every violated precondition of the config at `path` for `experiment`.
pub fn validate(experiment: Experiment, path: Option<&Path>) -> Vec<String> {
    use Experiment::*;
    let env = match Envelope::load(path) {
        Ok(env) => env,
        Err(e) => return vec![message(e)],
    };
    let findings = match experiment {
        GreenSelftest => env.parse().map(|c| geometry::green_findings(&c)),
        WeylAnomaly => env.parse().map(|c| geometry::weyl_findings(&c)),
        FieldSample => env.parse().map(|c| field::field_findings(&c)),
        GmcBulk => env.parse().map(|c| field::bulk_findings(&c)),
        GmcBoundary => env.parse().map(|c| field::boundary_findings(&c)),
        CriticalLadder => env.parse().map(|c| field::ladder_findings(&c)),
        SeibergValidate | VolumeLaw | Partition | KpzCovariance => {
            env.parse().map(|c| liouville::findings(experiment, &c))
        }
        MapsCount => env.parse().map(|c| maps::count_findings(&c)),
        MapsSample | MapsDensity => env.parse().map(|c| maps::boltzmann_findings(&c)),
    };
    let mut findings = findings.unwrap_or_else(|e| vec![message(e)]);
    if env.workers == Some(0) {
        findings.push("workers must be at least 1".into());
    }
    findings
}

fn message(e: CliError) -> String {
    match e {
        CliError::Config(m) | CliError::Numerical(m) => m,
        CliError::Inadmissible { message, .. } => message,
    }
}

/// Collects the error of `r`, if any, into `findings`.
fn note<T>(findings: &mut Vec<String>, r: lqg_core::Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            findings.push(e.to_string());
            None
        }
    }
}
