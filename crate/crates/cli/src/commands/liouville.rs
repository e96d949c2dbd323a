//! `seiberg-validate`, `volume-law`, `partition` and `kpz-covariance`.

use lqg_core::gff::DEFAULT_MODES;
use lqg_core::grid::{self, PolarGrid, PolarGridSpec};
use lqg_core::io::{Cell, CsvTable};
use lqg_core::liouville::{
    gamma_law_report, partition_from_totals, seiberg_check, volume_law_params, AdmissibilityVerdict, CIntegralMethod,
    ChaosSetup, InsertionKind, InsertionSet, InsertionSpec, KpzReport, LiouvilleModel, VolumeLawSampler,
};
use lqg_core::stats;
use lqg_core::{Complex64, LiouvilleParams, MobiusMap, RngStream};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{note, Experiment, Output};
use crate::error::{CliError, CliResult};
use crate::run::{Run, Summary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobiusSpec {
    pub a: [f64; 2],
    #[serde(default)]
    pub alpha: f64,
}

/// Insertion data and discretisation shared by the Liouville experiments.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiouvilleConfig {
    pub gamma: f64,
    pub mu: f64,
    pub mu_boundary: f64,
    pub insertions: Vec<InsertionSpec>,
    pub grid: PolarGridSpec,
    pub n_modes: usize,
    /// Boundary arcs, `4 · n_modes` when absent.
    pub n_arcs: Option<usize>,
    pub n_replicas: usize,
    /// `volume-law`: draws of `(V, L)`.
    pub n_draws: usize,
    /// `partition`: evaluation of the zero-mode integral.
    pub method: CIntegralMethod,
    /// `kpz-covariance`: the map moving the insertions.
    pub mobius: MobiusSpec,
}

impl Default for LiouvilleConfig {
    fn default() -> Self {
        let gamma = (8.0f64 / 3.0).sqrt();
        Self {
            gamma,
            mu: 1.0,
            mu_boundary: 0.0,
            insertions: vec![
                InsertionSpec {
                    kind: InsertionKind::Bulk,
                    position: [0.0, 0.0],
                    weight: gamma,
                },
                InsertionSpec {
                    kind: InsertionKind::Boundary,
                    position: [1.0, 0.0],
                    weight: gamma,
                },
            ],
            grid: PolarGridSpec::default(),
            n_modes: DEFAULT_MODES,
            n_arcs: None,
            n_replicas: 1024,
            n_draws: 10_000,
            method: CIntegralMethod::Auto,
            mobius: MobiusSpec {
                a: [0.3, 0.0],
                alpha: 0.0,
            },
        }
    }
}

impl LiouvilleConfig {
    fn insertions(&self) -> lqg_core::Result<InsertionSet> {
        let params = LiouvilleParams::new(self.gamma, self.mu, self.mu_boundary)?;
        InsertionSet::from_specs(&self.insertions, params)
    }

    fn setup(&self) -> ChaosSetup {
        ChaosSetup {
            grid: self.grid,
            n_modes: self.n_modes,
            n_arcs: self.n_arcs.unwrap_or(4 * self.n_modes),
        }
    }

    fn mobius(&self) -> lqg_core::Result<MobiusMap> {
        MobiusMap::new(Complex64::new(self.mobius.a[0], self.mobius.a[1]), self.mobius.alpha)
    }
}

fn verdict_json(v: &AdmissibilityVerdict, ins: &InsertionSet) -> serde_json::Value {
    json!({
        "verdict": v,
        "findings": v.findings(),
        "q": ins.params().q(),
    })
}

/// The verdict, or exit status 3 carrying it.
fn admissible(ins: &InsertionSet) -> CliResult<AdmissibilityVerdict> {
    let v = seiberg_check(ins)?;
    if v.admissible {
        Ok(v)
    } else {
        Err(CliError::Inadmissible {
            message: v.findings().join("; "),
            verdict: Some(verdict_json(&v, ins)),
        })
    }
}

pub fn findings(experiment: Experiment, c: &LiouvilleConfig) -> Vec<String> {
    let mut f = Vec::new();
    if let Some(ins) = note(&mut f, c.insertions()) {
        if let Some(v) = note(&mut f, seiberg_check(&ins)) {
            f.extend(v.findings());
        }
        if experiment == Experiment::KpzCovariance {
            if let Some(psi) = note(&mut f, c.mobius()) {
                if let Some(moved) = note(&mut f, ins.moved(&psi)) {
                    if let Some(v) = note(&mut f, seiberg_check(&moved)) {
                        f.extend(v.findings().into_iter().map(|m| format!("moved set: {m}")));
                    }
                }
            }
        }
    }
    if experiment == Experiment::SeibergValidate {
        return f;
    }
    if let Some(g) = note(&mut f, PolarGrid::new(c.grid)) {
        if let Err(e) = grid::check_separation(g.cells()) {
            f.push(format!("separation rule violated: {e}"));
        }
    }
    if c.n_modes == 0 {
        f.push("n_modes must be positive".into());
    }
    if c.n_arcs.unwrap_or(4 * c.n_modes) < 64 {
        f.push("need at least 64 boundary arcs".into());
    }
    let min_replicas = if experiment == Experiment::VolumeLaw { 1 } else { 100 };
    if c.n_replicas < min_replicas {
        f.push(format!("need at least {min_replicas} replicas, got {}", c.n_replicas));
    }
    if experiment == Experiment::VolumeLaw && c.n_draws == 0 {
        f.push("n_draws must be positive".into());
    }
    if experiment == Experiment::Partition && c.method == CIntegralMethod::Gamma && c.mu_boundary != 0.0 {
        f.push("the Gamma reduction needs mu_boundary = 0".into());
    }
    f
}

fn check(experiment: Experiment, c: &LiouvilleConfig) -> CliResult<InsertionSet> {
    let ins = c.insertions()?;
    admissible(&ins)?;
    if let Some(m) = findings(experiment, c).into_iter().next() {
        return Err(CliError::Config(m));
    }
    Ok(ins)
}

pub fn seiberg_validate(c: &LiouvilleConfig, run: &mut Run) -> CliResult<Output> {
    let ins = c.insertions()?;
    let v = seiberg_check(&ins)?;
    let report = verdict_json(&v, &ins);
    run.json("verdict.json", &report)?;
    let summary = Summary {
        anchor: "Seiberg bounds",
        estimator: "s_total = sum of weights minus Q".into(),
        estimate: v.s_total,
        stderr: 0.0,
        n_replicas: 0,
        passed: Some(v.admissible),
        diagnostics: report.clone(),
    };
    let mut out = Output::new(c, summary)?;
    if !v.admissible {
        out.failure = Some(CliError::Inadmissible {
            message: v.findings().join("; "),
            verdict: Some(report),
        });
    }
    Ok(out)
}

/// `(Z₀(𝔻), Z₀^∂(∂𝔻))` of replicas `0..n` rooted at `base`.
fn totals(model: &LiouvilleModel, base: &RngStream, n: usize, workers: usize) -> lqg_core::Result<Vec<(f64, f64)>> {
    model.replicas(base, n, workers, |p| (p.bulk_total(), p.boundary_total()))
}

pub fn partition(c: &LiouvilleConfig, run: &mut Run) -> CliResult<Output> {
    let ins = check(Experiment::Partition, c)?;
    let model = LiouvilleModel::new(&ins, c.setup())?;
    let t = totals(&model, &run.stream(0), c.n_replicas, run.workers)?;
    let mut table = CsvTable::new(&["replica", "bulk_total", "boundary_total"]);
    for (r, (i, j)) in t.iter().enumerate() {
        table.row(&[Cell::U(r as u64), Cell::F(*i), Cell::F(*j)]);
    }
    run.csv("totals.csv", &table)?;
    let est = partition_from_totals(&ins, &t, c.method)?;
    if !(est.value.is_finite() && est.stderr.is_finite()) {
        return Err(CliError::Numerical(format!(
            "partition estimate {} +- {} is not finite",
            est.value, est.stderr
        )));
    }
    let summary = Summary {
        anchor: "reduced partition function",
        estimator: "prefactor times the replica mean of the zero-mode integral".into(),
        estimate: est.value,
        stderr: est.stderr,
        n_replicas: est.n_replicas,
        passed: None,
        diagnostics: json!({
            "log_prefactor": est.log_prefactor,
            "s_total": est.s_total,
            "method": est.method,
            "n_cells": model.n_cells(),
        }),
    };
    Output::new(c, summary)
}

pub fn kpz_covariance(c: &LiouvilleConfig, run: &mut Run) -> CliResult<Output> {
    let ins = check(Experiment::KpzCovariance, c)?;
    let psi = c.mobius()?;
    let moved = ins.moved(&psi)?;
    admissible(&moved)?;
    let base = run.stream(0);
    let mut table = CsvTable::new(&["family", "replica", "bulk_total", "boundary_total"]);
    let mut estimates = Vec::new();
    for (family, set) in [("original", &ins), ("moved", &moved)] {
        let model = LiouvilleModel::new(set, c.setup())?;
        let stream = base.derive(estimates.len() as u64);
        let t = totals(&model, &stream, c.n_replicas, run.workers)?;
        for (r, (i, j)) in t.iter().enumerate() {
            table.row(&[Cell::S(family.into()), Cell::U(r as u64), Cell::F(*i), Cell::F(*j)]);
        }
        estimates.push(partition_from_totals(set, &t, CIntegralMethod::Auto)?);
    }
    run.csv("totals.csv", &table)?;
    let report = KpzReport::new(&ins, &psi, estimates[0], estimates[1]);
    let (o, m) = (report.original, report.moved);
    let ratio_se = report.observed_ratio * ((o.stderr / o.value).powi(2) + (m.stderr / m.value).powi(2)).sqrt();
    let summary = Summary {
        anchor: "conformal covariance of the partition function under Möbius maps",
        estimator: "ratio of partition functions after and before the map".into(),
        estimate: report.observed_ratio,
        stderr: ratio_se,
        n_replicas: c.n_replicas,
        passed: Some(report.z_score.abs() < 3.0),
        diagnostics: serde_json::to_value(report)?,
    };
    Output::new(c, summary)
}

pub fn volume_law(c: &LiouvilleConfig, run: &mut Run) -> CliResult<Output> {
    let ins = check(Experiment::VolumeLaw, c)?;
    let sampler = VolumeLawSampler::new(&ins, c.setup(), c.n_replicas, &run.stream(0), run.workers)?;
    let draws = sampler.draws(c.n_draws, &run.stream(1))?;
    let mut table = CsvTable::new(&["replica", "V", "L", "weight"]);
    for d in &draws {
        table.row(&[
            Cell::U(d.replica as u64),
            Cell::F(d.volume),
            Cell::F(d.length),
            Cell::F(d.weight),
        ]);
    }
    run.csv("draws.csv", &table)?;
    let volumes: Vec<f64> = draws.iter().map(|d| d.volume).collect();
    let est = stats::mean_stderr(&volumes);
    let gamma_law = match volume_law_params(&ins) {
        Ok(_) => Some(gamma_law_report(&ins, &sampler, &draws)?),
        Err(_) => None,
    };
    if let Some(r) = &gamma_law {
        run.json("gamma_law.json", r)?;
    }
    let summary = Summary {
        anchor: "joint law of volume and boundary length; Gamma law of the volume",
        estimator: "mean volume over draws".into(),
        estimate: est.mean,
        stderr: est.stderr,
        n_replicas: c.n_replicas,
        passed: gamma_law.map(|r| r.passed),
        diagnostics: json!({
            "n_draws": c.n_draws,
            "effective_sample_size": sampler.effective_sample_size(),
            "mean_length": stats::mean_stderr(&draws.iter().map(|d| d.length).collect::<Vec<_>>()),
            "gamma_law": gamma_law,
        }),
    };
    Output::new(c, summary)
}
