//! `field-sample`, `gmc-bulk`, `gmc-boundary` and `critical-ladder`.

use lqg_core::critical::{
    boundary_ladder, bulk_ladder, critical_boundary, critical_bulk, EpsLadder, LadderRun, Norming,
};
use lqg_core::gff::{sample_boundary_trace, FieldRealization, GaussianField, BLOCK};
use lqg_core::gmc::{boundary_measure, bulk_measure, expected_boundary_mass, expected_bulk_mass};
use lqg_core::grid::{self, CellShape, DiskLattice, PolarGrid, PolarGridSpec};
use lqg_core::io::{Cell, CsvTable};
use lqg_core::stats::{self, Estimate};
use lqg_core::{parallel, DiskPoint, Error, RngStream};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{note, Output};
use crate::error::{CliError, CliResult};
use crate::run::{Run, Summary};

fn first_finding(f: Vec<String>) -> CliResult<()> {
    match f.into_iter().next() {
        Some(m) => Err(CliError::Config(m)),
        None => Ok(()),
    }
}

/// Names the separation rule in overlap errors.
fn separation(r: lqg_core::Result<()>) -> lqg_core::Result<()> {
    r.map_err(|e| match e {
        Error::OverlappingCircles { .. } => Error::Configuration(format!("separation rule violated: {e}")),
        e => e,
    })
}

/// Replicas `0..n` of `field` rooted at `base`, blocks spread over `workers`.
fn field_replicas<T: Send>(
    field: &GaussianField,
    base: &RngStream,
    n: usize,
    workers: usize,
    f: impl Fn(&FieldRealization) -> lqg_core::Result<T> + Sync,
) -> lqg_core::Result<Vec<T>> {
    let blocks = parallel::map_ordered(n.div_ceil(BLOCK), workers, |b| {
        field
            .sample_block(base, b as u64)
            .iter()
            .map(&f)
            .collect::<lqg_core::Result<Vec<T>>>()
    })?;
    Ok(blocks.into_iter().flatten().take(n).collect())
}

fn mean_check(totals: &[f64], expected: f64) -> (Estimate, Option<f64>) {
    let est = stats::mean_stderr(totals);
    let z = expected.is_finite().then(|| est.z_score(expected));
    (est, z)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    /// Explicit points sharing the radius `eps`; the polar grid is used when absent.
    pub points: Option<Vec<[f64; 2]>>,
    pub eps: f64,
    pub grid: PolarGridSpec,
    pub n_replicas: usize,
    /// Replicas written out as `field_<r>.csv`.
    pub snapshots: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            points: None,
            eps: 0.01,
            grid: PolarGridSpec::default(),
            n_replicas: 64,
            snapshots: 1,
        }
    }
}

impl FieldConfig {
    fn support(&self) -> lqg_core::Result<(Vec<DiskPoint>, Vec<f64>)> {
        match &self.points {
            Some(points) => {
                let points = points
                    .iter()
                    .map(|&[re, im]| DiskPoint::interior(re, im))
                    .collect::<lqg_core::Result<Vec<_>>>()?;
                let cells: Vec<grid::Cell> = points
                    .iter()
                    .map(|&center| grid::Cell {
                        center,
                        eps: self.eps,
                        shape: CellShape::Square { side: 2.0 * self.eps },
                    })
                    .collect();
                separation(grid::check_separation(&cells))?;
                let n = points.len();
                Ok((points, vec![self.eps; n]))
            }
            None => {
                let g = PolarGrid::new(self.grid)?;
                separation(grid::check_separation(g.cells()))?;
                Ok((g.points(), g.eps()))
            }
        }
    }
}

pub fn field_findings(c: &FieldConfig) -> Vec<String> {
    let mut f = Vec::new();
    if c.points.as_ref().is_some_and(|p| p.is_empty()) {
        f.push("points must not be empty".into());
    }
    if c.points.is_some() && !(c.eps > 0.0) {
        f.push("eps must be positive".into());
    }
    if c.n_replicas == 0 {
        f.push("n_replicas must be positive".into());
    }
    if f.is_empty() {
        note(&mut f, c.support());
    }
    f
}

pub fn field_sample(c: &FieldConfig, run: &mut Run) -> CliResult<Output> {
    first_finding(field_findings(c))?;
    let (points, eps) = c.support()?;
    let field = GaussianField::new(points, eps.clone())?;
    let base = run.stream(0);
    let snapshots = c.snapshots.min(c.n_replicas);
    // normalised squares X²/Var, averaged per replica
    let rows = field_replicas(&field, &base, c.n_replicas, run.workers, |r| {
        let ratio: f64 = r
            .values()
            .iter()
            .zip(r.variances())
            .map(|(x, v)| x * x / v)
            .sum::<f64>()
            / r.len() as f64;
        Ok((ratio, r.clone()))
    })?;
    let uniform = eps.iter().all(|&e| e == eps[0]);
    for (i, (_, r)) in rows.iter().take(snapshots).enumerate() {
        let mut table = CsvTable::new(&["re", "im", "value"]);
        for (p, v) in r.points().iter().zip(r.values()) {
            table.row(&[Cell::F(p.re()), Cell::F(p.im()), Cell::F(*v)]);
        }
        let stream = r.stream().expect("sampled fields carry their stream");
        run.csv(&format!("field_{i:04}.csv"), &table)?;
        run.json(
            &format!("field_{i:04}.json"),
            &json!({
                "seed": stream.seed,
                "stream_id": stream.stream_id,
                "eps": if uniform { json!(eps[0]) } else { json!(eps) },
                "n_points": r.len(),
            }),
        )?;
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let est = stats::mean_stderr(&ratios);
    let z = est.z_score(1.0);
    let summary = Summary {
        anchor: "covariance of the circle-averaged Neumann free field",
        estimator: "mean of X(x)²/Var X(x) over points and replicas".into(),
        estimate: est.mean,
        stderr: est.stderr,
        n_replicas: c.n_replicas,
        passed: (c.n_replicas >= 2).then_some(z.abs() < 3.0),
        diagnostics: json!({ "n_points": field.len(), "target": 1.0, "z_score": z }),
    };
    Output::new(c, summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BulkConfig {
    pub gamma: f64,
    pub grid: PolarGridSpec,
    pub n_replicas: usize,
    /// Replica measures written out as `bulk_measure_<r>.csv`.
    pub snapshots: usize,
}

impl Default for BulkConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            grid: PolarGridSpec::default(),
            n_replicas: 256,
            snapshots: 1,
        }
    }
}

fn gamma_finding(f: &mut Vec<String>, gamma: f64) {
    if !(gamma > 0.0 && gamma < 2.0) {
        f.push(format!("subcritical chaos needs 0 < gamma < 2, got {gamma}"));
    }
}

pub fn bulk_findings(c: &BulkConfig) -> Vec<String> {
    let mut f = Vec::new();
    gamma_finding(&mut f, c.gamma);
    if c.n_replicas == 0 {
        f.push("n_replicas must be positive".into());
    }
    if let Some(g) = note(&mut f, PolarGrid::new(c.grid)) {
        note(&mut f, separation(grid::check_separation(g.cells())));
    }
    f
}

fn totals_table(totals: &[f64]) -> CsvTable {
    let mut t = CsvTable::new(&["replica", "mass"]);
    for (r, m) in totals.iter().enumerate() {
        t.row(&[Cell::U(r as u64), Cell::F(*m)]);
    }
    t
}

pub fn gmc_bulk(c: &BulkConfig, run: &mut Run) -> CliResult<Output> {
    first_finding(bulk_findings(c))?;
    let g = PolarGrid::new(c.grid)?;
    let field = GaussianField::from_cells(g.cells())?;
    let weights = g.chaos_weights(c.gamma);
    let snapshots = c.snapshots.min(c.n_replicas);
    let rows = field_replicas(&field, &run.stream(0), c.n_replicas, run.workers, |r| {
        let m = bulk_measure(r, c.gamma, &weights)?;
        Ok((m.total_mass(), m))
    })?;
    for (i, (_, m)) in rows.iter().take(snapshots).enumerate() {
        run.measure(&format!("bulk_measure_{i:04}"), m)?;
    }
    let totals: Vec<f64> = rows.iter().map(|r| r.0).collect();
    run.csv("totals.csv", &totals_table(&totals))?;
    let expected = expected_bulk_mass(c.gamma);
    let (est, z) = mean_check(&totals, expected);
    let summary = Summary {
        anchor: "expected total mass of subcritical bulk chaos",
        estimator: "mean total mass".into(),
        estimate: est.mean,
        stderr: est.stderr,
        n_replicas: c.n_replicas,
        passed: z.map(|z| z.abs() < 3.0),
        diagnostics: json!({
            "expected": expected.is_finite().then_some(expected),
            "z_score": z,
            "n_cells": g.len(),
        }),
    };
    Output::new(c, summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryConfig {
    pub gamma: f64,
    pub n_modes: usize,
    pub n_arcs: usize,
    pub n_replicas: usize,
    pub snapshots: usize,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            n_modes: 1024,
            n_arcs: 4096,
            n_replicas: 256,
            snapshots: 1,
        }
    }
}

pub fn boundary_findings(c: &BoundaryConfig) -> Vec<String> {
    let mut f = Vec::new();
    gamma_finding(&mut f, c.gamma);
    if c.n_modes == 0 {
        f.push("n_modes must be positive".into());
    }
    if c.n_arcs < 64 {
        f.push(format!("need at least 64 arcs, got {}", c.n_arcs));
    }
    if c.n_replicas == 0 {
        f.push("n_replicas must be positive".into());
    }
    f
}

pub fn gmc_boundary(c: &BoundaryConfig, run: &mut Run) -> CliResult<Output> {
    first_finding(boundary_findings(c))?;
    let base = run.stream(0);
    let snapshots = c.snapshots.min(c.n_replicas);
    let rows = parallel::map_ordered(c.n_replicas, run.workers, |r| {
        let stream = base.derive(r as u64);
        let trace = sample_boundary_trace(c.n_modes, &stream)?;
        let m = boundary_measure(&trace, c.gamma, c.n_arcs)?.with_seed(stream);
        Ok((m.total_mass(), (r < snapshots).then_some(m)))
    })?;
    for (i, (_, m)) in rows.iter().enumerate() {
        if let Some(m) = m {
            run.measure(&format!("boundary_measure_{i:04}"), m)?;
        }
    }
    let totals: Vec<f64> = rows.iter().map(|r| r.0).collect();
    run.csv("totals.csv", &totals_table(&totals))?;
    let expected = expected_boundary_mass(c.gamma);
    let (est, z) = mean_check(&totals, expected);
    let summary = Summary {
        anchor: "expected total mass of subcritical boundary chaos",
        estimator: "mean total mass".into(),
        estimate: est.mean,
        stderr: est.stderr,
        n_replicas: c.n_replicas,
        passed: z.map(|z| z.abs() < 3.0),
        diagnostics: json!({ "expected": expected, "z_score": z }),
    };
    Output::new(c, summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Support {
    Bulk,
    Boundary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderConfig {
    pub support: Support,
    /// Bulk: decreasing circle radii.
    pub eps: Vec<f64>,
    /// Bulk: radius of the lattice disk.
    pub radius: f64,
    /// Boundary: mode counts `2^k_min ..= 2^k_max`.
    pub k_min: u32,
    pub k_max: u32,
    pub arcs_per_mode: usize,
    pub n_replicas: usize,
    /// Order of the stabilisation moment.
    pub q: f64,
    /// Write the normed measure of replica 0 at the finest level.
    pub snapshot: bool,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            support: Support::Boundary,
            eps: (4..=9).map(|k| 0.5f64.powi(k)).collect(),
            radius: 0.125,
            k_min: 6,
            k_max: 11,
            arcs_per_mode: 4,
            n_replicas: 1000,
            q: 0.5,
            snapshot: true,
        }
    }
}

pub fn ladder_findings(c: &LadderConfig) -> Vec<String> {
    let mut f = Vec::new();
    if c.n_replicas < 100 {
        f.push(format!("need at least 100 replicas, got {}", c.n_replicas));
    }
    if !(c.q > 0.0) {
        f.push(format!("moment order must be positive, got {}", c.q));
    }
    match c.support {
        Support::Bulk => {
            if c.eps.len() < 4 {
                f.push(format!("need at least four ladder levels, got {}", c.eps.len()));
            }
            if let Some(ladder) = note(&mut f, EpsLadder::new(c.eps.clone())) {
                for &e in ladder.values() {
                    note(&mut f, DiskLattice::new(c.radius, e));
                }
            }
        }
        Support::Boundary => {
            if c.k_min < 6 || c.k_min > c.k_max {
                f.push(format!(
                    "mode ladder 2^{}..2^{} must start at 64 or more",
                    c.k_min, c.k_max
                ));
            } else if c.k_max - c.k_min < 3 {
                f.push(format!(
                    "need at least four ladder levels, got {}",
                    c.k_max - c.k_min + 1
                ));
            }
            if c.k_max > 20 {
                f.push(format!("2^{} modes is beyond what the ladder supports", c.k_max));
            }
            if c.arcs_per_mode < 2 {
                f.push("arcs_per_mode must be at least 2".into());
            }
        }
    }
    f
}

fn ladder_table(run: &LadderRun) -> CsvTable {
    let mut t = CsvTable::new(&["level", "scale", "replica", "seneta_heyde", "plain"]);
    for (level, scale) in run.scales.iter().enumerate() {
        for (r, (sh, plain)) in run.seneta_heyde[level].iter().zip(&run.plain[level]).enumerate() {
            t.row(&[
                Cell::U(level as u64),
                Cell::F(*scale),
                Cell::U(r as u64),
                Cell::F(*sh),
                Cell::F(*plain),
            ]);
        }
    }
    t
}

pub fn critical_ladder(c: &LadderConfig, run: &mut Run) -> CliResult<Output> {
    first_finding(ladder_findings(c))?;
    let base = run.stream(0);
    let ladder = match c.support {
        Support::Bulk => bulk_ladder(
            &EpsLadder::new(c.eps.clone())?,
            c.radius,
            c.n_replicas,
            &base,
            run.workers,
        )?,
        Support::Boundary => boundary_ladder(c.k_min, c.k_max, c.arcs_per_mode, c.n_replicas, &base, run.workers)?,
    };
    if !ladder.all_finite() {
        return Err(CliError::Numerical("a ladder total mass is not finite".into()));
    }
    run.csv("ladder.csv", &ladder_table(&ladder))?;
    if c.snapshot {
        // replica 0 of the finest level, as drawn by the ladder
        let m = match c.support {
            Support::Bulk => {
                let level = c.eps.len() - 1;
                let eps = c.eps[level];
                let lattice = DiskLattice::new(c.radius, eps)?;
                let field = GaussianField::uniform(lattice.points(), eps)?;
                let r = field.sample_block(&base.derive(level as u64), 0).swap_remove(0);
                critical_bulk(&r, eps, &lattice.areas(), Norming::SenetaHeyde)?
            }
            Support::Boundary => {
                let n = 1usize << c.k_max;
                let stream = base.derive(0);
                let trace = sample_boundary_trace(n, &stream)?;
                critical_boundary(&trace, c.arcs_per_mode * n, Norming::SenetaHeyde)?.with_seed(stream)
            }
        };
        run.measure("critical_measure", &m)?;
    }
    let summary = ladder.summary(c.q)?;
    let finest = *summary.moments.last().expect("ladder has levels");
    let out = Summary {
        anchor: "Seneta-Heyde norming of critical chaos",
        estimator: format!("E[M^{}] at the finest level, with the norming", c.q),
        estimate: finest.moment,
        stderr: finest.stderr,
        n_replicas: c.n_replicas,
        passed: Some(summary.passed()),
        diagnostics: serde_json::to_value(&summary)?,
    };
    Output::new(c, out)
}
