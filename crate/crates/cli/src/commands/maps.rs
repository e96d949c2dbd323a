//! `maps-count`, `maps-sample` and `maps-density`.

use lqg_core::io::{Cell, CsvTable};
use lqg_core::maps::{
    count_exact, density_report, histogram_check, log_count_asymptotic, AsymptoticForm, BoltzmannConfig,
    BoltzmannTable, DensityBins,
};
use lqg_core::parallel;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{note, Output};
use crate::error::{CliError, CliResult};
use crate::run::{Run, Summary};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountConfig {
    /// Exact table over `0 <= n <= n_max`, `1 <= p <= p_max`.
    pub n_max: u64,
    pub p_max: u64,
    /// `n` values compared with the asymptotic at `p = ⌊√n⌋`.
    pub asymptotic: Vec<u64>,
    pub form: AsymptoticForm,
    /// Allowed relative gap of the asymptotic at the largest `n`.
    pub tolerance: f64,
}

impl Default for CountConfig {
    fn default() -> Self {
        Self {
            n_max: 200,
            p_max: 20,
            asymptotic: vec![10_000, 100_000, 1_000_000],
            form: AsymptoticForm::NineHalves,
            tolerance: 0.02,
        }
    }
}

pub fn count_findings(c: &CountConfig) -> Vec<String> {
    let mut f = Vec::new();
    if c.p_max == 0 {
        f.push("p_max must be at least 1".into());
    }
    if c.asymptotic.contains(&0) {
        f.push("asymptotic comparisons need n >= 1".into());
    }
    if c.asymptotic.iter().any(|&n| n > 100_000_000) {
        f.push("exact counts beyond n = 1e8 are out of reach".into());
    }
    if c.asymptotic.windows(2).any(|w| w[1] <= w[0]) {
        f.push("asymptotic n values must increase".into());
    }
    f
}

pub fn maps_count(c: &CountConfig, run: &mut Run) -> CliResult<Output> {
    if let Some(m) = count_findings(c).into_iter().next() {
        return Err(CliError::Config(m));
    }
    let rows = parallel::map_ordered(c.n_max as usize + 1, run.workers, |n| {
        (1..=c.p_max)
            .map(|p| count_exact(n as u64, p))
            .collect::<lqg_core::Result<Vec<_>>>()
    })?;
    let mut table = CsvTable::new(&["n", "p", "count", "ln_count"]);
    for m in rows.iter().flatten() {
        table.row(&[
            Cell::U(m.n),
            Cell::U(m.p),
            Cell::S(m.count.to_string()),
            Cell::F(m.ln()),
        ]);
    }
    run.csv("counts.csv", &table)?;

    let asym = parallel::map_ordered(c.asymptotic.len(), run.workers, |i| {
        let n = c.asymptotic[i];
        let p = ((n as f64).sqrt().floor() as u64).max(1);
        let exact = count_exact(n, p)?.ln();
        let approx = log_count_asymptotic(n, p, c.form)?;
        Ok((n, p, exact, approx, (approx - exact).exp()))
    })?;
    let mut table = CsvTable::new(&["n", "p", "ln_exact", "ln_asymptotic", "ratio"]);
    for &(n, p, e, a, r) in &asym {
        table.row(&[Cell::U(n), Cell::U(p), Cell::F(e), Cell::F(a), Cell::F(r)]);
    }
    run.csv("asymptotic.csv", &table)?;

    let pins = [(0, 1, 1u32), (1, 1, 2)]
        .iter()
        .map(|&(n, p, want)| count_exact(n, p).map(|m| m.count == want.into()))
        .collect::<lqg_core::Result<Vec<_>>>()?
        .into_iter()
        .all(|ok| ok);
    let gaps: Vec<f64> = asym.iter().map(|a| (a.4 - 1.0).abs()).collect();
    let improving = gaps.windows(2).all(|w| w[1] < w[0]);
    let last = asym.last().map(|a| a.4).unwrap_or(f64::NAN);
    let within = gaps.last().is_some_and(|&g| g <= c.tolerance);
    let summary = Summary {
        anchor: "enumeration of quadrangulations with a simple boundary",
        estimator: "asymptotic over exact count at the largest n, p = floor(sqrt n)".into(),
        estimate: last,
        stderr: 0.0,
        n_replicas: 0,
        passed: Some(pins && improving && (asym.is_empty() || within)),
        diagnostics: json!({
            "pinned_small_counts": pins,
            "integral_table_entries": rows.iter().map(Vec::len).sum::<usize>(),
            "relative_gaps": gaps,
            "gaps_decrease": improving,
        }),
    };
    Output::new(c, summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoltzmannCli {
    pub a: f64,
    pub mu: f64,
    pub mu_boundary: f64,
    /// Weight by the number of inner vertices; `maps-density` always does.
    pub marked_vertex: bool,
    pub n_max: Option<u64>,
    pub p_max: Option<u64>,
    pub n_draws: usize,
    /// `maps-sample`: cells with fewer expected hits are not tested.
    pub min_expected: f64,
    /// `maps-sample`: rows of the weight table written out.
    pub table_n_max: u64,
    /// `maps-density`: binning of the rescaled draws.
    pub bins: DensityBins,
}

impl Default for BoltzmannCli {
    fn default() -> Self {
        Self {
            a: 0.01,
            mu: 1.0,
            mu_boundary: 1.0,
            marked_vertex: false,
            n_max: None,
            p_max: None,
            n_draws: 100_000,
            min_expected: 100.0,
            table_n_max: 1000,
            bins: DensityBins::default(),
        }
    }
}

impl BoltzmannCli {
    fn config(&self, marked: bool) -> lqg_core::Result<BoltzmannConfig> {
        let mut cfg = BoltzmannConfig::new(self.a, self.mu, self.mu_boundary)?.with_marked_vertex(marked);
        cfg.n_max = self.n_max;
        cfg.p_max = self.p_max;
        cfg.validate()?;
        cfg.caps()?;
        Ok(cfg)
    }
}

pub fn boltzmann_findings(c: &BoltzmannCli) -> Vec<String> {
    let mut f = Vec::new();
    if c.n_draws == 0 {
        f.push("n_draws must be positive".into());
    }
    if !(c.min_expected > 0.0) {
        f.push("min_expected must be positive".into());
    }
    note(&mut f, c.bins.validate());
    if let Some(cfg) = note(&mut f, c.config(c.marked_vertex)) {
        // the truncation tail bound comes from the table itself
        note(&mut f, BoltzmannTable::new(cfg));
    }
    f
}

fn draws_table(draws: &[(u64, u64)]) -> CsvTable {
    let mut t = CsvTable::new(&["draw_index", "n", "p"]);
    for (i, &(n, p)) in draws.iter().enumerate() {
        t.row(&[Cell::U(i as u64), Cell::U(n), Cell::U(p)]);
    }
    t
}

fn precheck(c: &BoltzmannCli) -> CliResult<()> {
    let mut f = Vec::new();
    if c.n_draws == 0 {
        f.push("n_draws must be positive".to_string());
    }
    if !(c.min_expected > 0.0) {
        f.push("min_expected must be positive".to_string());
    }
    note(&mut f, c.bins.validate());
    match f.into_iter().next() {
        Some(m) => Err(CliError::Config(m)),
        None => Ok(()),
    }
}

pub fn maps_sample(c: &BoltzmannCli, run: &mut Run) -> CliResult<Output> {
    precheck(c)?;
    let table = BoltzmannTable::new(c.config(c.marked_vertex)?)?;
    let mut weights = CsvTable::new(&["n", "p", "log_weight"]);
    for (n, p, w) in table.rows(c.table_n_max) {
        weights.row(&[Cell::U(n), Cell::U(p), Cell::F(w)]);
    }
    run.csv("weights.csv", &weights)?;
    let draws = table.sample_many(c.n_draws, &run.stream(0));
    run.csv("draws.csv", &draws_table(&draws))?;
    let report = histogram_check(&table, &draws, c.min_expected);
    run.json("histogram.json", &report)?;
    let summary = Summary {
        anchor: "Boltzmann law of quadrangulations with a boundary",
        estimator: "largest |z| over adequately powered (n, p) cells".into(),
        estimate: report.max_abs_z,
        stderr: 0.0,
        n_replicas: c.n_draws,
        passed: Some(report.passed),
        diagnostics: json!({
            "powered_cells": report.cells.len(),
            "chi_square": report.chi_square,
            "dof": report.dof,
            "p_value": report.p_value,
            "caps": table.caps(),
            "tail_mass": table.tail_mass(),
        }),
    };
    Output::new(c, summary)
}

pub fn maps_density(c: &BoltzmannCli, run: &mut Run) -> CliResult<Output> {
    precheck(c)?;
    let cfg = c.config(true)?;
    let table = BoltzmannTable::new(cfg)?;
    let draws = table.sample_many(c.n_draws, &run.stream(0));
    run.csv("draws.csv", &draws_table(&draws))?;
    let report = density_report(&cfg, c.bins, &draws)?;
    run.json("density.json", &report)?;
    let summary = Summary {
        anchor: "conjectured joint density of rescaled volume and boundary length",
        estimator: "Pearson chi-square of binned (a²n, 2ap) against the density".into(),
        estimate: report.chi_square,
        stderr: (2.0 * report.dof as f64).sqrt(),
        n_replicas: c.n_draws,
        passed: Some(report.p_value > 0.01),
        diagnostics: json!({
            "dof": report.dof,
            "p_value": report.p_value,
            "n_in_range": report.n_in_range,
            "underpowered_bins": report.underpowered_bins,
            "slice": report.slice,
            "marked_vertex": true,
            "tail_mass": table.tail_mass(),
        }),
    };
    Output::new(c, summary)
}
