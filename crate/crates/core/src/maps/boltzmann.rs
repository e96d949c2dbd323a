use rand::Rng;
use serde::{Deserialize, Serialize};

use super::count::{log_count, LnFactorial};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::stats;

/// Largest tolerated probability mass beyond the truncation caps.
pub const TAIL_TOLERANCE: f64 = 1e-9;

/// Row entries below the row maximum by more than this (in log scale) are dropped.
const ROW_CUTOFF: f64 = 60.0;

fn ln12() -> f64 {
    12f64.ln()
}

fn half_ln_nine_halves() -> f64 {
    0.5 * 4.5f64.ln()
}

/// Boltzmann law on quadrangulations with a simple boundary:
/// `P(n, p) ∝ e^{-μ̄n - 2μ̄_∂p} |T_{n,p}|`, optionally times the number
/// `n - p + 1` of inner vertices (one marked inner vertex).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoltzmannConfig {
    /// Mesh size.
    pub a: f64,
    pub mu: f64,
    pub mu_boundary: f64,
    #[serde(default)]
    pub marked_vertex: bool,
    /// Critical bulk weight, `ln 12`.
    #[serde(default = "ln12")]
    pub mu_critical: f64,
    /// Critical weight per boundary edge, `½ ln(9/2)`.
    #[serde(default = "half_ln_nine_halves")]
    pub mu_boundary_critical: f64,
    /// Defaults to `⌈20/(a²μ)⌉`.
    #[serde(default)]
    pub n_max: Option<u64>,
    /// Defaults to `⌈20/(aμ_∂)⌉`, or no cap beyond `n_max + 1` when `μ_∂ = 0`.
    #[serde(default)]
    pub p_max: Option<u64>,
}

impl BoltzmannConfig {
    pub fn new(a: f64, mu: f64, mu_boundary: f64) -> Result<Self> {
        let cfg = Self {
            a,
            mu,
            mu_boundary,
            marked_vertex: false,
            mu_critical: ln12(),
            mu_boundary_critical: half_ln_nine_halves(),
            n_max: None,
            p_max: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_marked_vertex(mut self, marked: bool) -> Self {
        self.marked_vertex = marked;
        self
    }

    pub fn with_caps(mut self, n_max: u64, p_max: u64) -> Self {
        self.n_max = Some(n_max);
        self.p_max = Some(p_max);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::Parameter(format!("mesh a = {} must be positive", self.a)));
        }
        if !(self.mu >= 0.0 && self.mu_boundary >= 0.0) || !self.mu.is_finite() || !self.mu_boundary.is_finite() {
            return Err(Error::Parameter(format!(
                "need mu >= 0 and mu_boundary >= 0, got {} and {}",
                self.mu, self.mu_boundary
            )));
        }
        if self.mu == 0.0 && self.mu_boundary == 0.0 {
            return Err(Error::Parameter(
                "the Boltzmann law needs mu > 0 or mu_boundary > 0 (off-critical in at least one weight)".into(),
            ));
        }
        Ok(())
    }

    /// `μ̄ = μ_c + a²μ`.
    pub fn mu_bar(&self) -> f64 {
        self.mu_critical + self.a * self.a * self.mu
    }

    /// `μ̄_∂ = μ_∂^c + aμ_∂`, per boundary edge.
    pub fn mu_bar_boundary(&self) -> f64 {
        self.mu_boundary_critical + self.a * self.mu_boundary
    }

    /// Truncation caps `(N_max, P_max)`.
    pub fn caps(&self) -> Result<(u64, u64)> {
        let n_max = match self.n_max {
            Some(n) => n,
            None if self.mu > 0.0 => (20.0 / (self.a * self.a * self.mu)).ceil() as u64,
            None => {
                return Err(Error::Configuration(
                    "mu = 0 leaves the size unbounded: set n_max explicitly".into(),
                ))
            }
        };
        let p_max = match self.p_max {
            Some(p) => p,
            None if self.mu_boundary > 0.0 => (20.0 / (self.a * self.mu_boundary)).ceil() as u64,
            None => n_max + 1,
        };
        if p_max == 0 {
            return Err(Error::Configuration("p_max must be at least 1".into()));
        }
        Ok((n_max, p_max.min(n_max + 1)))
    }
}

/// The truncated law, tabulated by its `n`-marginal; rows in `p` are
/// recomputed on demand from a table of `ln k!`.
#[derive(Debug, Clone)]
pub struct BoltzmannTable {
    cfg: BoltzmannConfig,
    ln_fact: LnFactorial,
    n_max: u64,
    p_max: u64,
    /// Last `p` kept in each row.
    row_end: Vec<u64>,
    /// `ln Σ_p w(n, p)` for each `n`.
    log_marginal: Vec<f64>,
    /// Normalised cumulative distribution of `n`.
    cdf: Vec<f64>,
    log_total: f64,
    tail_mass: f64,
}

impl BoltzmannTable {
    pub fn new(cfg: BoltzmannConfig) -> Result<Self> {
        cfg.validate()?;
        let (n_max, p_max) = cfg.caps()?;
        let ln_fact = LnFactorial::new(2 * n_max + 3 * p_max + 2);
        let mut table = Self {
            cfg,
            ln_fact,
            n_max,
            p_max,
            row_end: Vec::with_capacity(n_max as usize + 1),
            log_marginal: Vec::with_capacity(n_max as usize + 1),
            cdf: Vec::new(),
            log_total: 0.0,
            tail_mass: 0.0,
        };
        let mut p_tail = Vec::new();
        for n in 0..=n_max {
            let last = (n + 1).min(p_max);
            let mut best = f64::NEG_INFINITY;
            let mut terms = Vec::new();
            let mut end = 0;
            for p in 1..=last {
                let w = table.log_weight(n, p);
                best = best.max(w);
                terms.push(w);
                end = p;
                if w < best - ROW_CUTOFF && p > 1 && w < terms[terms.len() - 2] {
                    break;
                }
            }
            let lm = log_sum_exp(&terms);
            if end == p_max && p_max < n + 1 && end >= 2 {
                // geometric extrapolation of the dropped part of the row
                let (w1, w0) = (terms[terms.len() - 1], terms[terms.len() - 2]);
                p_tail.push(geometric_tail(w1, w1 - w0));
            }
            table.row_end.push(end);
            table.log_marginal.push(lm);
        }
        let lt = log_sum_exp(&table.log_marginal);
        let mut tails = p_tail;
        if n_max >= 1 {
            let (m1, m0) = (
                table.log_marginal[n_max as usize],
                table.log_marginal[n_max as usize - 1],
            );
            tails.push(geometric_tail(m1, m1 - m0));
        }
        let tail = tails.iter().map(|t| (t - lt).exp()).sum::<f64>();
        if !(tail < TAIL_TOLERANCE) {
            return Err(Error::Configuration(format!(
                "estimated probability beyond the caps (n_max = {n_max}, p_max = {p_max}) is {tail:.3e} > {TAIL_TOLERANCE:e}: increase the caps"
            )));
        }
        let mut acc = 0.0;
        table.cdf = table
            .log_marginal
            .iter()
            .map(|m| {
                acc += (m - lt).exp();
                acc
            })
            .collect();
        let last = *table.cdf.last().expect("n_max >= 0");
        table.cdf.iter_mut().for_each(|c| *c /= last);
        table.log_total = lt;
        table.tail_mass = tail;
        Ok(table)
    }

    pub fn config(&self) -> &BoltzmannConfig {
        &self.cfg
    }

    pub fn caps(&self) -> (u64, u64) {
        (self.n_max, self.p_max)
    }

    /// Estimated probability mass lost to the caps.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Unnormalised `ln w(n, p)`.
    pub fn log_weight(&self, n: u64, p: u64) -> f64 {
        let mut w = -self.cfg.mu_bar() * n as f64 - 2.0 * self.cfg.mu_bar_boundary() * p as f64
            + log_count(n, p, &self.ln_fact);
        if self.cfg.marked_vertex {
            w += ((n + 1).saturating_sub(p) as f64).ln();
        }
        w
    }

    /// `ln P(n, p)` under the truncated law.
    pub fn log_prob(&self, n: u64, p: u64) -> f64 {
        if n > self.n_max || p == 0 || p > self.row_end[n as usize] {
            return f64::NEG_INFINITY;
        }
        self.log_weight(n, p) - self.log_total
    }

    /// `P(N = n)` under the truncated law.
    pub fn marginal_n(&self, n: u64) -> f64 {
        if n > self.n_max {
            return 0.0;
        }
        (self.log_marginal[n as usize] - self.log_total).exp()
    }

    /// Support of row `n` after truncation, `1..=row_end(n)`.
    pub fn row_end(&self, n: u64) -> u64 {
        self.row_end[n as usize]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (u64, u64) {
        let u: f64 = rng.random();
        let n = self.cdf.partition_point(|&c| c < u).min(self.n_max as usize) as u64;
        let lm = self.log_marginal[n as usize];
        let v: f64 = rng.random();
        let mut acc = 0.0;
        let end = self.row_end[n as usize];
        for p in 1..=end {
            acc += (self.log_weight(n, p) - lm).exp();
            if acc >= v {
                return (n, p);
            }
        }
        (n, end)
    }

    /// `n_draws` draws from `stream`.
    pub fn sample_many(&self, n_draws: usize, stream: &RngStream) -> Vec<(u64, u64)> {
        let mut rng = stream.rng();
        (0..n_draws).map(|_| self.sample(&mut rng)).collect()
    }

    /// `(n, p, ln w)` for `n <= n_limit`, the rows as kept in the table.
    pub fn rows(&self, n_limit: u64) -> impl Iterator<Item = (u64, u64, f64)> + '_ {
        (0..=n_limit.min(self.n_max))
            .flat_map(move |n| (1..=self.row_end[n as usize]).map(move |p| (n, p, self.log_weight(n, p))))
    }
}

/// `ln Σ_{k>=1} e^{w + k·slope}` for a decreasing geometric sequence.
fn geometric_tail(w: f64, slope: f64) -> f64 {
    if slope >= 0.0 {
        return f64::INFINITY;
    }
    w + slope - (-(slope.exp_m1())).ln()
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Draws against the exact truncated law, cell by cell.
#[derive(Debug, Clone, Serialize)]
pub struct HistogramReport {
    pub n_draws: usize,
    /// Cells with at least `min_expected` expected hits.
    pub cells: Vec<HistogramCell>,
    pub min_expected: f64,
    pub max_abs_z: f64,
    /// Every powered cell within 3 standard errors.
    pub passed: bool,
    /// Pearson statistic over the powered cells plus one cell lumping the rest.
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct HistogramCell {
    pub n: u64,
    pub p: u64,
    pub expected: f64,
    pub observed: u64,
    pub z: f64,
}

pub fn histogram_check(table: &BoltzmannTable, draws: &[(u64, u64)], min_expected: f64) -> HistogramReport {
    let total = draws.len() as f64;
    let mut counts = std::collections::HashMap::new();
    for &d in draws {
        *counts.entry(d).or_insert(0u64) += 1;
    }
    let mut cells = Vec::new();
    for n in 0..=table.n_max {
        if total * table.marginal_n(n) < min_expected {
            continue;
        }
        for p in 1..=table.row_end(n) {
            let prob = table.log_prob(n, p).exp();
            let expected = total * prob;
            if expected < min_expected {
                continue;
            }
            let observed = counts.get(&(n, p)).copied().unwrap_or(0);
            let se = (total * prob * (1.0 - prob)).sqrt();
            cells.push(HistogramCell {
                n,
                p,
                expected,
                observed,
                z: (observed as f64 - expected) / se,
            });
        }
    }
    let max_abs_z = cells.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
    let mut chi_square: f64 = cells
        .iter()
        .map(|c| (c.observed as f64 - c.expected).powi(2) / c.expected)
        .sum();
    let rest_expected = total - cells.iter().map(|c| c.expected).sum::<f64>();
    let rest_observed = total - cells.iter().map(|c| c.observed as f64).sum::<f64>();
    let mut bins = cells.len();
    if rest_expected > 1e-9 * total {
        chi_square += (rest_observed - rest_expected).powi(2) / rest_expected;
        bins += 1;
    }
    let dof = bins.saturating_sub(1);
    let p_value = if dof > 0 {
        stats::chi_square_sf(chi_square, dof as f64)
    } else {
        1.0
    };
    HistogramReport {
        n_draws: draws.len(),
        chi_square,
        dof,
        p_value,
        passed: max_abs_z <= 3.0,
        max_abs_z,
        min_expected,
        cells,
    }
}
