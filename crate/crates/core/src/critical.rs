//! Critical (`γ = 2`) chaos with the Seneta–Heyde norming `√(ln 1/ε)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DiskPoint;
use crate::gff::{sample_boundary_trace, BoundaryTrace, FieldRealization, GaussianField, BLOCK};
use crate::gmc::{Atom, AtomicMeasure, Cutoff, MeasureMeta, Support};
use crate::grid::DiskLattice;
use crate::parallel;
use crate::rng::RngStream;
use crate::stats::{self, Estimate};

/// Strictly decreasing regularisation scales in `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EpsLadder {
    eps: Vec<f64>,
}

impl EpsLadder {
    pub fn new(eps: Vec<f64>) -> Result<Self> {
        if eps.is_empty() || eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) || eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Parameter(format!("not a decreasing ladder in (0, 1): {eps:?}")));
        }
        Ok(Self { eps })
    }

    /// `ε_k = 2^{-k}` for `k = k_min..=k_max`.
    pub fn dyadic(k_min: u32, k_max: u32) -> Result<Self> {
        Self::new((k_min..=k_max).map(|k| 0.5f64.powi(k as i32)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.eps
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }
}

impl TryFrom<Vec<f64>> for EpsLadder {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<EpsLadder> for Vec<f64> {
    fn from(l: EpsLadder) -> Self {
        l.eps
    }
}

/// Whether the extra `√(ln 1/ε)` factor is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Norming {
    SenetaHeyde,
    /// The subcritical recipe evaluated at `γ = 2`; its limit is the zero measure.
    Plain,
}

/// `√(ln 1/ε) ε² e^{2X_ε} · area` at every point of the field.
pub fn seneta_heyde_bulk(field: &FieldRealization, eps: f64, cell_areas: &[f64]) -> Result<AtomicMeasure> {
    critical_bulk(field, eps, cell_areas, Norming::SenetaHeyde)
}

pub fn critical_bulk(
    field: &FieldRealization,
    eps: f64,
    cell_areas: &[f64],
    norming: Norming,
) -> Result<AtomicMeasure> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!(
            "critical norming needs eps in (0, 1), got {eps}"
        )));
    }
    if cell_areas.len() != field.len() {
        return Err(Error::Configuration(format!(
            "{} cell areas for {} field values",
            cell_areas.len(),
            field.len()
        )));
    }
    let factor = match norming {
        Norming::SenetaHeyde => (-eps.ln()).sqrt() * eps * eps,
        Norming::Plain => eps * eps,
    };
    let atoms = field
        .values()
        .iter()
        .zip(field.points())
        .zip(cell_areas)
        .map(|((&x, &p), &a)| Atom {
            location: p,
            mass: factor * (2.0 * x).exp() * a,
        })
        .collect();
    AtomicMeasure::new(
        atoms,
        MeasureMeta {
            support_kind: Support::Bulk,
            gamma: 2.0,
            eps_or_modes: Cutoff::Eps(eps),
            seed: field.stream(),
            critical: true,
        },
    )
}

/// Boundary measure `√(Var_N/2) e^{X_b(θ_m) - Var_N/2} · 2π/n_arcs` for a
/// trace with `N >= 64` modes; `Var_N/2 = ln N + O(1)` plays the role of
/// `ln 1/ε` with `ε = 1/N`.
pub fn seneta_heyde_boundary(trace: &BoundaryTrace, n_arcs: usize) -> Result<AtomicMeasure> {
    critical_boundary(trace, n_arcs, Norming::SenetaHeyde)
}

pub fn critical_boundary(trace: &BoundaryTrace, n_arcs: usize, norming: Norming) -> Result<AtomicMeasure> {
    if trace.n_modes() < 64 {
        return Err(Error::Parameter(format!(
            "critical boundary chaos needs at least 64 modes, got {}",
            trace.n_modes()
        )));
    }
    if n_arcs < trace.n_modes() {
        return Err(Error::Configuration(format!(
            "{n_arcs} arcs cannot resolve {} modes",
            trace.n_modes()
        )));
    }
    let half_var = 0.5 * trace.variance();
    let factor = match norming {
        Norming::SenetaHeyde => half_var.sqrt(),
        Norming::Plain => 1.0,
    };
    let arc = 2.0 * std::f64::consts::PI / n_arcs as f64;
    let atoms = trace
        .eval_midpoints(n_arcs)
        .into_iter()
        .enumerate()
        .map(|(m, x)| Atom {
            location: DiskPoint::boundary(arc * (m as f64 + 0.5)),
            mass: factor * (x - half_var).exp() * arc,
        })
        .collect();
    AtomicMeasure::new(
        atoms,
        MeasureMeta {
            support_kind: Support::Boundary,
            gamma: 2.0,
            eps_or_modes: Cutoff::Modes(trace.n_modes()),
            seed: None,
            critical: true,
        },
    )
}

/// Empirical `E[M^q]` of replica total masses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentDiagnostic {
    pub q: f64,
    pub moment: f64,
    pub stderr: f64,
    pub n_replicas: usize,
    /// `q >= 1`: moments of critical chaos are only guaranteed for `q < 1`.
    pub outside_guarantee: bool,
}

pub fn moment_diagnostic(measures: &[AtomicMeasure], q: f64) -> Result<MomentDiagnostic> {
    let totals: Vec<f64> = measures.iter().map(AtomicMeasure::total_mass).collect();
    moment_of_totals(&totals, q)
}

/// As [`moment_diagnostic`] on precomputed totals. The jackknife error of a
/// plain mean coincides with the usual standard error.
pub fn moment_of_totals(totals: &[f64], q: f64) -> Result<MomentDiagnostic> {
    if !(q > 0.0) {
        return Err(Error::Parameter(format!("moment order must be positive, got {q}")));
    }
    if totals.len() < 100 {
        return Err(Error::Parameter(format!(
            "need at least 100 replicas, got {}",
            totals.len()
        )));
    }
    let powers: Vec<f64> = totals.iter().map(|m| m.powf(q)).collect();
    let Estimate { mean, stderr, n } = stats::mean_stderr(&powers);
    Ok(MomentDiagnostic {
        q,
        moment: mean,
        stderr,
        n_replicas: n,
        outside_guarantee: q >= 1.0,
    })
}

/// Replica total masses at every level of a ladder, for both normings.
#[derive(Debug, Clone, Serialize)]
pub struct LadderRun {
    /// `ε` (bulk) or `1/N` (boundary) per level.
    pub scales: Vec<f64>,
    pub seneta_heyde: Vec<Vec<f64>>,
    pub plain: Vec<Vec<f64>>,
}

impl LadderRun {
    pub fn medians(&self, norming: Norming) -> Vec<f64> {
        self.totals(norming).iter().map(|t| stats::median(t)).collect()
    }

    pub fn totals(&self, norming: Norming) -> &[Vec<f64>] {
        match norming {
            Norming::SenetaHeyde => &self.seneta_heyde,
            Norming::Plain => &self.plain,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.seneta_heyde
            .iter()
            .chain(&self.plain)
            .flatten()
            .all(|m| m.is_finite())
    }
}

/// Stabilisation diagnostics of a ladder run.
#[derive(Debug, Clone, Serialize)]
pub struct LadderSummary {
    pub scales: Vec<f64>,
    pub plain_medians: Vec<f64>,
    pub seneta_heyde_medians: Vec<f64>,
    /// Plain medians strictly decrease over the last four levels.
    pub plain_decreasing: bool,
    /// Consecutive median ratios over the last three levels, with the norming.
    pub seneta_heyde_ratios: Vec<f64>,
    /// Every ratio lies in `[0.75, 1.33]`.
    pub ratios_in_band: bool,
    /// `E[M^q]` per level, with the norming.
    pub moments: Vec<MomentDiagnostic>,
    /// Largest over smallest moment across the last three levels.
    pub moment_spread: f64,
    /// `moment_spread <= 1.25`.
    pub moments_stable: bool,
}

impl LadderSummary {
    pub fn passed(&self) -> bool {
        self.plain_decreasing && self.ratios_in_band && self.moments_stable
    }
}

impl LadderRun {
    /// Needs at least four levels.
    pub fn summary(&self, q: f64) -> Result<LadderSummary> {
        let levels = self.scales.len();
        if levels < 4 {
            return Err(Error::Parameter(format!(
                "need at least four ladder levels, got {levels}"
            )));
        }
        let plain_medians = self.medians(Norming::Plain);
        let seneta_heyde_medians = self.medians(Norming::SenetaHeyde);
        let plain_decreasing = plain_medians[levels - 4..].windows(2).all(|w| w[1] < w[0]);
        let seneta_heyde_ratios: Vec<f64> = seneta_heyde_medians[levels - 3..]
            .windows(2)
            .map(|w| w[1] / w[0])
            .collect();
        let ratios_in_band = seneta_heyde_ratios.iter().all(|r| (0.75..=1.33).contains(r));
        let moments = self
            .seneta_heyde
            .iter()
            .map(|t| moment_of_totals(t, q))
            .collect::<Result<Vec<_>>>()?;
        let tail = &moments[levels - 3..];
        let hi = tail.iter().map(|m| m.moment).fold(f64::NEG_INFINITY, f64::max);
        let lo = tail.iter().map(|m| m.moment).fold(f64::INFINITY, f64::min);
        let moment_spread = hi / lo;
        Ok(LadderSummary {
            scales: self.scales.clone(),
            plain_medians,
            seneta_heyde_medians,
            plain_decreasing,
            seneta_heyde_ratios,
            ratios_in_band,
            moments,
            moment_spread,
            moments_stable: moment_spread <= 1.25,
        })
    }
}

/// Bulk ladder on the square lattices of spacing `2ε` filling the disk of
/// radius `radius`. Each level draws its own replicas `base.derive(level)`,
/// in blocks spread over `workers` threads.
pub fn bulk_ladder(
    ladder: &EpsLadder,
    radius: f64,
    n_replicas: usize,
    base: &RngStream,
    workers: usize,
) -> Result<LadderRun> {
    let mut run = LadderRun {
        scales: ladder.values().to_vec(),
        seneta_heyde: Vec::new(),
        plain: Vec::new(),
    };
    for (level, &eps) in ladder.values().iter().enumerate() {
        let lattice = DiskLattice::new(radius, eps)?;
        let field = GaussianField::uniform(lattice.points(), eps)?;
        let areas = lattice.areas();
        let stream = base.derive(level as u64);
        let blocks = parallel::map_ordered(n_replicas.div_ceil(BLOCK), workers, |b| {
            field
                .sample_block(&stream, b as u64)
                .iter()
                .map(|r| {
                    Ok((
                        critical_bulk(r, eps, &areas, Norming::SenetaHeyde)?.total_mass(),
                        critical_bulk(r, eps, &areas, Norming::Plain)?.total_mass(),
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let (sh, plain): (Vec<f64>, Vec<f64>) = blocks.into_iter().flatten().take(n_replicas).unzip();
        run.seneta_heyde.push(sh);
        run.plain.push(plain);
    }
    Ok(run)
}

/// Boundary ladder `N = 2^k` with common random numbers: replica `r` draws
/// one trace with the largest mode count from `base.derive(r)` and truncates
/// it. Measures use `arcs_per_mode · N` arcs.
pub fn boundary_ladder(
    k_min: u32,
    k_max: u32,
    arcs_per_mode: usize,
    n_replicas: usize,
    base: &RngStream,
    workers: usize,
) -> Result<LadderRun> {
    if k_min > k_max || k_min < 6 {
        return Err(Error::Parameter(format!(
            "mode ladder 2^{k_min}..2^{k_max} must start at 64 or more"
        )));
    }
    let levels: Vec<usize> = (k_min..=k_max).map(|k| 1usize << k).collect();
    let rows = parallel::map_ordered(n_replicas, workers, |r| {
        let full = sample_boundary_trace(*levels.last().unwrap(), &base.derive(r as u64))?;
        levels
            .iter()
            .map(|&n| {
                let trace = full.truncated(n)?;
                Ok((
                    critical_boundary(&trace, arcs_per_mode * n, Norming::SenetaHeyde)?.total_mass(),
                    critical_boundary(&trace, arcs_per_mode * n, Norming::Plain)?.total_mass(),
                ))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let column = |pick: fn(&(f64, f64)) -> f64| -> Vec<Vec<f64>> {
        (0..levels.len())
            .map(|i| rows.iter().map(|row| pick(&row[i])).collect())
            .collect()
    };
    Ok(LadderRun {
        scales: levels.iter().map(|&n| 1.0 / n as f64).collect(),
        seneta_heyde: column(|t| t.0),
        plain: column(|t| t.1),
    })
}
