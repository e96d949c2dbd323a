//! Subcritical multiplicative chaos measures, atomised on cell centres (bulk)
//! or arc midpoints (boundary).

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DiskPoint, MobiusMap};
use crate::gff::{BoundaryTrace, FieldRealization};
use crate::io::{self, Cell, CsvTable};
use crate::rng::RngStream;
use crate::stats::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Support {
    Bulk,
    Boundary,
}

/// Regularisation that produced a measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cutoff {
    /// Smallest circle-average radius.
    Eps(f64),
    /// Number of Fourier modes of the boundary trace.
    Modes(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: DiskPoint,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureMeta {
    pub support_kind: Support,
    pub gamma: f64,
    pub eps_or_modes: Cutoff,
    pub seed: Option<RngStream>,
    #[serde(default)]
    pub critical: bool,
}

/// A finite sum of point masses.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    atoms: Vec<Atom>,
    meta: MeasureMeta,
}

impl AtomicMeasure {
    pub fn new(atoms: Vec<Atom>, meta: MeasureMeta) -> Result<Self> {
        for a in &atoms {
            if !(a.mass >= 0.0) || a.mass.is_infinite() {
                return Err(Error::Numerical(format!(
                    "atom mass {} is not a finite nonnegative number",
                    a.mass
                )));
            }
            let on_boundary = a.location.is_boundary();
            if on_boundary != (meta.support_kind == Support::Boundary) {
                return Err(Error::Domain(format!(
                    "atom at ({}, {}) does not lie on the {:?} support",
                    a.location.re(),
                    a.location.im(),
                    meta.support_kind
                )));
            }
        }
        Ok(Self { atoms, meta })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Records the stream the measure was drawn from.
    pub fn with_seed(mut self, stream: RngStream) -> Self {
        self.meta.seed = Some(stream);
        self
    }

    pub fn meta(&self) -> &MeasureMeta {
        &self.meta
    }

    pub fn support(&self) -> Support {
        self.meta.support_kind
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).collect::<CompensatedSum>().value()
    }

    /// `Σ f(x) m(x)`.
    pub fn integrate(&self, f: impl Fn(DiskPoint) -> f64) -> f64 {
        self.atoms
            .iter()
            .map(|a| f(a.location) * a.mass)
            .collect::<CompensatedSum>()
            .value()
    }

    /// Mass of the set `{x : inside(x)}`.
    pub fn mass_of(&self, inside: impl Fn(DiskPoint) -> bool) -> f64 {
        self.integrate(|x| if inside(x) { 1.0 } else { 0.0 })
    }

    /// Atoms moved to `ψ(x)`, masses unchanged.
    pub fn push_forward(&self, psi: &MobiusMap) -> AtomicMeasure {
        AtomicMeasure {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    location: psi.apply(a.location),
                    mass: a.mass,
                })
                .collect(),
            meta: self.meta.clone(),
        }
    }

    /// Multiplies every mass by `w(x)`.
    pub fn reweighted(&self, w: impl Fn(DiskPoint) -> f64) -> Result<AtomicMeasure> {
        AtomicMeasure::new(
            self.atoms
                .iter()
                .map(|a| Atom {
                    location: a.location,
                    mass: a.mass * w(a.location),
                })
                .collect(),
            self.meta.clone(),
        )
    }

    /// The probability measure `m / m(total)`.
    pub fn normalized(&self) -> Result<AtomicMeasure> {
        let total = self.total_mass();
        if !(total > 0.0) {
            return Err(Error::Numerical("cannot normalise a measure of zero mass".into()));
        }
        self.reweighted(|_| 1.0 / total)
    }

    /// Writes `re,im,mass` rows to `path` and the metadata to `path` with a
    /// `.json` extension.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut t = CsvTable::new(&["re", "im", "mass"]);
        for a in &self.atoms {
            t.row(&[Cell::F(a.location.re()), Cell::F(a.location.im()), Cell::F(a.mass)]);
        }
        t.write(path)?;
        io::write_json(path.with_extension("json"), &self.meta)
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 2.0) {
        return Err(Error::Parameter(format!(
            "subcritical chaos needs 0 < gamma < 2, got {gamma}; use the critical measures at gamma = 2"
        )));
    }
    Ok(())
}

/// Bulk chaos `e^{γX_ε(x) - (γ²/2) E[X_ε(x)²]} w(x)` with per-cell weights
/// `w ≈ ∫_cell (1 - |y|²)^{-γ²/2} dy`.
///
/// With `w = g_P(x)^{γ²/4} · area` this is `ε^{γ²/2} e^{γX_ε} · area`; the
/// grids in [`crate::grid`] supply the exactly integrated weights, which remove
/// the midpoint bias near the circle.
pub fn bulk_measure(field: &FieldRealization, gamma: f64, cell_weights: &[f64]) -> Result<AtomicMeasure> {
    check_gamma(gamma)?;
    bulk_atoms(field, gamma, cell_weights, false)
}

pub(crate) fn bulk_atoms(
    field: &FieldRealization,
    gamma: f64,
    cell_weights: &[f64],
    critical: bool,
) -> Result<AtomicMeasure> {
    if cell_weights.len() != field.len() {
        return Err(Error::Configuration(format!(
            "{} cell weights for {} field values",
            cell_weights.len(),
            field.len()
        )));
    }
    let half = 0.5 * gamma * gamma;
    let atoms = field
        .values()
        .iter()
        .zip(field.variances())
        .zip(field.points())
        .zip(cell_weights)
        .map(|(((&x, var), &p), &w)| Atom {
            location: p,
            mass: (gamma * x - half * var).exp() * w,
        })
        .collect();
    let eps = field.eps().iter().copied().fold(f64::INFINITY, f64::min);
    AtomicMeasure::new(
        atoms,
        MeasureMeta {
            support_kind: Support::Bulk,
            gamma,
            eps_or_modes: Cutoff::Eps(eps),
            seed: field.stream(),
            critical,
        },
    )
}

/// Midpoint weights `(1 - |x|²)^{-γ²/2} · area`.
pub fn midpoint_weights(points: &[DiskPoint], areas: &[f64], gamma: f64) -> Vec<f64> {
    points
        .iter()
        .zip(areas)
        .map(|(p, a)| (1.0 - p.norm().powi(2)).powf(-0.5 * gamma * gamma) * a)
        .collect()
}

/// Boundary chaos `e^{-γ²/8} e^{(γ/2)X_b(θ_m) - (γ²/8)Var_N} · 2π/n_arcs` on
/// the arc midpoints `θ_m = 2π(m + 1/2)/n_arcs`.
pub fn boundary_measure(trace: &BoundaryTrace, gamma: f64, n_arcs: usize) -> Result<AtomicMeasure> {
    check_gamma(gamma)?;
    if n_arcs < 64 {
        return Err(Error::Configuration(format!("need at least 64 arcs, got {n_arcs}")));
    }
    let g2 = gamma * gamma / 8.0;
    let shift = -g2 - g2 * trace.variance();
    let arc = 2.0 * PI / n_arcs as f64;
    let atoms = trace
        .eval_midpoints(n_arcs)
        .into_iter()
        .enumerate()
        .map(|(m, x)| Atom {
            location: DiskPoint::boundary(arc * (m as f64 + 0.5)),
            mass: (0.5 * gamma * x + shift).exp() * arc,
        })
        .collect();
    AtomicMeasure::new(
        atoms,
        MeasureMeta {
            support_kind: Support::Boundary,
            gamma,
            eps_or_modes: Cutoff::Modes(trace.n_modes()),
            seed: None,
            critical: false,
        },
    )
}

/// `∫_𝔻 (1 - |x|²)^{-γ²/2} dλ = π / (1 - γ²/2)`, infinite for `γ² >= 2`.
pub fn expected_bulk_mass(gamma: f64) -> f64 {
    let d = 1.0 - 0.5 * gamma * gamma;
    if d > 0.0 {
        PI / d
    } else {
        f64::INFINITY
    }
}

/// `2π e^{-γ²/8}`.
pub fn expected_boundary_mass(gamma: f64) -> f64 {
    2.0 * PI * (-gamma * gamma / 8.0).exp()
}
