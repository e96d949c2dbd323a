//! Marked points: Seiberg bounds, Girsanov drifts, the reduced partition
//! function and the joint law of volume and boundary length.

mod model;
mod partition;
mod volume;

pub use model::{ChaosSetup, LiouvilleModel, ShiftedChaosPair};
pub use partition::{
    c_integral, c_integral_gamma, kpz_covariance, kpz_log_factor, partition_estimate, partition_from_totals,
    CIntegralMethod, KpzReport, PartitionEstimate,
};
pub use volume::{
    gamma_law_report, unit_volume_expectation, volume_law_params, GammaLawReport, LiouvilleDraw, UnitVolumeEstimate,
    VolumeLawSampler,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{green, poincare_density, DiskPoint, LiouvilleParams, MobiusMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BulkInsertion {
    pub point: DiskPoint,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryInsertion {
    pub point: DiskPoint,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InsertionKind {
    Bulk,
    Boundary,
}

/// One marked point as written in experiment configurations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InsertionSpec {
    pub kind: InsertionKind,
    pub position: [f64; 2],
    pub weight: f64,
}

/// Bulk points `(z_i, α_i)`, boundary points `(s_j, β_j)` and the couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct InsertionSet {
    bulk: Vec<BulkInsertion>,
    boundary: Vec<BoundaryInsertion>,
    params: LiouvilleParams,
}

impl InsertionSet {
    pub fn new(bulk: Vec<BulkInsertion>, boundary: Vec<BoundaryInsertion>, params: LiouvilleParams) -> Result<Self> {
        params.validate()?;
        for b in &bulk {
            if b.point.is_boundary() {
                return Err(Error::Domain("bulk insertions must lie inside the disk".into()));
            }
        }
        for b in &boundary {
            if !b.point.is_boundary() {
                return Err(Error::Domain("boundary insertions must lie on the unit circle".into()));
            }
        }
        let set = Self { bulk, boundary, params };
        let pts: Vec<DiskPoint> = set.marked_points().map(|(p, _)| p).collect();
        for (i, p) in pts.iter().enumerate() {
            if pts[..i].iter().any(|q| q.distance(p) == 0.0) {
                return Err(Error::Singularity(format!(
                    "marked point ({}, {}) is repeated",
                    p.re(),
                    p.im()
                )));
            }
        }
        Ok(set)
    }

    pub fn from_specs(specs: &[InsertionSpec], params: LiouvilleParams) -> Result<Self> {
        let mut bulk = Vec::new();
        let mut boundary = Vec::new();
        for s in specs {
            let [re, im] = s.position;
            match s.kind {
                InsertionKind::Bulk => bulk.push(BulkInsertion {
                    point: DiskPoint::interior(re, im)?,
                    alpha: s.weight,
                }),
                InsertionKind::Boundary => {
                    let p = DiskPoint::new(re, im)?;
                    if !p.is_boundary() {
                        return Err(Error::Domain(format!(
                            "boundary insertion ({re}, {im}) is not on the unit circle"
                        )));
                    }
                    boundary.push(BoundaryInsertion {
                        point: p,
                        beta: s.weight,
                    })
                }
            }
        }
        Self::new(bulk, boundary, params)
    }

    /// Insertions only, no marked points.
    pub fn empty(params: LiouvilleParams) -> Result<Self> {
        Self::new(Vec::new(), Vec::new(), params)
    }

    pub fn bulk(&self) -> &[BulkInsertion] {
        &self.bulk
    }

    pub fn boundary(&self) -> &[BoundaryInsertion] {
        &self.boundary
    }

    pub fn params(&self) -> &LiouvilleParams {
        &self.params
    }

    pub fn with_params(&self, params: LiouvilleParams) -> Result<Self> {
        Self::new(self.bulk.clone(), self.boundary.clone(), params)
    }

    /// `Σ α_i + Σ β_j/2 - Q`.
    pub fn s_total(&self) -> f64 {
        self.marked_points().map(|(_, w)| w).sum::<f64>() - self.params.q()
    }

    /// Every marked point with its coefficient in the drift: `α_i` in the
    /// bulk, `β_j/2` on the boundary.
    pub fn marked_points(&self) -> impl Iterator<Item = (DiskPoint, f64)> + '_ {
        self.bulk
            .iter()
            .map(|b| (b.point, b.alpha))
            .chain(self.boundary.iter().map(|b| (b.point, 0.5 * b.beta)))
    }

    /// The insertions moved by `ψ`, weights unchanged.
    pub fn moved(&self, psi: &MobiusMap) -> Result<Self> {
        Self::new(
            self.bulk
                .iter()
                .map(|b| BulkInsertion {
                    point: psi.apply(b.point),
                    alpha: b.alpha,
                })
                .collect(),
            self.boundary
                .iter()
                .map(|b| BoundaryInsertion {
                    point: psi.apply(b.point),
                    beta: b.beta,
                })
                .collect(),
            self.params,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmissibilityCase {
    MuPositive,
    MuZeroBoundaryPositive,
}

/// Outcome of the Seiberg bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityVerdict {
    pub case: AdmissibilityCase,
    /// `s_total > 0`.
    pub bound1_ok: bool,
    /// `α_i < Q` for all bulk points.
    pub bound2_ok: bool,
    /// `β_j < Q` for all boundary points.
    pub bound3_ok: bool,
    pub admissible: bool,
    pub s_total: f64,
}

impl AdmissibilityVerdict {
    /// Human-readable list of the violated bounds that matter in this case.
    pub fn findings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.bound1_ok {
            out.push(format!("bound1 violated: s_total = {} must be positive", self.s_total));
        }
        if !self.bound2_ok && self.case == AdmissibilityCase::MuPositive {
            out.push("bound2 violated: every bulk alpha must be below Q".to_string());
        }
        if !self.bound3_ok {
            out.push("bound3 violated: every boundary beta must be below Q".to_string());
        }
        out
    }
}

pub fn seiberg_check(ins: &InsertionSet) -> Result<AdmissibilityVerdict> {
    let p = ins.params();
    p.validate()?;
    let q = p.q();
    let s_total = ins.s_total();
    let bound1_ok = s_total > 0.0;
    let bound2_ok = ins.bulk().iter().all(|b| b.alpha < q);
    let bound3_ok = ins.boundary().iter().all(|b| b.beta < q);
    let (case, admissible) = if p.mu > 0.0 {
        (AdmissibilityCase::MuPositive, bound1_ok && bound2_ok && bound3_ok)
    } else {
        (AdmissibilityCase::MuZeroBoundaryPositive, bound1_ok && bound3_ok)
    };
    Ok(AdmissibilityVerdict {
        case,
        bound1_ok,
        bound2_ok,
        bound3_ok,
        admissible,
        s_total,
    })
}

/// `H(x) = Σ α_i G(x, z_i) + Σ (β_j/2) G(x, s_j)`.
pub fn insertion_drift(ins: &InsertionSet, x: DiskPoint) -> Result<f64> {
    let mut h = 0.0;
    for (p, w) in ins.marked_points() {
        if p.distance(&x) == 0.0 {
            return Err(Error::Singularity(format!(
                "drift evaluated at the marked point ({}, {})",
                p.re(),
                p.im()
            )));
        }
        h += w * green(x, p)?;
    }
    Ok(h)
}

/// `C(z, s) = Σ_{i<i'} α_i α_i' G(z_i, z_i') + Σ_{j<j'} (β_j β_j'/4) G(s_j, s_j')
///          + Σ_{i,j} (α_i β_j/2) G(z_i, s_j) - Σ_j β_j²/8`.
pub fn log_constant(ins: &InsertionSet) -> Result<f64> {
    let pts: Vec<(DiskPoint, f64)> = ins.marked_points().collect();
    let mut c = 0.0;
    for (i, &(p, w)) in pts.iter().enumerate() {
        for &(q, v) in &pts[..i] {
            c += w * v * green(p, q).map_err(|_| Error::Singularity("coincident marked points".into()))?;
        }
    }
    Ok(c - ins.boundary().iter().map(|b| b.beta * b.beta / 8.0).sum::<f64>())
}

/// `ln Π_i g_P(z_i)^{α_i²/4}`, the renormalisation of the bulk vertex
/// operators `ε^{α²/2} e^{α X_ε(z)}`.
pub fn log_vertex_prefactor(ins: &InsertionSet) -> Result<f64> {
    ins.bulk()
        .iter()
        .map(|b| Ok(0.25 * b.alpha * b.alpha * poincare_density(b.point)?.ln()))
        .sum()
}
