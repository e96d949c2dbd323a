use std::f64::consts::{EULER_GAMMA, PI};

use serde::{Deserialize, Serialize};

use super::{seiberg_check, InsertionSet};
use crate::error::{Error, Result};
use crate::geometry::DiskPoint;
use crate::gff::{BoundaryTrace, CoupledField, FieldRealization, BLOCK, DEFAULT_MODES};
use crate::gmc::{check_gamma, Atom, AtomicMeasure, Cutoff, MeasureMeta, Support};
use crate::grid::{Cell, CellShape, PolarGrid, PolarGridSpec};
use crate::parallel;
use crate::rng::RngStream;

/// Discretisation of the chaos pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChaosSetup {
    pub grid: PolarGridSpec,
    pub n_modes: usize,
    pub n_arcs: usize,
}

impl Default for ChaosSetup {
    fn default() -> Self {
        Self {
            grid: PolarGridSpec::default(),
            n_modes: DEFAULT_MODES,
            n_arcs: 4 * DEFAULT_MODES,
        }
    }
}

/// The drifted measures `Z₀ = e^{γH} e^{γX} dλ` and
/// `Z₀^∂ = e^{(γ/2)H} e^{(γ/2)X} dλ_∂` of one replica.
#[derive(Debug, Clone)]
pub struct ShiftedChaosPair {
    pub z0: AtomicMeasure,
    pub z0_boundary: AtomicMeasure,
    /// `Z₀(𝔻) / Z₀^∂(∂𝔻)²`.
    pub ratio: f64,
}

impl ShiftedChaosPair {
    pub fn bulk_total(&self) -> f64 {
        self.z0.total_mass()
    }

    pub fn boundary_total(&self) -> f64 {
        self.z0_boundary.total_mass()
    }
}

/// Everything needed to draw chaos replicas for one insertion set: the joint
/// sampler of the bulk field on the grid cells and its boundary trace, and the
/// drift weights of cells and arcs.
#[derive(Debug, Clone)]
pub struct LiouvilleModel {
    ins: InsertionSet,
    setup: ChaosSetup,
    field: CoupledField,
    variances: Vec<f64>,
    /// `∫_cell (1 - |x|²)^{-γ²/2} e^{γH} dλ`.
    bulk_weights: Vec<f64>,
    /// Mean of `e^{(γ/2)H}` over each arc.
    arc_weights: Vec<f64>,
}

impl LiouvilleModel {
    /// Builds the model for an admissible insertion set.
    pub fn new(ins: &InsertionSet, setup: ChaosSetup) -> Result<Self> {
        let v = seiberg_check(ins)?;
        if !v.admissible {
            return Err(Error::Inadmissible(v.findings().join("; ")));
        }
        Self::new_unchecked(ins, setup)
    }

    /// Builds the model without the Seiberg check, e.g. to watch a forbidden
    /// insertion blow up under refinement.
    pub fn new_unchecked(ins: &InsertionSet, setup: ChaosSetup) -> Result<Self> {
        let gamma = ins.params().gamma;
        check_gamma(gamma)?;
        if setup.n_arcs < 64 || setup.n_arcs < setup.n_modes || setup.n_modes == 0 {
            return Err(Error::Configuration(format!(
                "need 64 <= n_arcs and n_modes <= n_arcs, got {} arcs and {} modes",
                setup.n_arcs, setup.n_modes
            )));
        }
        let grid = PolarGrid::new(setup.grid)?;
        let cells = grid.cells();
        // the bulk drift is cut off at the radius of the cell nearest to each
        // marked point, the boundary drift at the scale of the last trace mode
        let bulk_marks = Marks::new(ins, |p| {
            cells
                .iter()
                .min_by(|a, b| a.center.distance(&p).total_cmp(&b.center.distance(&p)))
                .map_or(f64::MIN_POSITIVE, |c| c.eps)
        });
        let trace_marks = Marks::new(ins, |_| (-EULER_GAMMA).exp() / setup.n_modes as f64);
        let field = CoupledField::from_cells(cells, setup.n_modes)?;
        let mut bulk_weights = Vec::with_capacity(cells.len());
        for c in cells {
            let (num, den) = cell_drift(&bulk_marks, gamma, c)?;
            bulk_weights.push(c.chaos_weight(gamma) * num / den);
        }
        let arc = 2.0 * PI / setup.n_arcs as f64;
        let arc_weights = (0..setup.n_arcs)
            .map(|m| arc_drift(&trace_marks, gamma, arc * m as f64, arc * (m + 1) as f64) / arc)
            .collect();
        let variances = (0..field.len()).map(|i| field.covariance(i, i)).collect();
        Ok(Self {
            ins: ins.clone(),
            setup,
            field,
            variances,
            bulk_weights,
            arc_weights,
        })
    }

    pub fn insertions(&self) -> &InsertionSet {
        &self.ins
    }

    pub fn setup(&self) -> ChaosSetup {
        self.setup
    }

    /// Number of bulk atoms after exclusion.
    pub fn n_cells(&self) -> usize {
        self.field.len()
    }

    pub fn field(&self) -> &CoupledField {
        &self.field
    }

    /// Drifted chaos pair built from a field draw on this model's cells and a
    /// boundary trace.
    pub fn shifted_chaos(&self, field: &FieldRealization, trace: &BoundaryTrace) -> Result<ShiftedChaosPair> {
        if field.len() != self.field.len() {
            return Err(Error::Configuration(
                "field realisation does not match the model grid".into(),
            ));
        }
        let gamma = self.ins.params().gamma;
        let half = 0.5 * gamma * gamma;
        let atoms = field
            .values()
            .iter()
            .zip(&self.variances)
            .zip(field.points())
            .zip(&self.bulk_weights)
            .map(|(((&x, &var), &p), &w)| Atom {
                location: p,
                mass: (gamma * x - half * var).exp() * w,
            })
            .collect();
        let z0 = AtomicMeasure::new(
            atoms,
            MeasureMeta {
                support_kind: Support::Bulk,
                gamma,
                eps_or_modes: Cutoff::Eps(field.eps().iter().copied().fold(f64::INFINITY, f64::min)),
                seed: field.stream(),
                critical: false,
            },
        )?;

        let n = self.setup.n_arcs;
        let arc = 2.0 * PI / n as f64;
        let g8 = gamma * gamma / 8.0;
        let shift = -g8 - g8 * trace.variance();
        let atoms = trace
            .eval_midpoints(n)
            .into_iter()
            .zip(&self.arc_weights)
            .enumerate()
            .map(|(m, (x, &w))| Atom {
                location: DiskPoint::boundary(arc * (m as f64 + 0.5)),
                mass: (0.5 * gamma * x + shift).exp() * arc * w,
            })
            .collect();
        let z0_boundary = AtomicMeasure::new(
            atoms,
            MeasureMeta {
                support_kind: Support::Boundary,
                gamma,
                eps_or_modes: Cutoff::Modes(trace.n_modes()),
                seed: None,
                critical: false,
            },
        )?;
        let ratio = z0.total_mass() / z0_boundary.total_mass().powi(2);
        Ok(ShiftedChaosPair { z0, z0_boundary, ratio })
    }

    /// Replicas `BLOCK·block ..` of the family rooted at `base`, mapped through `f`.
    ///
    /// Replica `r` uses the stream `base.derive(0).derive(r)` for the bulk field
    /// given the trace and `base.derive(1).derive(r)` for the trace, so its
    /// value depends on `r` only.
    pub fn replica_block<T>(
        &self,
        base: &RngStream,
        block: u64,
        f: &impl Fn(&ShiftedChaosPair) -> T,
    ) -> Result<Vec<T>> {
        let bulk_base = base.derive(0);
        let trace_base = base.derive(1);
        let mut out = Vec::with_capacity(BLOCK);
        for (field, trace) in self.field.sample_block(&bulk_base, &trace_base, block)? {
            out.push(f(&self.shifted_chaos(&field, &trace)?));
        }
        Ok(out)
    }

    /// Replicas `0..n`, mapped through `f`, with blocks spread over `workers`
    /// threads. The result does not depend on `workers`.
    pub fn replicas<T, F>(&self, base: &RngStream, n: usize, workers: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&ShiftedChaosPair) -> T + Sync,
    {
        let blocks = n.div_ceil(BLOCK);
        let per_block = parallel::map_ordered(blocks, workers, |b| self.replica_block(base, b as u64, &f))?;
        Ok(per_block.into_iter().flatten().take(n).collect())
    }

    /// Replica `r` alone; identical to entry `r` of [`Self::replicas`].
    pub fn replica(&self, base: &RngStream, r: usize) -> Result<ShiftedChaosPair> {
        let block = (r / BLOCK) as u64;
        let mut v = self.replica_block(base, block, &|p: &ShiftedChaosPair| p.clone())?;
        Ok(v.swap_remove(r % BLOCK))
    }
}

/// Subdivisions per level of the drift quadrature.
const SPLIT: usize = 8;

/// Marked points with their weights and the resolution `ε` at which the
/// drift `Σ w G(x, p)` is cut off, i.e. `|x - p|` and `|1 - x p̄|` are
/// replaced by their maximum with `ε`.
struct Marks {
    points: Vec<(DiskPoint, f64, f64)>,
    min_eps: f64,
}

impl Marks {
    fn new(ins: &InsertionSet, eps: impl Fn(DiskPoint) -> f64) -> Self {
        let points: Vec<_> = ins.marked_points().map(|(p, w)| (p, w, eps(p))).collect();
        let min_eps = points.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
        Self { points, min_eps }
    }

    fn nearest(&self, x: DiskPoint) -> f64 {
        self.points
            .iter()
            .map(|(p, _, _)| p.distance(&x))
            .fold(f64::INFINITY, f64::min)
    }

    fn drift(&self, x: DiskPoint) -> f64 {
        let z = x.as_complex();
        self.points
            .iter()
            .map(|&(p, w, eps)| {
                let cross = (1.0 - z * p.as_complex().conj()).norm();
                -w * (p.distance(&x).max(eps).ln() + cross.max(eps).ln())
            })
            .sum()
    }
}

/// `(∫_cell ρ e^{γH}, ∫_cell ρ)` with `ρ = (1 - |x|²)^{-γ²/2}`, by a midpoint
/// rule refined around the marked points down to their cutoff.
fn cell_drift(marks: &Marks, gamma: f64, c: &Cell) -> Result<(f64, f64)> {
    match c.shape {
        CellShape::Sector { r_in, r_out, dtheta } => {
            let t = if c.center.is_origin() { 0.0 } else { c.center.arg() };
            let chart = |r: f64, th: f64| DiskPoint::polar(r, th);
            let jac = |r: f64| r;
            box_drift(
                marks,
                gamma,
                &chart,
                &jac,
                [r_in, r_out, t - 0.5 * dtheta, t + 0.5 * dtheta],
            )
        }
        CellShape::Square { side } => {
            let (x, y) = (c.center.re(), c.center.im());
            let h = 0.5 * side;
            let chart = |u: f64, v: f64| DiskPoint::new(u, v);
            let jac = |_: f64| 1.0;
            box_drift(marks, gamma, &chart, &jac, [x - h, x + h, y - h, y + h])
        }
    }
}

fn box_drift(
    marks: &Marks,
    gamma: f64,
    chart: &dyn Fn(f64, f64) -> Result<DiskPoint>,
    jac: &dyn Fn(f64) -> f64,
    [u0, u1, v0, v1]: [f64; 4],
) -> Result<(f64, f64)> {
    let (du, dv) = ((u1 - u0) / SPLIT as f64, (v1 - v0) / SPLIT as f64);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..SPLIT {
        for k in 0..SPLIT {
            let (a, b) = (u0 + i as f64 * du, u0 + (i + 1) as f64 * du);
            let (c, d) = (v0 + k as f64 * dv, v0 + (k + 1) as f64 * dv);
            let (u, v) = (0.5 * (a + b), 0.5 * (c + d));
            let x = chart(u, v)?;
            let size = du.max(jac(b) * dv);
            if marks.nearest(x) < 4.0 * size && size > 0.25 * marks.min_eps {
                let (n, w) = box_drift(marks, gamma, chart, jac, [a, b, c, d])?;
                num += n;
                den += w;
                continue;
            }
            let w = jac(u) * du * dv * (1.0 - x.norm().powi(2)).powf(-0.5 * gamma * gamma);
            den += w;
            num += w * (gamma * marks.drift(x)).exp();
        }
    }
    Ok((num, den))
}

/// `∫_{t0}^{t1} e^{(γ/2)H(e^{iθ})} dθ`, refined around the marked points.
fn arc_drift(marks: &Marks, gamma: f64, t0: f64, t1: f64) -> f64 {
    let split = 2 * SPLIT;
    let h = (t1 - t0) / split as f64;
    let mut total = 0.0;
    for i in 0..split {
        let (a, b) = (t0 + i as f64 * h, t0 + (i + 1) as f64 * h);
        let x = DiskPoint::boundary(0.5 * (a + b));
        total += if marks.nearest(x) < 2.0 * h && h > 0.25 * marks.min_eps {
            arc_drift(marks, gamma, a, b)
        } else {
            h * (0.5 * gamma * marks.drift(x)).exp()
        };
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::LiouvilleParams;
    use crate::liouville::{BoundaryInsertion, BulkInsertion};
    use statrs::function::beta::beta_reg;
    use statrs::function::gamma::ln_gamma;

    fn small() -> ChaosSetup {
        ChaosSetup {
            grid: PolarGridSpec {
                core_rings: 3,
                bands: 4,
                sub_rings: 1,
            },
            n_modes: 64,
            n_arcs: 256,
        }
    }

    #[test]
    fn no_insertions_gives_plain_chaos() {
        let p = LiouvilleParams::new(1.0, 1.0, 0.0).unwrap();
        let ins = InsertionSet::empty(p).unwrap();
        let model = LiouvilleModel::new_unchecked(&ins, small()).unwrap();
        let grid = PolarGrid::new(small().grid).unwrap();
        assert_eq!(model.n_cells(), grid.len());
        let pair = model.replica(&RngStream::new(1, 0), 3).unwrap();
        let base = RngStream::new(1, 0);
        let (field, trace) = CoupledField::from_cells(grid.cells(), 64)
            .unwrap()
            .sample_block(&base.derive(0), &base.derive(1), 0)
            .unwrap()
            .swap_remove(3);
        let plain = crate::gmc::bulk_measure(&field, 1.0, &grid.chaos_weights(1.0)).unwrap();
        assert!((pair.bulk_total() / plain.total_mass() - 1.0).abs() < 1e-12);
        let b = crate::gmc::boundary_measure(&trace, 1.0, 256).unwrap();
        assert!((pair.boundary_total() / b.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_drift_is_integrated() {
        // one insertion at the origin, cut off at the centre cell radius ε:
        // Σ weights = ∫ (1 - r²)^{-γ²/2} max(r, ε)^{-γα} dλ
        let (gamma, alpha) = (1.0, 1.2);
        let ins = InsertionSet::new(
            vec![BulkInsertion {
                point: DiskPoint::ORIGIN,
                alpha,
            }],
            vec![],
            LiouvilleParams::new(gamma, 1.0, 0.0).unwrap(),
        )
        .unwrap();
        let model = LiouvilleModel::new_unchecked(&ins, small()).unwrap();
        let total: f64 = model.bulk_weights.iter().sum();
        let (a, b) = (1.0 - 0.5 * gamma * alpha, 1.0 - 0.5 * gamma * gamma);
        let eps = PolarGrid::new(small().grid).unwrap().cells()[0].eps;
        let e2 = eps * eps;
        let outer = PI * (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp() * (1.0 - beta_reg(a, b, e2));
        let inner = eps.powf(-gamma * alpha) * 2.0 * PI * (1.0 - (1.0 - e2).sqrt());
        let exact = outer + inner;
        assert!((total / exact - 1.0).abs() < 1e-3, "{total} vs {exact}");
    }

    #[test]
    fn boundary_drift_is_integrated() {
        // one boundary insertion: the mean of |e^{iθ} - 1|^{-γβ/2} is Γ(1 - γβ/2) / Γ(1 - γβ/4)²,
        // less the part cut off below ε
        let (gamma, beta) = (1.0, 1.0);
        let ins = InsertionSet::new(
            vec![],
            vec![BoundaryInsertion {
                point: DiskPoint::boundary(0.0),
                beta,
            }],
            LiouvilleParams::new(gamma, 1.0, 1.0).unwrap(),
        )
        .unwrap();
        let model = LiouvilleModel::new_unchecked(&ins, small()).unwrap();
        let mean = model.arc_weights.iter().sum::<f64>() / model.arc_weights.len() as f64;
        let e = 0.5 * gamma * beta;
        let eps = (-EULER_GAMMA).exp() / 64.0;
        let t = 2.0 * (0.5 * eps).asin();
        let cut = (2.0 * t * eps.powf(-e) - 2.0 * t.powf(1.0 - e) / (1.0 - e)) / (2.0 * PI);
        let exact = (ln_gamma(1.0 - e) - 2.0 * ln_gamma(1.0 - 0.5 * e)).exp() + cut;
        assert!((mean / exact - 1.0).abs() < 1e-3, "{mean} vs {exact}");
        let pair = model.replica(&RngStream::new(2, 0), 0).unwrap();
        assert!(pair.ratio > 0.0 && pair.ratio.is_finite());
    }

    #[test]
    fn inadmissible_sets_are_rejected() {
        let p = LiouvilleParams::new(1.0, 1.0, 0.0).unwrap();
        let ins = InsertionSet::new(
            vec![BulkInsertion {
                point: DiskPoint::ORIGIN,
                alpha: 0.5,
            }],
            vec![],
            p,
        )
        .unwrap();
        assert!(matches!(
            LiouvilleModel::new(&ins, small()),
            Err(Error::Inadmissible(_))
        ));
    }

    #[test]
    fn block_and_single_replicas_agree() {
        let p = LiouvilleParams::new(1.0, 1.0, 0.0).unwrap();
        let ins = InsertionSet::empty(p).unwrap();
        let model = LiouvilleModel::new_unchecked(&ins, small()).unwrap();
        let base = RngStream::new(4, 4);
        let all = model.replicas(&base, 70, 3, |p| p.bulk_total()).unwrap();
        assert_eq!(all[66], model.replica(&base, 66).unwrap().bulk_total());
        assert_eq!(all, model.replicas(&base, 70, 1, |p| p.bulk_total()).unwrap());
    }
}
