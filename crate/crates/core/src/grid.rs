//! Point sets on which the regularised field is sampled.
//!
//! Every layout keeps its cell centres at least `ε_i + ε_j` apart, so all
//! covariance entries of the circle-averaged field are available in closed
//! form.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DiskPoint;

/// One cell of a layout: the atom location, its regularisation radius and the
/// cell geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub center: DiskPoint,
    pub eps: f64,
    pub shape: CellShape,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellShape {
    /// Annular sector `r_in <= r <= r_out` of angular width `dtheta`.
    Sector { r_in: f64, r_out: f64, dtheta: f64 },
    /// Axis-aligned square of side `side`.
    Square { side: f64 },
}

impl Cell {
    pub fn area(&self) -> f64 {
        match self.shape {
            CellShape::Sector { r_in, r_out, dtheta } => 0.5 * (r_out * r_out - r_in * r_in) * dtheta,
            CellShape::Square { side } => side * side,
        }
    }

    /// `∫_cell (1 - |x|²)^{-γ²/2} dλ`, the expected chaos mass of the cell.
    ///
    /// Sectors are integrated exactly in `r`; when the integral diverges (a
    /// sector touching the circle with `γ² >= 2`) or for squares, the midpoint
    /// value `(1 - |x_c|²)^{-γ²/2} · area` is returned.
    pub fn chaos_weight(&self, gamma: f64) -> f64 {
        let a = 0.5 * gamma * gamma;
        if let CellShape::Sector { r_in, r_out, dtheta } = self.shape {
            let (u_in, u_out) = (1.0 - r_in * r_in, 1.0 - r_out * r_out);
            if (a - 1.0).abs() < 1e-12 {
                if u_out > 0.0 {
                    return 0.5 * dtheta * (u_in / u_out).ln();
                }
            } else if u_out > 0.0 || a < 1.0 {
                // ∫ r (1 - r²)^{-a} dr = [(1 - r²)^{1-a}] / (2(a - 1))
                return 0.5 * dtheta * (u_out.powf(1.0 - a) - u_in.powf(1.0 - a)) / (a - 1.0);
            }
        }
        self.midpoint_weight(gamma)
    }

    pub fn midpoint_weight(&self, gamma: f64) -> f64 {
        let r2 = self.center.norm().powi(2);
        (1.0 - r2).powf(-0.5 * gamma * gamma) * self.area()
    }
}

/// Polar grid graded towards the unit circle.
///
/// The disk `|x| <= 1/2` is covered by an atom at the origin and `core_rings`
/// uniform rings; each dyadic band `1 - 2^{-k} <= |x| <= 1 - 2^{-k-1}`
/// (`k = 1..=bands`, the last one extended to `|x| = 1`) is split into
/// `sub_rings` rings. Each ring carries `⌈2π r / h⌉` cells, `h` being its width,
/// and `ε` equal to half the chord between neighbouring centres.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarGridSpec {
    pub core_rings: usize,
    pub bands: usize,
    #[serde(default = "one")]
    pub sub_rings: usize,
}

fn one() -> usize {
    1
}

impl Default for PolarGridSpec {
    fn default() -> Self {
        Self {
            core_rings: 6,
            bands: 7,
            sub_rings: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PolarGrid {
    spec: PolarGridSpec,
    cells: Vec<Cell>,
}

impl PolarGrid {
    pub fn new(spec: PolarGridSpec) -> Result<Self> {
        if spec.core_rings == 0 || spec.bands == 0 || spec.sub_rings == 0 {
            return Err(Error::Configuration(format!("degenerate polar grid {spec:?}")));
        }
        let mut cells = Vec::new();
        let h0 = 0.5 / (spec.core_rings as f64 + 0.5);
        cells.push(Cell {
            center: DiskPoint::ORIGIN,
            eps: 0.5 * h0,
            shape: CellShape::Sector {
                r_in: 0.0,
                r_out: 0.5 * h0,
                dtheta: 2.0 * PI,
            },
        });
        let mut rings = Vec::new();
        for j in 1..=spec.core_rings {
            rings.push(((j as f64 - 0.5) * h0, (j as f64 + 0.5) * h0));
        }
        for k in 1..=spec.bands {
            let a = 1.0 - 0.5f64.powi(k as i32);
            let b = if k == spec.bands {
                1.0
            } else {
                1.0 - 0.5f64.powi(k as i32 + 1)
            };
            let w = (b - a) / spec.sub_rings as f64;
            for i in 0..spec.sub_rings {
                rings.push((a + i as f64 * w, a + (i + 1) as f64 * w));
            }
        }
        for (ring, &(r_in, r_out)) in rings.iter().enumerate() {
            let h = r_out - r_in;
            let r = 0.5 * (r_in + r_out);
            let n = (2.0 * PI * r / h).ceil() as usize;
            let dtheta = 2.0 * PI / n as f64;
            let eps = r * (PI / n as f64).sin();
            // stagger alternate rings so that no two centres share an angle
            let offset = if ring % 2 == 0 { 0.5 } else { 0.0 };
            for m in 0..n {
                cells.push(Cell {
                    center: DiskPoint::polar(r, (m as f64 + offset) * dtheta)?,
                    eps,
                    shape: CellShape::Sector { r_in, r_out, dtheta },
                });
            }
        }
        Ok(Self { spec, cells })
    }

    pub fn spec(&self) -> PolarGridSpec {
        self.spec
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn points(&self) -> Vec<DiskPoint> {
        self.cells.iter().map(|c| c.center).collect()
    }

    pub fn eps(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.eps).collect()
    }

    pub fn areas(&self) -> Vec<f64> {
        self.cells.iter().map(Cell::area).collect()
    }

    /// Per-cell weights `∫_cell g_P^{γ²/4} dλ` (see [`Cell::chaos_weight`]).
    pub fn chaos_weights(&self, gamma: f64) -> Vec<f64> {
        self.cells.iter().map(|c| c.chaos_weight(gamma)).collect()
    }
}

/// Square lattice of spacing `2ε` restricted to the disk `|x| <= radius`, all
/// cells sharing the regularisation radius `ε`.
#[derive(Debug, Clone)]
pub struct DiskLattice {
    radius: f64,
    eps: f64,
    cells: Vec<Cell>,
}

impl DiskLattice {
    pub fn new(radius: f64, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && radius > 0.0 && radius + eps < 1.0) {
            return Err(Error::Configuration(format!(
                "lattice of radius {radius} with eps {eps} must stay inside the unit disk"
            )));
        }
        let side = 2.0 * eps;
        let n = (radius / side).floor() as i64;
        let mut cells = Vec::new();
        for i in -n..=n {
            for j in -n..=n {
                let (x, y) = (i as f64 * side, j as f64 * side);
                if x.hypot(y) <= radius {
                    cells.push(Cell {
                        center: DiskPoint::interior(x, y)?,
                        eps,
                        shape: CellShape::Square { side },
                    });
                }
            }
        }
        Ok(Self { radius, eps, cells })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn points(&self) -> Vec<DiskPoint> {
        self.cells.iter().map(|c| c.center).collect()
    }

    pub fn areas(&self) -> Vec<f64> {
        self.cells.iter().map(Cell::area).collect()
    }
}

/// Checks the separation rule `|x_i - x_j| >= ε_i + ε_j` and `ε_i < 1 - |x_i|`.
pub fn check_separation(cells: &[Cell]) -> Result<()> {
    for (i, a) in cells.iter().enumerate() {
        if a.eps >= 1.0 - a.center.norm() {
            return Err(Error::Configuration(format!(
                "separation rule: circle {i} leaves the disk"
            )));
        }
        for b in &cells[i + 1..] {
            let d = a.center.distance(&b.center);
            if crate::geometry::overlapping(d, a.eps, b.eps) {
                return Err(Error::OverlappingCircles {
                    distance: d,
                    eps_a: a.eps,
                    eps_b: b.eps,
                });
            }
        }
    }
    Ok(())
}
