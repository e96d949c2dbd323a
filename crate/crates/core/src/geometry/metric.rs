//! Conformal factors `g = e^{φ} dx²` sampled on a polar mesh, their scalar and
//! geodesic curvatures, and the Weyl anomaly functional.
//!
//! Interior nodes sit at cell centres `r_k = (k + ½)/n_r`, `θ_m = (m + ½)·2π/n_θ`;
//! a boundary ring at `r = 1` carries the boundary values and the outward normal
//! derivative. The Laplacian is the conservative second-order finite-volume
//! stencil whose flux through `r = 1` is the stored normal derivative, so the
//! discrete Gauss–Bonnet sum telescopes exactly.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LiouvilleParams;
use crate::error::{Error, Result};

/// Polar mesh of `n_r × n_θ` cells covering the unit disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolarMesh {
    n_r: usize,
    n_theta: usize,
}

impl PolarMesh {
    pub fn new(n_r: usize, n_theta: usize) -> Result<Self> {
        if n_r < 16 || n_theta < 16 {
            return Err(Error::Configuration(format!(
                "polar mesh {n_r} x {n_theta} too coarse for finite differences (need >= 16 per direction)"
            )));
        }
        Ok(Self { n_r, n_theta })
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_r as f64
    }

    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    pub fn radius(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.h()
    }

    pub fn angle(&self, m: usize) -> f64 {
        (m as f64 + 0.5) * self.dtheta()
    }

    /// Area of a cell of ring `k`.
    pub fn cell_area(&self, k: usize) -> f64 {
        self.radius(k) * self.h() * self.dtheta()
    }

    fn index(&self, k: usize, m: usize) -> usize {
        k * self.n_theta + m
    }
}

/// A conformal factor `φ` with `g = e^{φ} dx²`.
#[derive(Debug, Clone)]
pub struct ConformalFactor {
    mesh: PolarMesh,
    values: Vec<f64>,
    boundary: Vec<f64>,
    normal_derivative: Vec<f64>,
}

impl ConformalFactor {
    /// Samples `f(x, y)`; the normal derivative at `r = 1` is taken from the
    /// one-sided second-order stencil through the boundary node and the two
    /// outermost cell centres.
    pub fn from_fn(mesh: PolarMesh, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let (values, boundary) = sample(&mesh, &f);
        let h = mesh.h();
        let n = mesh.n_r;
        let normal_derivative = (0..mesh.n_theta)
            .map(|m| {
                let u1 = values[mesh.index(n - 1, m)];
                let u2 = values[mesh.index(n - 2, m)];
                (8.0 * boundary[m] - 9.0 * u1 + u2) / (3.0 * h)
            })
            .collect();
        Self::from_parts(mesh, values, boundary, normal_derivative)
    }

    /// Samples `f` together with its exact outward normal derivative `dn(θ)`
    /// on the unit circle.
    pub fn with_normal_derivative(
        mesh: PolarMesh,
        f: impl Fn(f64, f64) -> f64,
        dn: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let (values, boundary) = sample(&mesh, &f);
        let normal_derivative = (0..mesh.n_theta).map(|m| dn(mesh.angle(m))).collect();
        Self::from_parts(mesh, values, boundary, normal_derivative)
    }

    pub fn constant(mesh: PolarMesh, c: f64) -> Result<Self> {
        Self::with_normal_derivative(mesh, |_, _| c, |_| 0.0)
    }

    pub fn flat(mesh: PolarMesh) -> Self {
        Self::constant(mesh, 0.0).expect("zero factor is finite")
    }

    pub fn from_parts(
        mesh: PolarMesh,
        values: Vec<f64>,
        boundary: Vec<f64>,
        normal_derivative: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != mesh.n_r * mesh.n_theta
            || boundary.len() != mesh.n_theta
            || normal_derivative.len() != mesh.n_theta
        {
            return Err(Error::Configuration(
                "conformal factor arrays do not match the mesh".into(),
            ));
        }
        if values
            .iter()
            .chain(&boundary)
            .chain(&normal_derivative)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Configuration("conformal factor has non-finite values".into()));
        }
        Ok(Self {
            mesh,
            values,
            boundary,
            normal_derivative,
        })
    }

    pub fn mesh(&self) -> PolarMesh {
        self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn boundary_values(&self) -> &[f64] {
        &self.boundary
    }

    pub fn normal_derivative(&self) -> &[f64] {
        &self.normal_derivative
    }

    /// Pointwise sum, i.e. the factor of `e^{ψ} e^{φ} dx²`.
    pub fn compose(&self, other: &ConformalFactor) -> Result<ConformalFactor> {
        same_mesh(self, other)?;
        let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>();
        Self::from_parts(
            self.mesh,
            add(&self.values, &other.values),
            add(&self.boundary, &other.boundary),
            add(&self.normal_derivative, &other.normal_derivative),
        )
    }

    /// Finite-volume Laplacian at every cell centre.
    pub fn laplacian(&self) -> Vec<f64> {
        let mesh = &self.mesh;
        let (n, nt, h, dt) = (mesh.n_r, mesh.n_theta, mesh.h(), mesh.dtheta());
        let u = &self.values;
        let mut out = vec![0.0; n * nt];
        for k in 0..n {
            let r = mesh.radius(k);
            let r_in = k as f64 * h;
            let r_out = (k + 1) as f64 * h;
            for m in 0..nt {
                let c = u[mesh.index(k, m)];
                let flux_out = if k + 1 == n {
                    self.normal_derivative[m]
                } else {
                    r_out * (u[mesh.index(k + 1, m)] - c) / h
                };
                let flux_in = if k == 0 {
                    0.0
                } else {
                    r_in * (c - u[mesh.index(k - 1, m)]) / h
                };
                let next = u[mesh.index(k, (m + 1) % nt)];
                let prev = u[mesh.index(k, (m + nt - 1) % nt)];
                out[mesh.index(k, m)] = (flux_out - flux_in) / (r * h) + (next - 2.0 * c + prev) / (r * r * dt * dt);
            }
        }
        out
    }

    /// Dirichlet energy `∫ |∇φ|² dλ`, evaluated through Green's identity
    /// `-∫ φ Δφ dλ + ∮ φ ∂_n φ dλ_∂` so that it pairs with [`Self::laplacian`].
    pub fn dirichlet_energy(&self) -> f64 {
        let lap = self.laplacian();
        let mesh = &self.mesh;
        let mut bulk = 0.0;
        for k in 0..mesh.n_r {
            let a = mesh.cell_area(k);
            for m in 0..mesh.n_theta {
                let i = mesh.index(k, m);
                bulk -= self.values[i] * lap[i] * a;
            }
        }
        let edge: f64 = self
            .boundary
            .iter()
            .zip(&self.normal_derivative)
            .map(|(u, d)| u * d)
            .sum();
        bulk + edge * mesh.dtheta()
    }

    /// Bulk integral `∫ f dλ` of a field given per cell.
    pub fn integrate_bulk(&self, f: &[f64]) -> f64 {
        let mesh = &self.mesh;
        (0..mesh.n_r)
            .map(|k| {
                let row: f64 = f[k * mesh.n_theta..(k + 1) * mesh.n_theta].iter().sum();
                row * mesh.cell_area(k)
            })
            .sum()
    }

    /// Boundary integral `∮ f dλ_∂` of a field given per boundary node.
    pub fn integrate_boundary(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() * self.mesh.dtheta()
    }
}

fn sample(mesh: &PolarMesh, f: &impl Fn(f64, f64) -> f64) -> (Vec<f64>, Vec<f64>) {
    let mut values = Vec::with_capacity(mesh.n_r * mesh.n_theta);
    for k in 0..mesh.n_r {
        let r = mesh.radius(k);
        for m in 0..mesh.n_theta {
            let t = mesh.angle(m);
            values.push(f(r * t.cos(), r * t.sin()));
        }
    }
    let boundary = (0..mesh.n_theta)
        .map(|m| {
            let t = mesh.angle(m);
            f(t.cos(), t.sin())
        })
        .collect();
    (values, boundary)
}

fn same_mesh(a: &ConformalFactor, b: &ConformalFactor) -> Result<()> {
    if a.mesh != b.mesh {
        return Err(Error::Configuration(format!(
            "conformal factors live on different meshes ({}x{} vs {}x{})",
            a.mesh.n_r, a.mesh.n_theta, b.mesh.n_r, b.mesh.n_theta
        )));
    }
    Ok(())
}

/// Curvatures of `g = e^{φ} dx²`.
#[derive(Debug, Clone)]
pub struct Curvatures {
    /// `R_g = -e^{-φ} Δφ` per cell centre.
    pub scalar: Vec<f64>,
    /// `K_g = e^{-φ/2} (1 + ∂_n φ / 2)` per boundary node.
    pub geodesic: Vec<f64>,
}

pub fn curvatures(phi: &ConformalFactor) -> Curvatures {
    let lap = phi.laplacian();
    let scalar = lap.iter().zip(&phi.values).map(|(l, u)| -(-u).exp() * l).collect();
    let geodesic = phi
        .boundary
        .iter()
        .zip(&phi.normal_derivative)
        .map(|(u, d)| (-0.5 * u).exp() * (1.0 + 0.5 * d))
        .collect();
    Curvatures { scalar, geodesic }
}

/// `∫ R_g dλ_g + 2 ∮ K_g dλ_∂g`, equal to `4π` for every conformal factor.
pub fn gauss_bonnet(phi: &ConformalFactor) -> f64 {
    let c = curvatures(phi);
    let bulk_density: Vec<f64> = c.scalar.iter().zip(&phi.values).map(|(r, u)| r * u.exp()).collect();
    let edge_density: Vec<f64> = c
        .geodesic
        .iter()
        .zip(&phi.boundary)
        .map(|(k, u)| k * (0.5 * u).exp())
        .collect();
    phi.integrate_bulk(&bulk_density) + 2.0 * phi.integrate_boundary(&edge_density)
}

/// Log-ratio of partition functions between `e^{φ} g` and `g = e^{σ} dx²`:
///
/// `(1 + 6Q²)/(96π) (∫ |∂^g φ|² dλ_g + 2∫ R_g φ dλ_g + 4∮ K_g φ dλ_∂g)`.
pub fn weyl_anomaly(phi: &ConformalFactor, base: &ConformalFactor, params: &LiouvilleParams) -> Result<f64> {
    same_mesh(phi, base)?;
    let c = curvatures(base);
    // |∂^g φ|² dλ_g is conformally invariant in two dimensions
    let energy = phi.dirichlet_energy();
    let curvature: Vec<f64> = c
        .scalar
        .iter()
        .zip(&base.values)
        .zip(&phi.values)
        .map(|((r, s), u)| r * s.exp() * u)
        .collect();
    let geodesic: Vec<f64> = c
        .geodesic
        .iter()
        .zip(&base.boundary)
        .zip(&phi.boundary)
        .map(|((k, s), u)| k * (0.5 * s).exp() * u)
        .collect();
    let total = energy + 2.0 * phi.integrate_bulk(&curvature) + 4.0 * phi.integrate_boundary(&geodesic);
    Ok(params.central_charge() / (96.0 * PI) * total)
}

/// `a₀ + a₁x + a₂y + a₃x² + a₄xy + a₅y² + Σ amp·cos(kx·x + ky·y + phase)`, a
/// smooth conformal factor given in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothFactor {
    #[serde(default)]
    pub poly: [f64; 6],
    #[serde(default)]
    pub waves: Vec<Wave>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wave {
    pub amp: f64,
    pub kx: f64,
    pub ky: f64,
    #[serde(default)]
    pub phase: f64,
}

impl SmoothFactor {
    /// Coefficients uniform in `[-0.3, 0.3]`, two waves with frequencies
    /// uniform in `[-2, 2]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut u = |scale: f64| scale * (2.0 * rng.random::<f64>() - 1.0);
        let poly = [u(0.3), u(0.3), u(0.3), u(0.3), u(0.3), u(0.3)];
        let waves = (0..2)
            .map(|_| Wave {
                amp: u(0.3),
                kx: u(2.0),
                ky: u(2.0),
                phase: u(PI),
            })
            .collect();
        Self { poly, waves }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let [a0, a1, a2, a3, a4, a5] = self.poly;
        let waves: f64 = self
            .waves
            .iter()
            .map(|w| w.amp * (w.kx * x + w.ky * y + w.phase).cos())
            .sum();
        a0 + a1 * x + a2 * y + a3 * x * x + a4 * x * y + a5 * y * y + waves
    }

    /// Sampled on `mesh`, normal derivative from the one-sided stencil.
    pub fn sample(&self, mesh: PolarMesh) -> Result<ConformalFactor> {
        ConformalFactor::from_fn(mesh, |x, y| self.eval(x, y))
    }
}

/// Residuals of the exactly known properties of the anomaly on one mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnomalyCheck {
    pub n_r: usize,
    pub n_theta: usize,
    /// `|anomaly(c, flat) - (1 + 6Q²) c / 12|`.
    pub constant_shift_residual: f64,
    /// `anomaly(φ₁ + φ₂, g) - anomaly(φ₁, g) - anomaly(φ₂, e^{φ₁} g)`.
    pub cocycle_defect: f64,
    pub cocycle_residual: f64,
    /// Gauss–Bonnet defect of `e^{φ₁ + φ₂} g`.
    pub gauss_bonnet_residual: f64,
}

/// Evaluates the checks for base `g = e^{σ} dx²`, factors `φ₁`, `φ₂` and the
/// constant `shift`.
pub fn anomaly_check(
    mesh: PolarMesh,
    base: &SmoothFactor,
    first: &SmoothFactor,
    second: &SmoothFactor,
    shift: f64,
    params: &LiouvilleParams,
) -> Result<AnomalyCheck> {
    let flat = ConformalFactor::flat(mesh);
    let constant = ConformalFactor::constant(mesh, shift)?;
    let exact = params.central_charge() * shift / 12.0;
    let constant_shift_residual = (weyl_anomaly(&constant, &flat, params)? - exact).abs();

    let g = base.sample(mesh)?;
    let phi1 = first.sample(mesh)?;
    let phi2 = second.sample(mesh)?;
    let both = phi1.compose(&phi2)?;
    let direct = weyl_anomaly(&both, &g, params)?;
    let chained = weyl_anomaly(&phi1, &g, params)? + weyl_anomaly(&phi2, &g.compose(&phi1)?, params)?;
    Ok(AnomalyCheck {
        n_r: mesh.n_r,
        n_theta: mesh.n_theta,
        constant_shift_residual,
        cocycle_defect: direct - chained,
        cocycle_residual: (direct - chained).abs(),
        gauss_bonnet_residual: (gauss_bonnet(&g.compose(&both)?) - 4.0 * PI).abs(),
    })
}

/// Richardson extrapolation of the cocycle defect from the two finest
/// checks, whose leading error is `O(h²)`.
pub fn extrapolated_cocycle_defect(checks: &[AnomalyCheck]) -> Option<f64> {
    let [.., coarse, fine] = checks else {
        return None;
    };
    let rho2 = (fine.n_r as f64 / coarse.n_r as f64).powi(2);
    Some((rho2 * fine.cocycle_defect - coarse.cocycle_defect) / (rho2 - 1.0))
}
