//! Deterministic geometry of the unit disk: the Neumann Green function and its
//! circle-average regularisation, Möbius self-maps, the Poincaré density,
//! conformal weights and the metric functionals in [`metric`].

pub mod metric;
mod mobius;

pub use mobius::MobiusMap;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `| |x| - 1 |` below which a point is considered to lie on the
/// unit circle.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// A point of the closed unit disk.
///
/// Boundary points carry a flag so that `|x| = 1` holds exactly in every
/// closed-form expression that uses it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct DiskPoint {
    z: Complex64,
    on_boundary: bool,
}

impl DiskPoint {
    pub const ORIGIN: DiskPoint = DiskPoint {
        z: Complex64::new(0.0, 0.0),
        on_boundary: false,
    };

    /// Any point of the closed disk; points within [`BOUNDARY_TOL`] of the
    /// unit circle are projected onto it.
    pub fn new(re: f64, im: f64) -> Result<Self> {
        let z = Complex64::new(re, im);
        let r = z.norm();
        if !r.is_finite() || r > 1.0 + BOUNDARY_TOL {
            return Err(Error::Domain(format!(
                "point ({re}, {im}) lies outside the closed unit disk"
            )));
        }
        if (r - 1.0).abs() <= BOUNDARY_TOL {
            Ok(Self::boundary(z.arg()))
        } else {
            Ok(Self { z, on_boundary: false })
        }
    }

    /// A point of the open disk.
    pub fn interior(re: f64, im: f64) -> Result<Self> {
        let p = Self::new(re, im)?;
        if p.on_boundary {
            return Err(Error::Domain(format!("point ({re}, {im}) lies on the unit circle")));
        }
        Ok(p)
    }

    /// The boundary point `e^{iθ}`.
    pub fn boundary(theta: f64) -> Self {
        Self {
            z: Complex64::from_polar(1.0, theta),
            on_boundary: true,
        }
    }

    /// Polar constructor; `r` must lie in `[0, 1]`.
    pub fn polar(r: f64, theta: f64) -> Result<Self> {
        if !(0.0..=1.0 + BOUNDARY_TOL).contains(&r) {
            return Err(Error::Domain(format!("radius {r} outside [0, 1]")));
        }
        if (r - 1.0).abs() <= BOUNDARY_TOL {
            Ok(Self::boundary(theta))
        } else {
            Ok(Self {
                z: Complex64::from_polar(r, theta),
                on_boundary: false,
            })
        }
    }

    pub(crate) fn from_complex_unchecked(z: Complex64, on_boundary: bool) -> Self {
        Self { z, on_boundary }
    }

    pub fn re(&self) -> f64 {
        self.z.re
    }

    pub fn im(&self) -> f64 {
        self.z.im
    }

    pub fn as_complex(&self) -> Complex64 {
        self.z
    }

    pub fn is_boundary(&self) -> bool {
        self.on_boundary
    }

    pub fn is_origin(&self) -> bool {
        self.z.re == 0.0 && self.z.im == 0.0
    }

    /// `|x|`, exactly 1 for boundary points.
    pub fn norm(&self) -> f64 {
        if self.on_boundary {
            1.0
        } else {
            self.z.norm()
        }
    }

    pub fn arg(&self) -> f64 {
        self.z.arg()
    }

    pub fn distance(&self, other: &DiskPoint) -> f64 {
        (self.z - other.z).norm()
    }
}

impl TryFrom<[f64; 2]> for DiskPoint {
    type Error = Error;

    fn try_from(v: [f64; 2]) -> Result<Self> {
        DiskPoint::new(v[0], v[1])
    }
}

impl From<DiskPoint> for [f64; 2] {
    fn from(p: DiskPoint) -> Self {
        [p.z.re, p.z.im]
    }
}

/// Neumann Green function `G(x, y) = ln 1/(|x - y| |1 - x ȳ|)`, normalised to
/// have zero mean along the boundary.
pub fn green(x: DiskPoint, y: DiskPoint) -> Result<f64> {
    let d = x.distance(&y);
    if d == 0.0 {
        return Err(Error::Domain(format!(
            "green function evaluated at coincident points ({}, {})",
            x.re(),
            x.im()
        )));
    }
    if x.is_origin() {
        return Ok(-y.norm().ln());
    }
    if y.is_origin() {
        return Ok(-x.norm().ln());
    }
    if x.on_boundary || y.on_boundary {
        // |1 - x ȳ| = |x - y| as soon as one of the points is unimodular
        return Ok(-2.0 * d.ln());
    }
    let cross = (Complex64::new(1.0, 0.0) - x.z * y.z.conj()).norm();
    Ok(-(d * cross).ln())
}

/// Trapezoidal mean of `G(x, ·)` over `n_quad` equispaced nodes of the unit
/// circle. Vanishes up to quadrature error for every interior `x`.
pub fn green_mean_boundary(x: DiskPoint, n_quad: usize) -> Result<f64> {
    if x.on_boundary {
        return Err(Error::Domain("green_mean_boundary needs an interior point".into()));
    }
    if n_quad < 16 {
        return Err(Error::Configuration(format!("n_quad = {n_quad} < 16")));
    }
    let mut sum = 0.0;
    for k in 0..n_quad {
        let s = DiskPoint::boundary(2.0 * PI * k as f64 / n_quad as f64);
        sum += green(x, s)?;
    }
    Ok(sum / n_quad as f64)
}

/// `ε`-circle-average regularisation of the Green function for a common radius.
pub fn green_regularized(x: DiskPoint, y: DiskPoint, eps: f64) -> Result<f64> {
    green_regularized_pair(x, eps, y, eps)
}

/// Covariance of the circle averages of radii `eps_x` around `x` and `eps_y`
/// around `y`.
///
/// Exact whenever the circles are concentric or disjoint
/// (`|x - y| >= eps_x + eps_y`); partially overlapping circles are rejected.
pub fn green_regularized_pair(x: DiskPoint, eps_x: f64, y: DiskPoint, eps_y: f64) -> Result<f64> {
    for (p, e) in [(x, eps_x), (y, eps_y)] {
        if !(e > 0.0) {
            return Err(Error::Parameter(format!("regularisation radius {e} must be positive")));
        }
        if p.on_boundary || e >= 1.0 - p.norm() {
            return Err(Error::Domain(format!(
                "circle of radius {e} around ({}, {}) leaves the disk",
                p.re(),
                p.im()
            )));
        }
    }
    let d = x.distance(&y);
    if d == 0.0 {
        // concentric circles: the log part averages to -ln(max radius) and the
        // harmonic part -ln|1 - x ȳ| to its value at the centre
        let r2 = x.z.norm_sqr();
        return Ok(-eps_x.max(eps_y).ln() - (1.0 - r2).ln());
    }
    if overlapping(d, eps_x, eps_y) {
        return Err(Error::OverlappingCircles {
            distance: d,
            eps_a: eps_x,
            eps_b: eps_y,
        });
    }
    green(x, y)
}

/// Tangent circles are accepted up to rounding in the construction of grids.
pub(crate) fn overlapping(distance: f64, eps_a: f64, eps_b: f64) -> bool {
    distance < (eps_a + eps_b) * (1.0 - 1e-9)
}

/// Density of the Poincaré metric `1/(1 - |x|²)²`.
pub fn poincare_density(x: DiskPoint) -> Result<f64> {
    if x.on_boundary {
        return Err(Error::Domain("the Poincaré density is infinite on the boundary".into()));
    }
    let s = 1.0 - x.z.norm_sqr();
    Ok(1.0 / (s * s))
}

/// Coupling constants of the theory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleParams {
    pub gamma: f64,
    pub mu: f64,
    pub mu_boundary: f64,
}

impl LiouvilleParams {
    pub fn new(gamma: f64, mu: f64, mu_boundary: f64) -> Result<Self> {
        let p = Self { gamma, mu, mu_boundary };
        p.validate()?;
        Ok(p)
    }

    /// Checks `γ ∈ (0, 2]`, `μ, μ_∂ >= 0` and `μ + μ_∂ > 0`.
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 2.0) {
            return Err(Error::Parameter(format!("gamma = {} not in (0, 2]", self.gamma)));
        }
        if !(self.mu >= 0.0 && self.mu_boundary >= 0.0) || !self.mu.is_finite() || !self.mu_boundary.is_finite() {
            return Err(Error::Parameter(format!(
                "cosmological constants must be finite and non-negative (mu = {}, mu_boundary = {})",
                self.mu, self.mu_boundary
            )));
        }
        if self.mu + self.mu_boundary <= 0.0 {
            return Err(Error::Parameter("mu + mu_boundary must be positive".into()));
        }
        Ok(())
    }

    /// Background charge `Q = 2/γ + γ/2`.
    pub fn q(&self) -> f64 {
        background_charge(self.gamma)
    }

    /// Central charge `1 + 6Q²`.
    pub fn central_charge(&self) -> f64 {
        1.0 + 6.0 * self.q().powi(2)
    }
}

pub fn background_charge(gamma: f64) -> f64 {
    2.0 / gamma + gamma / 2.0
}

/// Conformal weight `Δ_α = (α/2)(Q - α/2)`.
pub fn conformal_weight(alpha: f64, params: &LiouvilleParams) -> f64 {
    0.5 * alpha * (params.q() - 0.5 * alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn p(re: f64, im: f64) -> DiskPoint {
        DiskPoint::new(re, im).unwrap()
    }

    #[test]
    fn green_examples() {
        assert!(close(green(p(0.0, 0.0), p(0.5, 0.0)).unwrap(), 2f64.ln(), 1e-15));
        assert_eq!(
            green(p(0.3, 0.0), p(0.0, 0.2)).unwrap(),
            green(p(0.0, 0.2), p(0.3, 0.0)).unwrap()
        );
        assert!(close(
            green(p(0.5, 0.0), p(-0.5, 0.0)).unwrap(),
            -0.223_143_551_314_209_7,
            1e-15
        ));
    }

    #[test]
    fn green_rejects_coincident_points() {
        assert!(matches!(green(p(0.1, 0.2), p(0.1, 0.2)), Err(Error::Domain(_))));
        let s = DiskPoint::boundary(0.4);
        assert!(green(s, s).is_err());
    }

    #[test]
    fn green_on_boundary_pairs() {
        // G(1, -1) = ln 1/(2 * 2)
        let g = green(DiskPoint::boundary(0.0), DiskPoint::boundary(PI)).unwrap();
        assert!(close(g, -(4f64).ln(), 1e-15));
    }

    #[test]
    fn boundary_mean_vanishes() {
        assert_eq!(green_mean_boundary(DiskPoint::ORIGIN, 256).unwrap(), 0.0);
        assert!(green_mean_boundary(p(0.4, 0.0), 512).unwrap().abs() < 1e-10);
        assert!(green_mean_boundary(p(0.9, 0.05), 4096).unwrap().abs() < 1e-8);
        assert!(green_mean_boundary(p(0.4, 0.0), 8).is_err());
    }

    #[test]
    fn regularized_examples() {
        assert!(close(
            green_regularized(DiskPoint::ORIGIN, DiskPoint::ORIGIN, 0.01).unwrap(),
            100f64.ln(),
            1e-14
        ));
        let x = p(0.8, 0.0);
        assert!(close(
            green_regularized(x, x, 0.05).unwrap(),
            20f64.ln() - 0.36f64.ln(),
            1e-14
        ));
        let (a, b) = (p(0.2, 0.0), p(-0.2, 0.0));
        assert_eq!(green_regularized(a, b, 0.05).unwrap(), green(a, b).unwrap());
    }

    #[test]
    fn regularized_rejects_overlap_and_escaping_circles() {
        let err = green_regularized(p(0.0, 0.0), p(0.05, 0.0), 0.05).unwrap_err();
        assert!(matches!(err, Error::OverlappingCircles { .. }));
        assert!(green_regularized(p(0.96, 0.0), p(0.0, 0.0), 0.05).is_err());
    }

    #[test]
    fn concentric_circles_use_the_larger_radius() {
        let x = p(0.3, -0.1);
        let g = green_regularized_pair(x, 0.02, x, 0.01).unwrap();
        assert!(close(g, green_regularized(x, x, 0.02).unwrap(), 1e-15));
    }

    #[test]
    fn poincare_examples() {
        assert_eq!(poincare_density(DiskPoint::ORIGIN).unwrap(), 1.0);
        assert!(close(poincare_density(p(0.5, 0.0)).unwrap(), 1.0 / 0.5625, 1e-15));
        assert!(poincare_density(DiskPoint::boundary(1.0)).is_err());
    }

    #[test]
    fn conformal_weights() {
        let params = LiouvilleParams::new((8.0f64 / 3.0).sqrt(), 1.0, 0.0).unwrap();
        assert!(close(conformal_weight(params.gamma, &params), 1.0, 1e-15));
        assert_eq!(conformal_weight(0.0, &params), 0.0);
        assert!(close(conformal_weight(1.0, &params), 0.770_620_726_159_657_5, 1e-15));
        let q = params.q();
        assert!(close(conformal_weight(q, &params), q * q / 4.0, 1e-15));
    }

    #[test]
    fn params_validation() {
        assert!(LiouvilleParams::new(0.0, 1.0, 0.0).is_err());
        assert!(LiouvilleParams::new(2.5, 1.0, 0.0).is_err());
        assert!(LiouvilleParams::new(1.0, 0.0, 0.0).is_err());
        assert!(LiouvilleParams::new(2.0, 0.0, 1.0).is_ok());
    }

    #[test]
    fn point_constructors() {
        assert!(DiskPoint::new(1.0, 1.0).is_err());
        assert!(DiskPoint::new(1.0 + 1e-13, 0.0).unwrap().is_boundary());
        assert!(DiskPoint::interior(1.0, 0.0).is_err());
        assert_eq!(DiskPoint::boundary(0.3).norm(), 1.0);
        let q: DiskPoint = serde_json::from_str("[0.25, -0.5]").unwrap();
        assert_eq!(q, p(0.25, -0.5));
    }
}
