use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{green, DiskPoint};
use crate::error::{Error, Result};

/// Möbius automorphism of the disk `ψ(x) = e^{iα}(x - a)/(1 - ā x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobiusMap {
    a: Complex64,
    alpha: f64,
}

impl MobiusMap {
    pub fn new(a: Complex64, alpha: f64) -> Result<Self> {
        if !(a.norm() < 1.0) || !alpha.is_finite() {
            return Err(Error::Parameter(format!(
                "invalid Möbius map: |a| = {} must be < 1 and alpha finite",
                a.norm()
            )));
        }
        Ok(Self { a, alpha })
    }

    pub fn identity() -> Self {
        Self {
            a: Complex64::new(0.0, 0.0),
            alpha: 0.0,
        }
    }

    /// Rotation `x ↦ e^{iα} x`.
    pub fn rotation(alpha: f64) -> Self {
        Self {
            a: Complex64::new(0.0, 0.0),
            alpha,
        }
    }

    pub fn a(&self) -> Complex64 {
        self.a
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn inverse(&self) -> Self {
        let rot = Complex64::from_polar(1.0, self.alpha);
        Self {
            a: -self.a * rot,
            alpha: -self.alpha,
        }
    }

    pub fn apply_complex(&self, x: Complex64) -> Complex64 {
        let one = Complex64::new(1.0, 0.0);
        Complex64::from_polar(1.0, self.alpha) * (x - self.a) / (one - self.a.conj() * x)
    }

    pub fn apply(&self, x: DiskPoint) -> DiskPoint {
        if self.a == Complex64::new(0.0, 0.0) && self.alpha == 0.0 {
            return x;
        }
        let w = self.apply_complex(x.as_complex());
        if x.is_boundary() {
            DiskPoint::boundary(w.arg())
        } else {
            // an interior image can round onto the circle only for |x| within
            // an ulp of 1, which the constructors already exclude
            DiskPoint::from_complex_unchecked(w, false)
        }
    }

    /// `ψ'(x) = e^{iα}(1 - |a|²)/(1 - ā x)²`.
    pub fn derivative(&self, x: DiskPoint) -> Complex64 {
        let one = Complex64::new(1.0, 0.0);
        let den = one - self.a.conj() * x.as_complex();
        Complex64::from_polar(1.0 - self.a.norm_sqr(), self.alpha) / (den * den)
    }

    /// Modulus residual of `1 - ψ(x)ψ(y)‾ = ψ'(x)^{1/2} ψ'(y)^{1/2} (1 - x ȳ)`.
    pub fn cross_ratio_residual(&self, x: DiskPoint, y: DiskPoint) -> f64 {
        let one = Complex64::new(1.0, 0.0);
        let lhs = (one - self.apply_complex(x.as_complex()) * self.apply_complex(y.as_complex()).conj()).norm();
        let rhs = (self.derivative(x).norm() * self.derivative(y).norm()).sqrt()
            * (one - x.as_complex() * y.as_complex().conj()).norm();
        (lhs - rhs).abs()
    }

    /// Modulus residual of `|ψ(x) - ψ(y)| = |ψ'(x)|^{1/2} |ψ'(y)|^{1/2} |x - y|`.
    pub fn difference_residual(&self, x: DiskPoint, y: DiskPoint) -> f64 {
        let lhs = (self.apply_complex(x.as_complex()) - self.apply_complex(y.as_complex())).norm();
        let rhs = (self.derivative(x).norm() * self.derivative(y).norm()).sqrt() * x.distance(&y);
        (lhs - rhs).abs()
    }

    /// Residual of `G(ψ(x), ψ(y)) - G(x, y) + ln|ψ'(x)| + ln|ψ'(y)| = 0`.
    pub fn green_residual(&self, x: DiskPoint, y: DiskPoint) -> Result<f64> {
        let lhs = green(self.apply(x), self.apply(y))?;
        Ok(lhs - green(x, y)? + self.derivative(x).norm().ln() + self.derivative(y).norm().ln())
    }
}
