//! The Neumann Gaussian free field with zero boundary mean.
//!
//! Two representations are used: the boundary trace as a truncated Fourier
//! series (with its harmonic extension), and exact-covariance samples of the
//! circle-averaged field on a finite point set.

use std::f64::consts::PI;
use std::sync::Arc;

use faer::linalg::matmul::triangular::{self, BlockStructure};
use faer::{Accum, Mat, Par, Side};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::geometry::{green_regularized_pair, poincare_density, DiskPoint, MobiusMap};
use crate::grid::Cell;
use crate::rng::RngStream;

/// Default number of Fourier modes of a boundary trace.
pub const DEFAULT_MODES: usize = 1024;

/// Smallest admissible Cholesky pivot.
pub const PIVOT_TOLERANCE: f64 = 1e-10;

/// Replicas are drawn in blocks of this many columns so that every replica is
/// computed by the same floating-point operations whatever the batching.
pub const BLOCK: usize = 64;

/// `X_b(θ) = Σ_{n=1}^{N} √(2/n) (a_n cos nθ + b_n sin nθ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl BoundaryTrace {
    pub fn from_coefficients(cos: Vec<f64>, sin: Vec<f64>) -> Result<Self> {
        if cos.is_empty() || cos.len() != sin.len() {
            return Err(Error::Parameter(format!(
                "need matching nonempty coefficient lists, got {} and {}",
                cos.len(),
                sin.len()
            )));
        }
        Ok(Self { cos, sin })
    }

    /// Draws i.i.d. standard normal coefficients. Coefficients are drawn in the
    /// order `a_1, b_1, a_2, b_2, ...`, so a trace with fewer modes from the same
    /// generator is a truncation of one with more.
    pub fn sample<R: Rng + ?Sized>(n_modes: usize, rng: &mut R) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::Parameter("a boundary trace needs at least one mode".into()));
        }
        let mut cos = Vec::with_capacity(n_modes);
        let mut sin = Vec::with_capacity(n_modes);
        for _ in 0..n_modes {
            cos.push(rng.sample(StandardNormal));
            sin.push(rng.sample(StandardNormal));
        }
        Ok(Self { cos, sin })
    }

    pub fn n_modes(&self) -> usize {
        self.cos.len()
    }

    pub fn cos_coeffs(&self) -> &[f64] {
        &self.cos
    }

    pub fn sin_coeffs(&self) -> &[f64] {
        &self.sin
    }

    /// The same draw with only the first `n_modes` modes kept.
    pub fn truncated(&self, n_modes: usize) -> Result<Self> {
        if n_modes == 0 || n_modes > self.n_modes() {
            return Err(Error::Parameter(format!(
                "cannot truncate {} modes to {n_modes}",
                self.n_modes()
            )));
        }
        Ok(Self {
            cos: self.cos[..n_modes].to_vec(),
            sin: self.sin[..n_modes].to_vec(),
        })
    }

    /// Pointwise variance `Σ_{n<=N} 2/n`, the same at every angle.
    pub fn variance(&self) -> f64 {
        truncated_variance(self.n_modes())
    }

    pub fn eval(&self, theta: f64) -> f64 {
        self.series(1.0, theta)
    }

    /// Values at the arc midpoints `θ_m = 2π(m + 1/2)/n_points` by one FFT.
    pub fn eval_midpoints(&self, n_points: usize) -> Vec<f64> {
        let l = n_points;
        if l == 0 {
            return Vec::new();
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); l];
        for (i, (&a, &b)) in self.cos.iter().zip(&self.sin).enumerate() {
            let n = i + 1;
            let c = Complex64::new(a, -b) * (2.0 / n as f64).sqrt();
            // the half-cell shift, reduced mod 2π before the exponential
            let phase = PI * ((n % (2 * l)) as f64) / l as f64;
            buf[n % l] += c * Complex64::from_polar(1.0, phase);
        }
        FftPlanner::new().plan_fft_inverse(l).process(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }

    /// Mean of the trace over `n_quad` equispaced nodes; zero up to rounding
    /// whenever `n_quad` exceeds the number of modes.
    pub fn boundary_mean(&self, n_quad: usize) -> f64 {
        crate::stats::sum(&self.eval_midpoints(n_quad)) / n_quad as f64
    }

    /// Poisson extension `Σ √(2/n) rⁿ (a_n cos nθ + b_n sin nθ)`.
    pub fn harmonic_extension(&self, x: DiskPoint) -> Result<f64> {
        if x.is_boundary() {
            return Err(Error::Domain("harmonic extension is evaluated inside the disk".into()));
        }
        if x.is_origin() {
            return Ok(0.0);
        }
        Ok(self.series(x.norm(), x.arg()))
    }

    fn series(&self, r: f64, theta: f64) -> f64 {
        let step = Complex64::from_polar(r, theta);
        let mut w = Complex64::new(1.0, 0.0);
        let mut acc = 0.0;
        for (i, (&a, &b)) in self.cos.iter().zip(&self.sin).enumerate() {
            w *= step;
            acc += (2.0 / (i + 1) as f64).sqrt() * (a * w.re + b * w.im);
        }
        acc
    }
}

/// Samples a trace from the stream `rng`.
pub fn sample_boundary_trace(n_modes: usize, rng: &RngStream) -> Result<BoundaryTrace> {
    BoundaryTrace::sample(n_modes, &mut rng.rng())
}

/// `Σ_{n=1}^{N} 2/n`.
pub fn truncated_variance(n_modes: usize) -> f64 {
    (1..=n_modes).rev().map(|n| 2.0 / n as f64).sum()
}

/// Exact-covariance sampler of the circle-averaged field on a point set, each
/// point carrying its own averaging radius.
#[derive(Debug, Clone)]
pub struct GaussianField {
    points: Arc<[DiskPoint]>,
    eps: Arc<[f64]>,
    kernel: Kernel,
    chol: Mat<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kernel {
    Neumann,
    /// Neumann covariance less that of the first `n` trace modes' harmonic extension.
    TraceRemainder(usize),
}

impl Kernel {
    fn eval(self, x: DiskPoint, ex: f64, y: DiskPoint, ey: f64) -> Result<f64> {
        let g = green_regularized_pair(x, ex, y, ey)?;
        Ok(match self {
            Kernel::Neumann => g,
            Kernel::TraceRemainder(n) => g - truncated_harmonic(x.as_complex() * y.as_complex().conj(), n),
        })
    }
}

/// `Σ_{k=1}^{n} (2/k) Re wᵏ`, the covariance of the harmonic extension of the
/// first `n` trace modes at `x, y` with `w = x ȳ`.
fn truncated_harmonic(w: Complex64, n: usize) -> f64 {
    let r = w.norm();
    if r == 0.0 {
        return 0.0;
    }
    if (n as f64 + 1.0) * r.ln() < -42.0 {
        // the tail is below 1e-18: use the closed form of the full series
        return -2.0 * (1.0 - w).norm().ln();
    }
    let mut p = Complex64::new(1.0, 0.0);
    let mut acc = 0.0;
    for k in 1..=n {
        p *= w;
        acc += 2.0 / k as f64 * p.re;
    }
    acc
}

impl GaussianField {
    pub fn new(points: Vec<DiskPoint>, eps: Vec<f64>) -> Result<Self> {
        Self::with_kernel(points, eps, Kernel::Neumann)
    }

    /// The part of the field independent of the first `n_modes` modes of its
    /// boundary trace; see [`CoupledField`].
    pub fn trace_remainder(points: Vec<DiskPoint>, eps: Vec<f64>, n_modes: usize) -> Result<Self> {
        Self::with_kernel(points, eps, Kernel::TraceRemainder(n_modes))
    }

    fn with_kernel(points: Vec<DiskPoint>, eps: Vec<f64>, kernel: Kernel) -> Result<Self> {
        if points.len() != eps.len() || points.is_empty() {
            return Err(Error::Configuration(format!(
                "{} points with {} radii",
                points.len(),
                eps.len()
            )));
        }
        let m = points.len();
        let mut cov = Mat::<f64>::zeros(m, m);
        for j in 0..m {
            for i in j..m {
                cov[(i, j)] = kernel.eval(points[i], eps[i], points[j], eps[j])?;
            }
        }
        let chol = match cov.llt(Side::Lower) {
            Ok(llt) => llt.L().to_owned(),
            Err(faer::linalg::cholesky::llt::factor::LltError::NonPositivePivot { index }) => {
                return Err(Error::Factorization {
                    row: index,
                    pivot: 0.0,
                    tolerance: PIVOT_TOLERANCE,
                })
            }
        };
        for i in 0..m {
            let pivot = chol[(i, i)] * chol[(i, i)];
            if pivot < PIVOT_TOLERANCE {
                return Err(Error::Factorization {
                    row: i,
                    pivot,
                    tolerance: PIVOT_TOLERANCE,
                });
            }
        }
        Ok(Self {
            points: points.into(),
            eps: eps.into(),
            kernel,
            chol,
        })
    }

    pub fn uniform(points: Vec<DiskPoint>, eps: f64) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![eps; n])
    }

    pub fn from_cells(cells: &[Cell]) -> Result<Self> {
        Self::new(
            cells.iter().map(|c| c.center).collect(),
            cells.iter().map(|c| c.eps).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[DiskPoint] {
        &self.points
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    /// Analytic covariance entry.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.kernel
            .eval(self.points[i], self.eps[i], self.points[j], self.eps[j])
            .expect("validated at construction")
    }

    /// One draw from `stream`, by a single matrix-vector product.
    pub fn sample(&self, stream: &RngStream) -> FieldRealization {
        let m = self.len();
        let z = normals(m, stream);
        let mut values = vec![0.0; m];
        for (j, &zj) in z.iter().enumerate() {
            for (i, v) in values.iter_mut().enumerate().skip(j) {
                *v += self.chol[(i, j)] * zj;
            }
        }
        self.realization(values, Some(*stream))
    }

    /// Replicas `BLOCK·block .. BLOCK·(block+1)` of the family `base.derive(r)`.
    ///
    /// A block is always computed as one full `M × BLOCK` product, so the value
    /// of a replica depends only on its index.
    pub fn sample_block(&self, base: &RngStream, block: u64) -> Vec<FieldRealization> {
        let m = self.len();
        let streams: Vec<RngStream> = (0..BLOCK as u64)
            .map(|c| base.derive(block * BLOCK as u64 + c))
            .collect();
        let cols: Vec<Vec<f64>> = streams.iter().map(|s| normals(m, s)).collect();
        let z = Mat::from_fn(m, BLOCK, |i, j| cols[j][i]);
        let mut x = Mat::<f64>::zeros(m, BLOCK);
        triangular::matmul(
            x.as_mut(),
            BlockStructure::Rectangular,
            Accum::Replace,
            self.chol.as_ref(),
            BlockStructure::TriangularLower,
            z.as_ref(),
            BlockStructure::Rectangular,
            1.0,
            Par::Seq,
        );
        streams
            .iter()
            .enumerate()
            .map(|(j, s)| self.realization((0..m).map(|i| x[(i, j)]).collect(), Some(*s)))
            .collect()
    }

    /// Replicas `0..n` of the family `base.derive(r)`, computed blockwise.
    pub fn sample_replicas(&self, base: &RngStream, n: usize) -> Vec<FieldRealization> {
        let mut out = Vec::with_capacity(n);
        let mut block = 0;
        while out.len() < n {
            let need = n - out.len();
            out.extend(self.sample_block(base, block).into_iter().take(need));
            block += 1;
        }
        out
    }

    fn realization(&self, values: Vec<f64>, stream: Option<RngStream>) -> FieldRealization {
        FieldRealization {
            points: self.points.clone(),
            eps: self.eps.clone(),
            values,
            stream,
        }
    }
}

/// Joint draws of the circle-averaged field on a point set and of its
/// boundary trace, by the Markov decomposition
/// `X = (harmonic extension of the first N trace modes) + independent remainder`.
#[derive(Debug, Clone)]
pub struct CoupledField {
    remainder: GaussianField,
    /// `√(2/n) rⁿ cos nθ` in column `n - 1`, `√(2/n) rⁿ sin nθ` in column `N + n - 1`.
    harmonic: Mat<f64>,
    n_modes: usize,
}

impl CoupledField {
    pub fn new(points: Vec<DiskPoint>, eps: Vec<f64>, n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::Parameter("a boundary trace needs at least one mode".into()));
        }
        let mut harmonic = Mat::<f64>::zeros(points.len(), 2 * n_modes);
        for (i, p) in points.iter().enumerate() {
            let step = p.as_complex();
            let mut w = Complex64::new(1.0, 0.0);
            for n in 1..=n_modes {
                w *= step;
                let c = (2.0 / n as f64).sqrt();
                harmonic[(i, n - 1)] = c * w.re;
                harmonic[(i, n_modes + n - 1)] = c * w.im;
            }
        }
        Ok(Self {
            remainder: GaussianField::trace_remainder(points, eps, n_modes)?,
            harmonic,
            n_modes,
        })
    }

    pub fn from_cells(cells: &[Cell], n_modes: usize) -> Result<Self> {
        Self::new(
            cells.iter().map(|c| c.center).collect(),
            cells.iter().map(|c| c.eps).collect(),
            n_modes,
        )
    }

    pub fn len(&self) -> usize {
        self.remainder.len()
    }

    pub fn is_empty(&self) -> bool {
        self.remainder.is_empty()
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn points(&self) -> &[DiskPoint] {
        self.remainder.points()
    }

    /// Covariance of the full field, `G_{ε_i,ε_j}(x_i, x_j)`.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        let (p, e) = (self.remainder.points(), self.remainder.eps());
        green_regularized_pair(p[i], e[i], p[j], e[j]).expect("validated at construction")
    }

    /// Replicas of block `block`: replica `r` uses `bulk.derive(r)` for the
    /// remainder and `trace.derive(r)` for the trace.
    pub fn sample_block(
        &self,
        bulk: &RngStream,
        trace: &RngStream,
        block: u64,
    ) -> Result<Vec<(FieldRealization, BoundaryTrace)>> {
        let n = self.n_modes;
        let traces = (0..BLOCK as u64)
            .map(|c| sample_boundary_trace(n, &trace.derive(block * BLOCK as u64 + c)))
            .collect::<Result<Vec<_>>>()?;
        let coeffs = Mat::from_fn(2 * n, BLOCK, |k, j| {
            if k < n {
                traces[j].cos[k]
            } else {
                traces[j].sin[k - n]
            }
        });
        let mut ext = Mat::<f64>::zeros(self.len(), BLOCK);
        faer::linalg::matmul::matmul(
            ext.as_mut(),
            Accum::Replace,
            self.harmonic.as_ref(),
            coeffs.as_ref(),
            1.0,
            Par::Seq,
        );
        Ok(self
            .remainder
            .sample_block(bulk, block)
            .into_iter()
            .zip(traces)
            .enumerate()
            .map(|(j, (mut field, t))| {
                for (i, v) in field.values.iter_mut().enumerate() {
                    *v += ext[(i, j)];
                }
                (field, t)
            })
            .collect())
    }
}

fn normals(m: usize, stream: &RngStream) -> Vec<f64> {
    let mut rng = stream.rng();
    (0..m).map(|_| rng.sample(StandardNormal)).collect()
}

/// One draw of the regularised field on a point set.
#[derive(Debug, Clone)]
pub struct FieldRealization {
    points: Arc<[DiskPoint]>,
    eps: Arc<[f64]>,
    values: Vec<f64>,
    stream: Option<RngStream>,
}

impl FieldRealization {
    pub fn points(&self) -> &[DiskPoint] {
        &self.points
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn stream(&self) -> Option<RngStream> {
        self.stream
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Analytic covariance entry of the law this draw comes from.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        green_regularized_pair(self.points[i], self.eps[i], self.points[j], self.eps[j])
            .expect("validated at construction")
    }

    /// Diagonal entries `G_ε(x_i, x_i)`.
    pub fn variances(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.covariance(i, i)).collect()
    }
}

/// Factorises the covariance for `points` with common radius `eps` and draws once.
pub fn sample_field(points: Vec<DiskPoint>, eps: f64, stream: &RngStream) -> Result<FieldRealization> {
    Ok(GaussianField::uniform(points, eps)?.sample(stream))
}

/// `E[X_ε(x)²] + ln ε` along a ladder of radii; constant and equal to
/// `½ ln g_P(x)` for the exact covariance.
pub fn variance_asymptotic_check(x: DiskPoint, eps_ladder: &[f64]) -> Result<Vec<f64>> {
    check_ladder(eps_ladder)?;
    eps_ladder
        .iter()
        .map(|&e| Ok(green_regularized_pair(x, e, x, e)? + e.ln()))
        .collect()
}

/// The same check for the field `X ∘ ψ`: its `ε`-circle average at `x` has
/// variance `G_ε(x,x) - 2 ⟨ln|ψ'|⟩_circle`, the circle mean being evaluated
/// by the trapezoid rule with `n_quad` nodes.
pub fn mobius_variance_check(x: DiskPoint, psi: &MobiusMap, eps_ladder: &[f64], n_quad: usize) -> Result<Vec<f64>> {
    check_ladder(eps_ladder)?;
    eps_ladder
        .iter()
        .map(|&e| {
            let mean_log_derivative = (0..n_quad)
                .map(|k| {
                    let w = x.as_complex() + Complex64::from_polar(e, 2.0 * PI * k as f64 / n_quad as f64);
                    let d = psi.a().conj();
                    ((1.0 - psi.a().norm_sqr()) / (1.0 - d * w).norm_sqr()).ln()
                })
                .sum::<f64>()
                / n_quad as f64;
            Ok(green_regularized_pair(x, e, x, e)? + e.ln() - 2.0 * mean_log_derivative)
        })
        .collect()
}

/// Limit of [`mobius_variance_check`]: `½ ln g_P(x) - 2 ln|ψ'(x)|`, which
/// also equals `½ ln g_P(ψ(x)) - ln|ψ'(x)|`.
pub fn mobius_variance_limit(x: DiskPoint, psi: &MobiusMap) -> Result<f64> {
    Ok(0.5 * poincare_density(x)?.ln() - 2.0 * psi.derivative(x).norm().ln())
}

fn check_ladder(eps_ladder: &[f64]) -> Result<()> {
    if eps_ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Parameter("eps ladder must be strictly decreasing".into()));
    }
    Ok(())
}
