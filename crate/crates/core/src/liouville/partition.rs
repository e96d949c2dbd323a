use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{log_constant, log_vertex_prefactor, ChaosSetup, InsertionSet, LiouvilleModel};
use crate::error::{Error, Result};
use crate::geometry::{conformal_weight, MobiusMap};
use crate::rng::RngStream;
use crate::stats;

/// How the zero-mode integral over `c` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CIntegralMethod {
    /// Closed form when `μ_∂ = 0`, quadrature otherwise.
    #[default]
    Auto,
    Gamma,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartitionEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_replicas: usize,
    /// `ln Π g_P(z_i)^{α_i²/4} + C(z, s)`.
    pub log_prefactor: f64,
    pub s_total: f64,
    pub method: CIntegralMethod,
}

/// Relative threshold below which the tails of the `c` integrand are dropped.
const TAIL: f64 = 1e-14;

/// `∫_ℝ exp(s c - μ e^{γc} I - μ_∂ e^{γc/2} J) dc` by the trapezoid rule on
/// a bracket around the mode, refined until successive values agree to 1e-13.
pub fn c_integral(s: f64, gamma: f64, mu: f64, mu_boundary: f64, i: f64, j: f64) -> Result<f64> {
    let a = mu * gamma * i;
    let b = 0.5 * mu_boundary * gamma * j;
    if !(s > 0.0) || !(a >= 0.0 && b >= 0.0) || !(a + b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Numerical(format!(
            "c-integral diverges for s = {s}, mu I = {}, mu_boundary J = {}",
            mu * i,
            mu_boundary * j
        )));
    }
    let phi = |c: f64| s * c - mu * i * (gamma * c).exp() - mu_boundary * j * (0.5 * gamma * c).exp();
    // φ' = s - a u² - b u with u = e^{γc/2}
    let u = 2.0 * s / (b + (b * b + 4.0 * a * s).sqrt());
    let mode = 2.0 / gamma * u.ln();
    let peak = phi(mode);
    let cut = TAIL.ln();
    let edge = |dir: f64| {
        let mut d = 1.0;
        while phi(mode + dir * d) - peak > cut {
            d *= 2.0;
        }
        mode + dir * d
    };
    let (lo, hi) = (edge(-1.0), edge(1.0));
    let trapezoid = |n: usize| {
        let h = (hi - lo) / n as f64;
        let inner: stats::CompensatedSum = (1..n).map(|k| (phi(lo + k as f64 * h) - peak).exp()).collect();
        h * (inner.value() + 0.5 * ((phi(lo) - peak).exp() + (phi(hi) - peak).exp()))
    };
    let mut n = 256;
    let mut prev = trapezoid(n);
    while n < 1 << 22 {
        n *= 2;
        let next = trapezoid(n);
        if (next - prev).abs() <= 1e-13 * next {
            return Ok(next * peak.exp());
        }
        prev = next;
    }
    Err(Error::Numerical(format!(
        "c-integral did not converge on [{lo}, {hi}] (tail bound {TAIL:e})"
    )))
}

/// `γ^{-1} Γ(s/γ) μ^{-s/γ} I^{-s/γ}`, the `c` integral when `μ_∂ = 0`.
pub fn c_integral_gamma(s: f64, gamma: f64, mu: f64, i: f64) -> f64 {
    let k = s / gamma;
    (ln_gamma(k) - k * (mu * i).ln()).exp() / gamma
}

/// Reduced partition function from replica totals `(I, J)` of the drifted
/// bulk and boundary chaos.
pub fn partition_from_totals(
    ins: &InsertionSet,
    totals: &[(f64, f64)],
    method: CIntegralMethod,
) -> Result<PartitionEstimate> {
    let p = ins.params();
    let s = ins.s_total();
    if !(s > 0.0) {
        return Err(Error::Inadmissible(format!("s_total = {s} must be positive")));
    }
    let method = match method {
        CIntegralMethod::Auto if p.mu_boundary == 0.0 => CIntegralMethod::Gamma,
        CIntegralMethod::Auto => CIntegralMethod::Quadrature,
        CIntegralMethod::Gamma if p.mu_boundary != 0.0 => {
            return Err(Error::NotApplicable("the Gamma reduction needs mu_boundary = 0".into()))
        }
        m => m,
    };
    let k: Vec<f64> = totals
        .iter()
        .map(|&(i, j)| match method {
            CIntegralMethod::Gamma => Ok(c_integral_gamma(s, p.gamma, p.mu, i)),
            _ => c_integral(s, p.gamma, p.mu, p.mu_boundary, i, j),
        })
        .collect::<Result<_>>()?;
    let est = stats::mean_stderr(&k);
    let log_prefactor = log_vertex_prefactor(ins)? + log_constant(ins)?;
    let f = log_prefactor.exp();
    Ok(PartitionEstimate {
        value: f * est.mean,
        stderr: f * est.stderr,
        n_replicas: totals.len(),
        log_prefactor,
        s_total: s,
        method,
    })
}

/// Monte Carlo estimate of the reduced partition function over `n_replicas`
/// replicas rooted at `base`.
pub fn partition_estimate(
    ins: &InsertionSet,
    setup: ChaosSetup,
    n_replicas: usize,
    base: &RngStream,
    method: CIntegralMethod,
    workers: usize,
) -> Result<PartitionEstimate> {
    if n_replicas < 100 {
        return Err(Error::Parameter(format!(
            "need at least 100 replicas, got {n_replicas}"
        )));
    }
    let model = LiouvilleModel::new(ins, setup)?;
    let need_boundary = ins.params().mu_boundary != 0.0 || method == CIntegralMethod::Quadrature;
    let totals = model.replicas(base, n_replicas, workers, |p| {
        (p.bulk_total(), if need_boundary { p.boundary_total() } else { 0.0 })
    })?;
    partition_from_totals(ins, &totals, method)
}

/// `ln Π_i |ψ'(z_i)|^{-2Δ_{α_i}} Π_j |ψ'(s_j)|^{-Δ_{β_j}}`.
pub fn kpz_log_factor(ins: &InsertionSet, psi: &MobiusMap) -> f64 {
    let p = ins.params();
    let bulk: f64 = ins
        .bulk()
        .iter()
        .map(|b| -2.0 * conformal_weight(b.alpha, p) * psi.derivative(b.point).norm().ln())
        .sum();
    let boundary: f64 = ins
        .boundary()
        .iter()
        .map(|b| -conformal_weight(b.beta, p) * psi.derivative(b.point).norm().ln())
        .sum();
    bulk + boundary
}

/// Partition functions before and after moving the insertions by `ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KpzReport {
    pub original: PartitionEstimate,
    pub moved: PartitionEstimate,
    pub predicted_ratio: f64,
    pub observed_ratio: f64,
    /// `(Π(ψ(z)) - ratio · Π(z)) / combined standard error`.
    pub z_score: f64,
}

impl KpzReport {
    /// Compares `moved ≈ ratio · original` with the ratio predicted by the
    /// conformal weights of `ins` under `psi`.
    pub fn new(ins: &InsertionSet, psi: &MobiusMap, original: PartitionEstimate, moved: PartitionEstimate) -> Self {
        let predicted_ratio = kpz_log_factor(ins, psi).exp();
        let combined = (moved.stderr.powi(2) + (predicted_ratio * original.stderr).powi(2)).sqrt();
        Self {
            original,
            moved,
            predicted_ratio,
            observed_ratio: moved.value / original.value,
            z_score: (moved.value - predicted_ratio * original.value) / combined,
        }
    }
}

/// Estimates `Π(z)` and `Π(ψ(z))` from independent replica families
/// (`base.derive(0)` and `base.derive(1)`) and compares their ratio with the
/// conformal weights.
pub fn kpz_covariance(
    ins: &InsertionSet,
    psi: &MobiusMap,
    setup: ChaosSetup,
    n_replicas: usize,
    base: &RngStream,
    workers: usize,
) -> Result<KpzReport> {
    let moved_ins = ins.moved(psi)?;
    let auto = CIntegralMethod::Auto;
    let original = partition_estimate(ins, setup, n_replicas, &base.derive(0), auto, workers)?;
    let moved = partition_estimate(&moved_ins, setup, n_replicas, &base.derive(1), auto, workers)?;
    Ok(KpzReport::new(ins, psi, original, moved))
}
