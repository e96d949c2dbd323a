use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Gamma;
use serde::Serialize;
use statrs::function::gamma::gamma_lr;

use super::{c_integral, seiberg_check, ChaosSetup, InsertionSet, LiouvilleModel};
use crate::error::{Error, Result};
use crate::gmc::AtomicMeasure;
use crate::rng::RngStream;
use crate::stats::{self, Estimate, KsResult};

/// Shape `s_total/γ` and rate `μ` of the Gamma law of the total volume when
/// `μ_∂ = 0`.
pub fn volume_law_params(ins: &InsertionSet) -> Result<(f64, f64)> {
    let p = ins.params();
    if p.mu_boundary != 0.0 {
        return Err(Error::NotApplicable(format!(
            "the volume is Gamma distributed only for mu_boundary = 0 (got {})",
            p.mu_boundary
        )));
    }
    let v = seiberg_check(ins)?;
    if !v.admissible {
        return Err(Error::Inadmissible(v.findings().join("; ")));
    }
    Ok((v.s_total / p.gamma, p.mu))
}

/// One draw of the Liouville volume `V`, boundary length `L` and the chaos
/// replica carrying the normalised measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LiouvilleDraw {
    pub replica: usize,
    pub volume: f64,
    pub length: f64,
    /// Normalised importance weight of the replica.
    pub weight: f64,
}

/// Samples `(V, L, Z₀/Z₀(𝔻), Z₀^∂/Z₀^∂(∂𝔻))` by reweighting a pool of chaos
/// replicas and drawing the scale `y` exactly given the replica.
///
/// Replica `r` gets weight `Z₀^∂(∂𝔻)^{-2s/γ} ∫ y^{2s/γ-1} e^{-μ y² R - μ_∂ y} dy`,
/// then `y` is drawn from the integrand and `V = y² R`, `L = y`.
#[derive(Debug, Clone)]
pub struct VolumeLawSampler {
    model: LiouvilleModel,
    base: RngStream,
    bulk: Vec<f64>,
    boundary: Vec<f64>,
    half_disk: Vec<f64>,
    weights: Vec<f64>,
    index: WeightedIndex<f64>,
}

impl VolumeLawSampler {
    pub fn new(
        ins: &InsertionSet,
        setup: ChaosSetup,
        n_replicas: usize,
        base: &RngStream,
        workers: usize,
    ) -> Result<Self> {
        let model = LiouvilleModel::new(ins, setup)?;
        let p = *ins.params();
        let k = 2.0 * ins.s_total() / p.gamma;
        let rows = model.replicas(base, n_replicas, workers, |pair| {
            let i = pair.bulk_total();
            (i, pair.boundary_total(), pair.z0.mass_of(|x| x.re() > 0.0) / i)
        })?;
        let mut log_w = Vec::with_capacity(rows.len());
        for &(i, j, _) in &rows {
            log_w.push(if p.mu_boundary == 0.0 {
                -0.5 * k * i.ln()
            } else {
                -k * j.ln() + c_integral(k, 2.0, p.mu, p.mu_boundary, i / (j * j), 1.0)?.ln()
            });
        }
        let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(Error::Numerical("all replica weights underflowed".into()));
        }
        let raw: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
        let total = stats::sum(&raw);
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let index = WeightedIndex::new(&weights).map_err(|e| Error::Numerical(format!("resampling failed: {e}")))?;
        Ok(Self {
            model,
            base: *base,
            bulk: rows.iter().map(|r| r.0).collect(),
            boundary: rows.iter().map(|r| r.1).collect(),
            half_disk: rows.iter().map(|r| r.2).collect(),
            weights,
            index,
        })
    }

    pub fn n_replicas(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Kish effective sample size of the replica weights.
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// `Z₀(𝔻)` and `Z₀^∂(∂𝔻)` of replica `r`.
    pub fn totals(&self, r: usize) -> (f64, f64) {
        (self.bulk[r], self.boundary[r])
    }

    /// Normalised mass of the half-disk `{Re x > 0}` under replica `r`.
    pub fn half_disk_mass(&self, r: usize) -> f64 {
        self.half_disk[r]
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<LiouvilleDraw> {
        let r = self.index.sample(rng);
        let p = self.model.insertions().params();
        let s = self.model.insertions().s_total();
        let (i, j) = self.totals(r);
        let ratio = i / (j * j);
        let y = if p.mu_boundary == 0.0 {
            let v: f64 = Gamma::new(s / p.gamma, 1.0 / p.mu)
                .map_err(|e| Error::Numerical(e.to_string()))?
                .sample(rng);
            (v / ratio).sqrt()
        } else {
            sample_scale(2.0 * s / p.gamma, p.mu * ratio, p.mu_boundary, rng)?
        };
        Ok(LiouvilleDraw {
            replica: r,
            volume: y * y * ratio,
            length: y,
            weight: self.weights[r],
        })
    }

    /// `n` draws from the stream `stream`.
    pub fn draws(&self, n: usize, stream: &RngStream) -> Result<Vec<LiouvilleDraw>> {
        let mut rng = stream.rng();
        (0..n).map(|_| self.draw(&mut rng)).collect()
    }

    /// Normalised bulk and boundary measures of replica `r`.
    pub fn normalized_measures(&self, r: usize) -> Result<(AtomicMeasure, AtomicMeasure)> {
        let pair = self.model.replica(&self.base, r)?;
        Ok((pair.z0.normalized()?, pair.z0_boundary.normalized()?))
    }
}

/// Draws `y` from the density `∝ y^{k-1} e^{-a y² - b y}` by inverting its
/// distribution function on a grid in `ln y`.
fn sample_scale<R: Rng + ?Sized>(k: f64, a: f64, b: f64, rng: &mut R) -> Result<f64> {
    let phi = |u: f64| k * u - a * (2.0 * u).exp() - b * u.exp();
    // mode of φ: a 2e^{2u} + b e^u = k
    let e = 2.0 * k / (b + (b * b + 8.0 * a * k).sqrt());
    let mode = e.ln();
    let peak = phi(mode);
    let edge = |dir: f64| {
        let mut d = 1.0;
        while phi(mode + dir * d) - peak > -40.0 {
            d *= 2.0;
        }
        mode + dir * d
    };
    let (lo, hi) = (edge(-1.0), edge(1.0));
    let n = 1 << 14;
    let h = (hi - lo) / n as f64;
    let f: Vec<f64> = (0..=n).map(|m| (phi(lo + m as f64 * h) - peak).exp()).collect();
    let mut cdf = vec![0.0; n + 1];
    for m in 1..=n {
        cdf[m] = cdf[m - 1] + 0.5 * h * (f[m - 1] + f[m]);
    }
    let target = rng.random::<f64>() * cdf[n];
    let m = cdf.partition_point(|&c| c < target).clamp(1, n);
    let t = (target - cdf[m - 1]) / (cdf[m] - cdf[m - 1]);
    if !t.is_finite() {
        return Err(Error::Numerical("degenerate scale distribution".into()));
    }
    Ok((lo + (m as f64 - 1.0 + t) * h).exp())
}

/// Draws of `V` against the exact Gamma law, and their correlation with the
/// normalised half-disk mass of the replica they came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaLawReport {
    pub shape: f64,
    pub rate: f64,
    pub ks: KsResult,
    pub correlation: Estimate,
    /// `p > 0.01` and `|correlation| < 3` standard errors.
    pub passed: bool,
}

/// Requires `μ_∂ = 0`.
pub fn gamma_law_report(
    ins: &InsertionSet,
    sampler: &VolumeLawSampler,
    draws: &[LiouvilleDraw],
) -> Result<GammaLawReport> {
    let (shape, rate) = volume_law_params(ins)?;
    let volumes: Vec<f64> = draws.iter().map(|d| d.volume).collect();
    let half: Vec<f64> = draws.iter().map(|d| sampler.half_disk_mass(d.replica)).collect();
    let ks = stats::ks_test(&volumes, |v| if v <= 0.0 { 0.0 } else { gamma_lr(shape, rate * v) });
    let correlation = stats::correlation(&volumes, &half);
    Ok(GammaLawReport {
        shape,
        rate,
        ks,
        correlation,
        passed: ks.p_value > 0.01 && correlation.mean.abs() < 3.0 * correlation.stderr,
    })
}

/// Weighted average of a functional of the normalised bulk measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnitVolumeEstimate {
    pub estimate: Estimate,
    pub effective_sample_size: f64,
    /// Fewer than 10 effective replicas: the estimate is unreliable.
    pub degenerate: bool,
}

/// `E[f(Z₀/Z₀(𝔻)) Z₀(𝔻)^{-(3/2 - Q/γ)}] / E[Z₀(𝔻)^{-(3/2 - Q/γ)}]` for three
/// boundary insertions of weight `γ` and `μ_∂ = 0`, with a jackknife error.
pub fn unit_volume_expectation(
    ins: &InsertionSet,
    setup: ChaosSetup,
    f: impl Fn(&AtomicMeasure) -> f64 + Sync,
    n_replicas: usize,
    base: &RngStream,
    workers: usize,
) -> Result<UnitVolumeEstimate> {
    let p = ins.params();
    if p.mu_boundary != 0.0 {
        return Err(Error::NotApplicable(
            "unit-volume expectations need mu_boundary = 0".into(),
        ));
    }
    if !ins.bulk().is_empty()
        || ins.boundary().len() != 3
        || ins.boundary().iter().any(|b| (b.beta - p.gamma).abs() > 1e-12)
    {
        return Err(Error::NotApplicable(
            "unit-volume expectations need exactly three boundary insertions of weight gamma".into(),
        ));
    }
    let model = LiouvilleModel::new(ins, setup)?;
    let exponent = 1.5 - p.q() / p.gamma;
    let rows = model.replicas(base, n_replicas, workers, |pair| {
        let total = pair.bulk_total();
        let normalized = pair.z0.normalized().map(|m| f(&m));
        (total.powf(-exponent), normalized)
    })?;
    let mut w = Vec::with_capacity(rows.len());
    let mut wf = Vec::with_capacity(rows.len());
    for (weight, value) in rows {
        let v = value?;
        w.push(weight);
        wf.push(weight * v);
    }
    let sw = stats::sum(&w);
    let ess = sw * sw / w.iter().map(|x| x * x).sum::<f64>();
    Ok(UnitVolumeEstimate {
        estimate: stats::jackknife_ratio(&wf, &w),
        effective_sample_size: ess,
        degenerate: ess < 10.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DiskPoint, LiouvilleParams};
    use crate::grid::PolarGridSpec;
    use crate::liouville::{BoundaryInsertion, BulkInsertion};

    fn setup() -> ChaosSetup {
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

    fn volume_set(mu_b: f64) -> InsertionSet {
        let g = (8.0f64 / 3.0).sqrt();
        InsertionSet::new(
            vec![BulkInsertion {
                point: DiskPoint::ORIGIN,
                alpha: g,
            }],
            vec![BoundaryInsertion {
                point: DiskPoint::boundary(0.0),
                beta: g,
            }],
            LiouvilleParams::new(g, 1.0, mu_b).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn gamma_parameters() {
        let (shape, rate) = volume_law_params(&volume_set(0.0)).unwrap();
        assert!((shape - 0.25).abs() < 1e-12);
        assert_eq!(rate, 1.0);
        assert!(matches!(
            volume_law_params(&volume_set(0.5)),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn scale_sampler_matches_gamma_case() {
        // b = 0: y² a ~ Gamma(k/2, 1)
        let mut rng = RngStream::new(3, 0).rng();
        let ys: Vec<f64> = (0..4000)
            .map(|_| sample_scale(0.5, 2.0, 0.0, &mut rng).unwrap())
            .collect();
        let ks = stats::ks_test(&ys.iter().map(|y| 2.0 * y * y).collect::<Vec<_>>(), |v| {
            use statrs::distribution::{ContinuousCDF, Gamma as G};
            G::new(0.25, 1.0).unwrap().cdf(v)
        });
        assert!(ks.p_value > 0.001, "{ks:?}");
    }

    #[test]
    fn weights_are_normalised_and_draws_positive() {
        let s = VolumeLawSampler::new(&volume_set(0.5), setup(), 64, &RngStream::new(5, 0), 2).unwrap();
        assert!((s.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(s.effective_sample_size() > 1.0);
        for d in s.draws(50, &RngStream::new(5, 1)).unwrap() {
            assert!(d.volume > 0.0 && d.length > 0.0);
            let (i, j) = s.totals(d.replica);
            assert!((d.volume / (d.length * d.length) / (i / (j * j)) - 1.0).abs() < 1e-12);
        }
        let (b, e) = s.normalized_measures(3).unwrap();
        assert!((b.total_mass() - 1.0).abs() < 1e-12 && (e.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_volume_trivial_functionals() {
        let g = (8.0f64 / 3.0).sqrt();
        let t = 2.0 * std::f64::consts::PI / 3.0;
        let ins = InsertionSet::new(
            vec![],
            [0.0, t, -t]
                .iter()
                .map(|&th| BoundaryInsertion {
                    point: DiskPoint::boundary(th),
                    beta: g,
                })
                .collect(),
            LiouvilleParams::new(g, 1.0, 0.0).unwrap(),
        )
        .unwrap();
        let one = unit_volume_expectation(&ins, setup(), |_| 1.0, 64, &RngStream::new(1, 0), 1).unwrap();
        assert!((one.estimate.mean - 1.0).abs() < 1e-12);
        let mass = unit_volume_expectation(&ins, setup(), |m| m.total_mass(), 64, &RngStream::new(1, 0), 1).unwrap();
        assert!((mass.estimate.mean - 1.0).abs() < 1e-12);
        assert!(unit_volume_expectation(&volume_set(0.0), setup(), |_| 1.0, 64, &RngStream::new(1, 0), 1).is_err());
    }
}
