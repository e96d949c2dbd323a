use serde::{Deserialize, Serialize};

use super::boltzmann::{BoltzmannConfig, BoltzmannTable};
use super::count::gaussian_exponent;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::stats::chi_square_sf;

/// Bins with fewer expected hits are reported as underpowered and left out
/// of the chi-square statistic.
pub const MIN_EXPECTED: f64 = 5.0;

/// Rectangular binning of `(V, l)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityBins {
    pub volume: (f64, f64),
    pub length: (f64, f64),
    pub n_volume: usize,
    pub n_length: usize,
}

impl Default for DensityBins {
    fn default() -> Self {
        Self {
            volume: (0.1, 2.1),
            length: (0.2, 2.2),
            n_volume: 20,
            n_length: 20,
        }
    }
}

impl DensityBins {
    pub fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo >= 0.0 && hi > lo && hi.is_finite();
        if !ok(self.volume) || !ok(self.length) || self.n_volume == 0 || self.n_length == 0 {
            return Err(Error::Configuration(format!("invalid binning {self:?}")));
        }
        Ok(())
    }

    fn index(&self, v: f64, l: f64) -> Option<(usize, usize)> {
        let find = |x: f64, (lo, hi): (f64, f64), k: usize| {
            if x < lo || x >= hi {
                return None;
            }
            Some((((x - lo) / (hi - lo)) * k as f64).floor().min(k as f64 - 1.0) as usize)
        };
        Some((
            find(v, self.volume, self.n_volume)?,
            find(l, self.length, self.n_length)?,
        ))
    }
}

/// `V^{-3/2} l^{1/2} e^{-μV - μ_∂l - 9l²/16V}`.
pub fn conjectured_density(v: f64, l: f64, mu: f64, mu_boundary: f64) -> f64 {
    v.powf(-1.5) * l.sqrt() * (-mu * v - mu_boundary * l - 9.0 * l * l / (16.0 * v)).exp()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DensityBin {
    pub volume: (f64, f64),
    pub length: (f64, f64),
    pub expected: f64,
    pub observed: u64,
}

/// Goodness of fit of the rescaled Boltzmann draws to the conjectured density.
#[derive(Debug, Clone, Serialize)]
pub struct DensityReport {
    pub n_draws: usize,
    /// Draws inside the binned range; expectations are normalised to this.
    pub n_in_range: usize,
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
    pub underpowered_bins: usize,
    pub bins: Vec<DensityBin>,
    /// Chi-square of `l` within the most populated volume bin against
    /// `l^{1/2} e^{-μ_∂l - 9l²/16V}`.
    pub slice: SliceReport,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SliceReport {
    pub volume: (f64, f64),
    pub n_in_slice: u64,
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Draws `n_draws` maps from the Boltzmann law with one marked inner vertex,
/// rescales them to `(V, l) = (a²n, 2ap)` and compares the binned counts with
/// the conjectured density. Expected counts are sums of the density over the
/// lattice points of each bin, so binning introduces no error of its own.
pub fn joint_density_check(
    cfg: BoltzmannConfig,
    bins: DensityBins,
    n_draws: usize,
    stream: &RngStream,
) -> Result<DensityReport> {
    bins.validate()?;
    let cfg = cfg.with_marked_vertex(true);
    let table = BoltzmannTable::new(cfg)?;
    let draws = table.sample_many(n_draws, stream);
    density_report(&cfg, bins, &draws)
}

/// The report for given draws of `(n, p)`.
pub fn density_report(cfg: &BoltzmannConfig, bins: DensityBins, draws: &[(u64, u64)]) -> Result<DensityReport> {
    bins.validate()?;
    let a = cfg.a;
    let (nv, nl) = (bins.n_volume, bins.n_length);
    let mut weight = vec![0.0; nv * nl];
    let n_lo = (bins.volume.0 / (a * a)).floor().max(1.0) as u64;
    let n_hi = (bins.volume.1 / (a * a)).ceil() as u64;
    let p_lo = (bins.length.0 / (2.0 * a)).floor().max(1.0) as u64;
    let p_hi = (bins.length.1 / (2.0 * a)).ceil() as u64;
    for n in n_lo..=n_hi {
        let v = a * a * n as f64;
        for p in p_lo..=p_hi {
            let l = 2.0 * a * p as f64;
            if let Some((i, j)) = bins.index(v, l) {
                // same exponent as the enumeration asymptotic
                debug_assert!((gaussian_exponent(n as f64, p as f64) - 9.0 * l * l / (16.0 * v)).abs() < 1e-9);
                weight[i * nl + j] += conjectured_density(v, l, cfg.mu, cfg.mu_boundary);
            }
        }
    }
    let mut observed = vec![0u64; nv * nl];
    for &(n, p) in draws {
        if let Some((i, j)) = bins.index(a * a * n as f64, 2.0 * a * p as f64) {
            observed[i * nl + j] += 1;
        }
    }
    let n_in: u64 = observed.iter().sum();
    let total_w: f64 = weight.iter().sum();
    if n_in == 0 || total_w == 0.0 {
        return Err(Error::Configuration(
            "no draws or no lattice points inside the binned range".into(),
        ));
    }
    let mut out = Vec::with_capacity(nv * nl);
    let (mut chi, mut used, mut under) = (0.0, 0usize, 0usize);
    for i in 0..nv {
        for j in 0..nl {
            let k = i * nl + j;
            let expected = n_in as f64 * weight[k] / total_w;
            if expected < MIN_EXPECTED {
                under += 1;
            } else {
                chi += (observed[k] as f64 - expected).powi(2) / expected;
                used += 1;
            }
            let edge = |(lo, hi): (f64, f64), m: usize, t: usize| {
                let w = (hi - lo) / m as f64;
                (lo + t as f64 * w, lo + (t + 1) as f64 * w)
            };
            out.push(DensityBin {
                volume: edge(bins.volume, nv, i),
                length: edge(bins.length, nl, j),
                expected,
                observed: observed[k],
            });
        }
    }
    if used < 2 {
        return Err(Error::Configuration(format!(
            "only {used} bins have at least {MIN_EXPECTED} expected draws: use more draws or fewer bins"
        )));
    }
    let dof = used - 1;

    // conditional slice in the most populated volume bin
    let row = (0..nv)
        .max_by_key(|&i| observed[i * nl..(i + 1) * nl].iter().sum::<u64>())
        .expect("at least one bin");
    let in_row: u64 = observed[row * nl..(row + 1) * nl].iter().sum();
    let w_row: f64 = weight[row * nl..(row + 1) * nl].iter().sum();
    let (mut s_chi, mut s_used) = (0.0, 0usize);
    for j in 0..nl {
        let k = row * nl + j;
        let expected = in_row as f64 * weight[k] / w_row;
        if expected >= MIN_EXPECTED {
            s_chi += (observed[k] as f64 - expected).powi(2) / expected;
            s_used += 1;
        }
    }
    let s_dof = s_used.saturating_sub(1).max(1);
    Ok(DensityReport {
        n_draws: draws.len(),
        n_in_range: n_in as usize,
        chi_square: chi,
        dof,
        p_value: chi_square_sf(chi, dof as f64),
        underpowered_bins: under,
        bins: out,
        slice: SliceReport {
            volume: out_volume(bins, row),
            n_in_slice: in_row,
            chi_square: s_chi,
            dof: s_dof,
            p_value: chi_square_sf(s_chi, s_dof as f64),
        },
    })
}

fn out_volume(bins: DensityBins, i: usize) -> (f64, f64) {
    let w = (bins.volume.1 - bins.volume.0) / bins.n_volume as f64;
    (bins.volume.0 + i as f64 * w, bins.volume.0 + (i + 1) as f64 * w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_shape() {
        let f = conjectured_density(1.0, 1.0, 0.0, 0.0);
        assert!((f - (-9.0f64 / 16.0).exp()).abs() < 1e-15);
        assert!(conjectured_density(2.0, 0.5, 1.0, 1.0) < conjectured_density(1.0, 0.5, 1.0, 1.0));
    }

    #[test]
    fn bin_index() {
        let b = DensityBins::default();
        assert_eq!(b.index(0.1, 0.2), Some((0, 0)));
        assert_eq!(b.index(2.1, 1.0), None);
        assert_eq!(b.index(0.05, 1.0), None);
        assert_eq!(b.index(2.0999, 2.1999), Some((19, 19)));
    }

    #[test]
    fn draws_from_the_density_itself_fit() {
        // draws placed exactly at the expected counts give a zero statistic
        let cfg = BoltzmannConfig::new(0.05, 1.0, 1.0).unwrap();
        let bins = DensityBins {
            volume: (0.1, 1.1),
            length: (0.2, 1.2),
            n_volume: 4,
            n_length: 4,
        };
        let empty = density_report(&cfg, bins, &vec![(200, 5); 1_000_000]).unwrap();
        let mut draws = Vec::new();
        for b in &empty.bins {
            let k = (b.expected / empty.n_in_range as f64 * 1e5).round() as usize;
            let n = ((b.volume.0 + b.volume.1) / 2.0 / (cfg.a * cfg.a)) as u64;
            let p = ((b.length.0 + b.length.1) / 2.0 / (2.0 * cfg.a)) as u64;
            draws.extend(std::iter::repeat_n((n, p), k));
        }
        let r = density_report(&cfg, bins, &draws).unwrap();
        assert!(r.p_value > 0.999, "{:?}", (r.chi_square, r.dof));
    }
}
