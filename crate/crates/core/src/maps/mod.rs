//! Quadrangulations with a simple boundary: exact and asymptotic counts,
//! Boltzmann sampling of `(n, p)`, and the joint `(V, l)` density check.

mod boltzmann;
mod count;
mod density;

pub use boltzmann::{histogram_check, BoltzmannConfig, BoltzmannTable, HistogramCell, HistogramReport, TAIL_TOLERANCE};
pub use count::{
    count_exact, gaussian_exponent, ln_biguint, log_count, log_count_asymptotic, AsymptoticForm, LnFactorial, MapCount,
};
pub use density::{
    conjectured_density, density_report, joint_density_check, DensityBin, DensityBins, DensityReport, SliceReport,
    MIN_EXPECTED,
};
