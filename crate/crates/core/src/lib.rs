//! Numerical Liouville quantum gravity on the unit disk.
//!
//! The crate samples the Neumann Gaussian free field on the disk, builds
//! subcritical and critical multiplicative chaos measures from it, attaches
//! marked points to obtain the Liouville partition function and volume laws,
//! and enumerates quadrangulations with a boundary for comparison with the
//! discrete model.

pub mod critical;
pub mod error;
pub mod geometry;
pub mod gff;
pub mod gmc;
pub mod grid;
pub mod io;
pub mod liouville;
pub mod maps;
pub mod parallel;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use geometry::{
    conformal_weight, green, green_regularized, green_regularized_pair, poincare_density, DiskPoint, LiouvilleParams,
    MobiusMap,
};
pub use num_complex::Complex64;
pub use rng::RngStream;
