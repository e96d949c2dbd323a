use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (coincident points,
    /// points outside the disk, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A model parameter is out of range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A grid or discretisation is unusable for the requested operation.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// Two distinct regularisation circles overlap, so the covariance has no
    /// closed form.
    #[error("unsupported configuration: circles of radius {eps_a} and {eps_b} at distance {distance} overlap")]
    OverlappingCircles { distance: f64, eps_a: f64, eps_b: f64 },

    /// The covariance matrix failed the positive-definiteness check.
    #[error("factorization error: pivot {pivot} at row {row} is below tolerance {tolerance}")]
    Factorization { row: usize, pivot: f64, tolerance: f64 },

    /// An evaluation point coincides with a marked point.
    #[error("singularity: {0}")]
    Singularity(String),

    /// The insertion data violates the Seiberg bounds.
    #[error("inadmissible insertions: {0}")]
    Inadmissible(String),

    /// A quantity is only defined for a different parameter regime.
    #[error("not applicable: {0}")]
    NotApplicable(String),

    /// A numerical procedure failed to converge or degenerated.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
