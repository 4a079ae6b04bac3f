//! Error type shared by all solver components.

use thiserror::Error;

/// Crate-wide error enumeration.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid domain construction parameters.
    #[error("grid: {0}")]
    Grid(String),

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    /// A structural hypothesis on the data was violated at construction time.
    /// `name` cites the hypothesis label used in reports, e.g. "(F1)".
    #[error("hypothesis {name} violated: {message}")]
    Hypothesis { name: &'static str, message: String },

    /// The spectral positivity certificate did not pass; the quadratic form
    /// is not safely positive definite and the variational solver refuses to run.
    #[error(
        "spectral certificate failed: lambda_min = {lambda_min:.6e} <= margin {margin:.1e}"
    )]
    CertificateFailed { lambda_min: f64, margin: f64 },

    /// The map t -> J(t u) never turns downward below the probing cap.
    #[error("ray does not cross Nehari set: {0}")]
    RayCrossing(String),

    /// An inner iterative solve (CG, inverse iteration) failed to converge.
    #[error("iterative solve failed: {0}")]
    IterationFailure(String),

    /// A validator was called with no samples.
    #[error("empty sample list")]
    EmptySamples,

    /// Catch-all for invalid arguments.
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
