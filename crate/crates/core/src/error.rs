//! Error type shared across the toolkit.

use thiserror::Error;

/// All domain failures the toolkit can report.
///
/// The variant name is the stable, machine-readable identifier (the CLI
/// prints it on stderr); the payload carries human-readable context.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric map produced a non-finite value (overflow, or a rational
    /// distortion denominator at or below zero).
    #[error("NonFiniteResult: {0}")]
    NonFiniteResult(String),

    /// An iterative inverse failed to reach its tolerance.
    #[error("NoConvergence: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { iterations: usize, residual: f64 },

    /// A point has non-positive depth in a camera frame.
    #[error("BehindCamera: {0}")]
    BehindCamera(String),

    /// Input geometry does not constrain the estimate (collinear points,
    /// parallel views, too few views).
    #[error("DegenerateConfiguration: {0}")]
    DegenerateConfiguration(String),

    /// The recovered conic/metric matrix is not positive definite; the
    /// correspondences are inconsistent with a real camera.
    #[error("NonPositiveDefinite: {0}")]
    NonPositiveDefinite(String),

    /// The damped normal equations could not be solved at any damping level.
    #[error("SingularNormalEquations: {0}")]
    SingularNormalEquations(String),

    /// A residual function returned non-finite values at the current iterate.
    #[error("NonFiniteResidual: {0}")]
    NonFiniteResidual(String),

    /// The training loss became non-finite.
    #[error("NonFiniteLoss: loss diverged at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    /// A vector or matrix had an incompatible size.
    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),

    /// Triangulation rays are (near-)parallel; the solution is at infinity.
    #[error("DegenerateGeometry: {0}")]
    DegenerateGeometry(String),

    /// The disparity error meets or exceeds the true disparity; the
    /// perturbed depth is unbounded.
    #[error("DivergentDepth: {0}")]
    DivergentDepth(String),

    /// Paired lists have different lengths.
    #[error("LengthMismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    /// A scene or run configuration is infeasible.
    #[error("ConfigError: {0}")]
    ConfigError(String),

    /// File I/O failure.
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure.
    #[error("Format: {0}")]
    Format(#[from] serde_json::Error),
}

impl Error {
    /// Stable identifier of the failure class, without the context payload.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NonFiniteResult(_) => "NonFiniteResult",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::BehindCamera(_) => "BehindCamera",
            Error::DegenerateConfiguration(_) => "DegenerateConfiguration",
            Error::NonPositiveDefinite(_) => "NonPositiveDefinite",
            Error::SingularNormalEquations(_) => "SingularNormalEquations",
            Error::NonFiniteResidual(_) => "NonFiniteResidual",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::DegenerateGeometry(_) => "DegenerateGeometry",
            Error::DivergentDepth(_) => "DivergentDepth",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::ConfigError(_) => "ConfigError",
            Error::Io(_) => "Io",
            Error::Format(_) => "Format",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
