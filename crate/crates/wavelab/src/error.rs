//! Error type shared by every module of the library.

use thiserror::Error;

/// Errors raised by the numerical laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    /// A parameter lies outside its admissible set.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The requested object does not fit on the grid or domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The exponential tilt of an unstable mode exceeds the representable range
    /// on a region where the mode is not negligible.
    #[error("tilt clamp violated: {0}")]
    TiltClamp(String),

    /// Bisection on the ground-state eigenvalue found no sign change.
    #[error("bracket failure: {message}; matching-function scan: {scan:?}")]
    Bracket {
        message: String,
        scan: Vec<(f64, f64)>,
    },

    /// An iterative solver did not converge.
    #[error("solver did not converge: {message} (trace: {trace:?})")]
    NonConvergence { message: String, trace: Vec<f64> },

    /// A small linear system was singular.
    #[error("singular system: {0}")]
    Singular(String),

    /// The time step violates the stability bound.
    #[error("CFL violation: |dt| = {dt} exceeds the bound {bound}")]
    Cfl { dt: f64, bound: f64 },

    /// The evolution produced a non-finite value.
    #[error("blow-up detected at t = {t}")]
    BlowUp { t: f64 },

    /// The modulation Newton iteration stagnated.
    #[error("decomposition failed after {iterations} iterations (residual {residual:e})")]
    Decomposition { iterations: usize, residual: f64 },

    /// The requested space-time slab is not covered by the stored trajectory.
    #[error("coverage error: missing time range [{t_min}, {t_max}]")]
    Coverage { t_min: f64, t_max: f64 },

    /// Input/output failure.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for LabError {
    fn from(e: serde_json::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, LabError>;
