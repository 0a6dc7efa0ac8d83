//! Numerical laboratory for multi-soliton solutions of the focusing
//! energy-critical wave equation `∂ₜ²u = Δu + |u|^{4/3}u` on ℝ⁵, restricted to
//! functions that are symmetric around the `x₁` axis.

pub mod energy;
pub mod error;
pub mod evolve;
pub mod grid;
pub mod interactions;
pub mod jet;
pub mod linalg;
pub mod modulation;
pub mod profiles;
pub mod shooting;

pub use error::{LabError, Result};

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub mod quadrature;
pub mod spectral;
