//! Spectral data of the linearised operators: the ground state of `L`, the
//! unstable modes of `H_ℓ J`, algebraic identities and coercivity constants.

pub mod coercivity;
pub mod ground;
pub mod identities;
pub mod modes;

pub use ground::{solve_ground_state, GroundState, RadialProfile};
pub use identities::{verify_identities, IdentityReport};
pub use modes::{build_antecedents, build_zmodes, ModeFamily, ZModes};
pub use coercivity::{measure_coercivity, CoercivityForm, CoercivityResult, Constraint};
