//! Conic mixed-binary sets of the form
//!
//! ```text
//! S = { (x, z) : exists y with y_j >= f_j(z),  A^j x^j + B^j y_j in K_j  for all j }
//! ```
//!
//! with nonnegative set functions `f_j` over common binary variables `z` and
//! convex cones `K_j`. The crate builds such models for several application
//! families, generates the extended polymatroid / polar inequalities that
//! describe `conv(epi(f_j))` for submodular `f_j`, solves the continuous
//! relaxation by LP-based outer approximation, and verifies hull equality
//! numerically against enumeration oracles at desk scale.

// Dense numeric kernels index several arrays with one loop counter; iterator
// rewrites would obscure the linear algebra.
#![allow(clippy::needless_range_loop)]

pub mod conic;
pub mod model;
pub mod polymatroid;
pub mod set_function;
pub mod solver;
pub mod verify;

pub(crate) mod linalg;

use thiserror::Error;

/// Feasibility / membership tolerance used for cut violation, cone residuals
/// and exhaustive float comparisons.
pub const DEFAULT_TOL_FEAS: f64 = 1e-7;
/// Relative tolerance for objective-value comparisons.
pub const DEFAULT_TOL_OPT: f64 = 1e-6;
/// Simplex pivot tolerance.
pub const DEFAULT_PIVOT_TOL: f64 = 1e-9;

/// Exhaustive subset enumeration bound (2^16 values).
pub const MAX_ENUM_N: usize = 16;
/// Bound for the exact mixed-binary solve by enumeration.
pub const MAX_EXACT_N: usize = 20;
/// Bound for exhaustive cut validation.
pub const MAX_CUT_CHECK_N: usize = 12;
/// Bound for polar vertex enumeration by basis enumeration.
pub const MAX_VERTEX_ENUM_N: usize = 5;

#[derive(Debug, Error)]
pub enum Error {
    /// Instance too large for an exhaustive operation.
    #[error("capacity: {0}")]
    Capacity(String),
    /// Malformed argument (dimension mismatch, not a permutation, ...).
    #[error("argument: {0}")]
    Argument(String),
    /// Structurally invalid data (bad table length, bad schema, ...).
    #[error("structure: {0}")]
    Structure(String),
    /// Caller broke an operation's contract (e.g. asked for a separating
    /// hyperplane at a cone member).
    #[error("logic: {0}")]
    Logic(String),
    /// Solver failure that is not an ordinary Infeasible/CapHit status.
    #[error("solver: {0}")]
    Solver(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
