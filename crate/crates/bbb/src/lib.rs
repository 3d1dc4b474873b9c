//! Space-time convex solver for the quadratic porous medium equation (QPME)
//! and Burgers' equation on the periodic torus.
//!
//! The evolution problem is recast as a global convex minimization over a
//! pseudo-momentum `m` and pseudo-density `rho` on staggered space-time grids,
//! solved either by Chambolle-Pock proximal splitting with FFT constraint
//! projections, or by a damped Newton method on the dual potential.

pub mod anisotropy;
pub mod baseline;
pub mod energy;
pub mod exact;
pub mod grid;
pub mod io;
pub mod newton;
pub mod pd_solver;
pub mod perspective;
pub mod pool;
pub mod problem;
pub mod recovery;
pub mod spectral;

use std::fmt;

/// Library-wide error type.
#[derive(Debug)]
pub enum Error {
    /// Invalid argument or configuration.
    Invalid(String),
    /// Numerical failure: divergence, line-search breakdown, non-convergence.
    Numerical(String),
    /// Instance exceeds a configured size cap.
    Size(String),
    /// IO failure.
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Invalid(s) => write!(f, "invalid: {s}"),
            Error::Numerical(s) => write!(f, "numerical: {s}"),
            Error::Size(s) => write!(f, "size: {s}"),
            Error::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
