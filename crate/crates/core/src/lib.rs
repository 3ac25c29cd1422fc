//! Forward and inverse spectral machinery for first-order systems
//!
//! ```text
//! y' = x^{-1} A y + q(x) y + rho B y,      x > 0,
//! ```
//!
//! where `A` is off-diagonal with distinct eigenvalues, `B` is a traceless
//! diagonal matrix with distinct nonzero entries, and the potential `q` is
//! off-diagonal with entries from the family `c * x^a * exp(-sigma x)`.
//!
//! The crate builds the two-sided fundamental wedge tensors of the system
//! (regular at the origin on one side, decaying at infinity on the other),
//! solves for the Weyl-type columns normalized at both ends, forms the
//! sectorial spectral mapping `P = Psi Psi0^{-1}`, and reconstructs the
//! potential from the jump of `P` across the separation rays via a
//! commutator contour integral.
//!
//! Module layout mirrors the pipeline:
//!
//! * [`exterior`]   - small exterior-algebra kernel (wedges, compound maps)
//! * [`numerics`]   - adaptive linear ODE integrator, quadrature, limits
//! * [`model`]      - system description, validation, sector geometry
//! * [`unperturbed`] - regular (Frobenius) basis and large-x anchor series
//! * [`weyl`]       - fundamental tensors and Weyl column solves
//! * [`spectral`]   - spectral mapping and its jump across rays
//! * [`asymcheck`]  - large-rho residual checks for the first-order terms
//! * [`reconstruct`] - truncated contour integrals and their limits
//! * [`cli`]        - command implementations for the `weylmap` binary

pub mod asymcheck;
pub mod cli;
pub mod exterior;
pub mod linalg;
pub mod model;
pub mod numerics;
pub mod reconstruct;
pub mod spectral;
pub mod unperturbed;
pub mod weyl;

pub use linalg::{CMat, C64};

/// Crate-wide error type. Variants map onto the CLI exit codes:
/// assumption/validation failures (1), I/O and format problems (2),
/// numerical non-convergence (3).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("input/output error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("numerical non-convergence: {0}")]
    NonConvergence(String),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Assumption(_) => 1,
            Error::Io(_) | Error::Format(_) => 2,
            Error::NonConvergence(_) => 3,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
