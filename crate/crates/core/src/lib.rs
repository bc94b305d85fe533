//! Exact and stochastic computations for bi-free probability.
//!
//! The crate is organised bottom-up:
//!
//! * [`partitions`]: the `s_chi` permutation, bi-non-crossing partitions and
//!   their Möbius function.
//! * [`cumulants`]: moment/cumulant transforms over arbitrary moment
//!   functionals, bi-free central limit and bi-free Poisson moments.
//! * [`fock`]: an exact q-deformed Fock space with left and right
//!   creation/annihilation operators.
//! * [`bimatrix`]: matrices of Fock operators acting on matrices of Fock
//!   vectors through the left action `L` and the twisted right action `R`.
//! * [`limits`]: the Boolean and monotone bi-matrix models with their
//!   closed-form finite-N values and limits.
//! * [`ensembles`]: Monte Carlo random pairs of matrices (Gaussian, Wishart,
//!   Haar) with reproducible chunked sampling.
//! * [`report`]: convergence series and machine-readable report documents.
//! * [`battery`]: the acceptance battery shared by the CLI `suite` command and
//!   the acceptance test target.

pub mod battery;
pub mod bimatrix;
pub mod cumulants;
pub mod ensembles;
mod error;
pub mod fock;
pub mod limits;
pub mod partitions;
pub mod rational;
pub mod report;

pub use error::{Error, Result};
pub use rational::Rational;
