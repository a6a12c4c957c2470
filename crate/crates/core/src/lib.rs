//! certlab: structured-ℓ1 regularized estimation with primal-dual certificates.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`] dense kernels (Jacobi SVD / eigen, Cholesky, CG),
//! * [`regularizers`] lasso, group, nuclear and mixed norms plus certificate frames,
//! * [`losses`] quadratic and GLM losses with Bregman divergences,
//! * [`solvers`] accelerated proximal gradient, basis pursuit, certificate problems,
//! * [`certificates`] certificate construction and inequality checkers,
//! * [`gaussian`] Gaussian width, Gordon tails and sample complexity,
//! * [`rsc`] curvature-constant estimators,
//! * [`experiments`] the seeded harness behind the `certlab` binary.
//!
//! Parameters are flat `Vec<f64>`; matrix-valued parameters are stored row-major.

pub mod certificates;
pub mod error;
pub mod experiments;
pub mod gaussian;
pub mod linalg;
pub mod losses;
pub mod regularizers;
pub mod rng;
pub mod rsc;
pub mod solvers;

pub use error::{Error, Result};
