//! Numerical laboratory for long-run portfolio choice in one-factor
//! diffusion markets.
//!
//! The pipeline: define a market ([`model`]), verify the standing conditions
//! by quadrature ([`wellposed`]), solve the long-run eigenproblem
//! ([`eigen`]) and the finite-horizon HJB PDE ([`pde`]), then demonstrate by
//! simulation ([`simulate`]) and convex duality ([`duality`]) that
//! finite-horizon optimal portfolios approach the long-run isoelastic
//! benchmark as the horizon grows.

pub mod cache;
pub mod coefficients;
pub mod duality;
pub mod eigen;
pub mod error;
pub mod grid;
pub mod kv;
pub mod linalg;
pub mod model;
pub mod pde;
pub mod quad;
pub mod report;
pub mod rng;
pub mod simulate;
pub mod tridiag;
pub mod wellposed;

pub use error::{Error, Result};
