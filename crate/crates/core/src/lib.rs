//! Numerical laboratory for the multi-particle Anderson model on `Z^{Nd}`.
//!
//! The crate builds finite-volume operators `H = Δ + gV + U` with Dirichlet
//! boundary conditions, classifies cubes by the decay of their Green
//! functions, checks the radial-descent bound for discrete subharmonic
//! functions, and runs seeded Monte-Carlo experiments on the probabilistic
//! localization estimates.

pub mod config;
pub mod descent;
pub mod error;
pub mod experiments;
pub mod field;
pub mod hamiltonian;
pub mod io;
pub mod lattice;
pub mod msa;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
