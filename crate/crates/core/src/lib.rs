//! Bayesian estimation of sparse Gaussian graphical models through a
//! low-rank-plus-diagonal precision `Ω = ΛΛᵀ + Δ`.
//!
//! Λ carries a Dirichlet–Laplace shrinkage prior and the diagonal of Δ a
//! Dirichlet-process mixture. A Gibbs sampler that factorizes only a q×q
//! matrix per sweep produces posterior draws, and edges are selected by
//! thresholding posterior tail probabilities of the partial correlations
//! with posterior false-discovery-rate control.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod cli;
pub mod error;
pub mod graphsel;
pub mod model;
pub mod rng;
pub mod rvgen;
pub mod sampler;
pub mod synthbench;

pub use error::{Error, Result};
