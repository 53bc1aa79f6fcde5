//! Numerics for the spectrum of `H = V* X V + U* Y U` with Haar `U`, `V`.
//!
//! The crate computes free additive convolutions through the subordination
//! equations, samples the matrix model, integrates a weighted Brownian motion
//! on the unitary group together with the eigenvalue process it induces, couples
//! that process to a clean Dyson Brownian motion driven by the same noise, and
//! measures local laws, rigidity, overlaps and gap statistics.

pub mod config;
pub mod dbm;
pub mod error;
pub mod experiments;
pub mod matrix_models;
pub mod measures;
pub mod spectral_stats;
mod par;
pub mod rng;
pub mod subordination;
pub mod svg;
pub mod unitary_diffusion;

pub use error::{Error, Result};
pub use measures::Measure;
