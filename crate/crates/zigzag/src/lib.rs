//! Ground-state simulation engine and analysis pipeline for the quantum
//! linear-zigzag transition of power-law-repulsive particle chains.
//!
//! The crate is organized around a chain of transformations: closed-form
//! coefficients of the effective short-range model ([`model`]), validation of
//! that mapping against the long-range phonon scattering functions
//! ([`bands`]), a truncated local basis from the single-site harmonic-quartic
//! problem ([`localbasis`]), variational ground-state search with matrix
//! product states ([`dmrg`]) checked against dense exact diagonalization
//! ([`ed`]), measurements on converged states ([`observables`]), criticality
//! fits ([`analysis`]) and sweep orchestration ([`sweep`]).
//!
//! Data-parallel inner loops (correlation matrices, band scans, sweep grids)
//! run on rayon when the default `parallel` feature is enabled and fall back
//! to sequential iteration otherwise.

pub mod analysis;
pub mod bands;
pub mod dmrg;
pub mod ed;
pub mod linalg;
pub mod localbasis;
pub mod model;
pub mod mps;
pub mod observables;
pub mod sweep;

pub use model::{CoefficientTable, ModelParameters, PhysicalParameters};

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("did not converge: {0}")]
    NonConvergence(String),
    #[error("resource guard: {0}")]
    ResourceGuard(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
