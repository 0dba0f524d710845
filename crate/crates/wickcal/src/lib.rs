//! Spectral operator workbench for Hadamard and Calderón projectors on flat tori.

pub mod bundles;
pub mod euclidean;
pub mod factorization;
pub mod gauge_states;
pub mod geometry;
pub mod linalg;
pub mod spectral_core;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("singular operator: {0}")]
    Singular(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("identity check failed: {0}")]
    Identity(String),
    #[error("truncation overflow: {0}")]
    Truncation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
