//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by basis construction, weighting, and fitting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("incompatible grid: {0}")]
    IncompatibleGrid(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate directions: {0}")]
    DegenerateDirections(String),

    #[error("insufficient sample: need at least {needed}, got {got}")]
    InsufficientSample { needed: usize, got: usize },

    /// The weighted subsample admits no finite minimizer (one response class,
    /// or quasi-complete separation with runaway coefficients).
    #[error("separation: {0}")]
    Separation(String),

    #[error("collinear scores: {0}")]
    Collinear(String),
}

pub type Result<T> = std::result::Result<T, Error>;
