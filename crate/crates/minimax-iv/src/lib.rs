//! Penalized minimax instrumental-variable regression on finite discrete
//! designs.
//!
//! The library solves the linear inverse problem E[Y - h(X) | Z] = 0 for a
//! structural function h when X and Z take finitely many values. The
//! conditional expectation operator T mapping L2(X) into L2(Z) is a known
//! finite matrix once the joint design is fixed, so every population object
//! (least-norm solution, Lagrange multiplier, singular system) has an exact
//! oracle. On top of that sit the estimators: a penalized minimax procedure
//! whose L2 error is controlled without instrument-completeness assumptions,
//! plus rival procedures that control only the projected error, and a
//! best-of-both-worlds combination.
//!
//! Module layout:
//!
//! - [`probspace`]: weighted L2 geometry on finite supports
//! - [`npivop`]: conditional expectation operator, SVD, population oracles
//! - [`scenario`]: data-generating designs, spectral constructions, sampling
//! - [`funclass`]: hypothesis and discriminator families
//! - [`estimators`]: objectives and the five fitting procedures
//! - [`theory`]: finite-sample bounds, saddle checks, complexity estimates
//! - [`harness`]: config-driven sweeps, rate reports, verification suite

pub mod estimators;
pub mod funclass;
pub mod harness;
mod linalg;
pub mod npivop;
pub mod probspace;
pub mod scenario;
pub mod theory;

use thiserror::Error as ThisError;

/// Crate-wide error type.
#[derive(Debug, ThisError)]
pub enum Error {
    /// A function's length does not match the space it is used with.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Weighted-space construction rejected its inputs.
    #[error("invalid weighted space: {0}")]
    InvalidSpace(String),

    /// Joint-design construction rejected its inputs.
    #[error("invalid design: {0}")]
    InvalidDesign(String),

    /// A spectral construction produced a negative cell.
    #[error("joint mass at cell (x={x}, z={z}) is negative: {value:.6e}")]
    NegativeCell { x: usize, z: usize, value: f64 },

    /// The response is outside the operator range.
    #[error("no solution: response is not in the operator range (relative residual {residual:.3e})")]
    NoSolution { residual: f64 },

    /// The response is outside the range of T T*.
    #[error("source condition violated numerically (relative residual {residual:.3e})")]
    SourceCondition { residual: f64 },

    /// A factorization or its invariants failed numerically.
    #[error("factorization failed: {0}")]
    Factorization(String),

    /// A function family was empty or malformed.
    #[error("invalid family: {0}")]
    InvalidFamily(String),

    /// A kernel Gram matrix was not positive semidefinite.
    #[error("kernel gram matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPsd { min_eig: f64 },

    /// Configuration parsing or validation failed.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Slope fitting was asked for nonpositive values or too few points.
    #[error("invalid rate data: {0}")]
    RateData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
