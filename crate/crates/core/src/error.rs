//! Error type shared across the crate.

use alloc::string::String;
use thiserror::Error;

/// Errors produced by validation, solvers, and environment stepping.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    /// A probability row does not form a distribution.
    #[error("invalid distribution in {context}: row {index} sums to {sum:.17} (must be 1 within {tol:.1e}) or has a negative entry")]
    InvalidDistribution {
        context: &'static str,
        index: usize,
        sum: f64,
        tol: f64,
    },

    /// A container has the wrong length for the declared shape.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// An index is out of range for its table.
    #[error("index out of range in {context}: {index} >= {len}")]
    IndexOutOfRange {
        context: &'static str,
        index: usize,
        len: usize,
    },

    /// A scalar argument is outside its documented domain.
    #[error("invalid argument in {context}: {detail}")]
    InvalidArgument {
        context: &'static str,
        detail: String,
    },

    /// A fixed-point solve did not reach its tolerance.
    #[error("no convergence after {sweeps} sweeps: residual {residual:.3e} above tolerance {tol:.3e}")]
    NonConvergence {
        sweeps: usize,
        residual: f64,
        tol: f64,
    },

    /// An operation needs a finite horizon but the problem is unbounded.
    #[error("{context} requires a finite horizon")]
    UnboundedHorizon { context: &'static str },

    /// `step` was called on an environment whose episode already ended.
    #[error("environment step after terminal state")]
    StepAfterTerminal,

    /// A metric or estimator received too little data.
    #[error("insufficient data in {context}: need at least {need}, got {got}")]
    InsufficientData {
        context: &'static str,
        need: usize,
        got: usize,
    },
}

impl CoreError {
    /// Shorthand for [`CoreError::InvalidArgument`].
    pub fn invalid(context: &'static str, detail: impl Into<String>) -> Self {
        CoreError::InvalidArgument {
            context,
            detail: detail.into(),
        }
    }
}
