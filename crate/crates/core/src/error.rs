//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used by every fallible operation in the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by graph evaluation, model fitting, geometry, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// An expression-graph node produced a non-finite value (overflow, log of a
    /// non-positive number, division by zero, ...). Names the offending node.
    #[error("non-finite value at graph node {node} ({op}) during {phase}")]
    NonFiniteNode {
        node: usize,
        op: &'static str,
        phase: &'static str,
    },

    /// Graph evaluated with the wrong number of inputs.
    #[error("graph expects {expected} inputs, got {got}")]
    InputArity { expected: usize, got: usize },

    /// Batch size exceeds the configured subset-enumeration cap.
    #[error("batch of {q} points exceeds the configured maximum of {max}")]
    BatchTooLarge { q: usize, max: usize },

    /// Requested Sobol dimension exceeds the embedded direction-number table.
    #[error("Sobol dimension {dim} exceeds supported maximum {max}")]
    UnsupportedDimension { dim: usize, max: usize },

    /// Tensor or matrix shapes do not line up.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    /// Degenerate or invalid argument outside of shape problems.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Covariance matrix stayed non-positive-definite through jitter escalation.
    #[error("matrix not positive definite after jitter escalation (last jitter {last_jitter:e})")]
    NotPositiveDefinite { last_jitter: f64 },

    /// Gaussian process fitting failed for an output.
    #[error("GP fit failed for output {output}: {reason}")]
    FitFailed { output: usize, reason: String },

    /// Unknown benchmark problem name.
    #[error("unknown problem '{0}'")]
    UnknownProblem(String),

    /// Malformed fixture or input file.
    #[error("parse error in {context}: {detail}")]
    Parse { context: String, detail: String },

    /// Underlying I/O failure.
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure.
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
