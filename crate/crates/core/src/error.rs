use thiserror::Error;

/// Errors shared across the toolkit.
///
/// Numeric payloads are carried as `f64` regardless of the scalar type the
/// computation ran at; they are diagnostic only.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// An argument fell outside the mathematical domain of the operation.
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    /// The requested operation is undefined for this object (e.g. marginal
    /// utility of a non-strictly-concave family).
    #[error("unsupported operation {op}: {detail}")]
    Unsupported { op: &'static str, detail: String },

    /// No feasible solution exists for the given parameters.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A root bracket could not be established; reports what is achievable.
    #[error("bracket failure: {detail}; achievable range [{lo}, {hi}]")]
    Bracket { detail: String, lo: f64, hi: f64 },

    /// An iterative routine stopped without meeting its tolerance.
    #[error("no convergence in {op} after {iterations} iterations (residual {residual})")]
    NoConvergence {
        op: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// Invalid configuration of a run or component.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Two artifacts that must describe the same population do not.
    #[error("mismatch: {0}")]
    Mismatch(String),
}

impl Error {
    pub fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }

    pub fn unsupported(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Unsupported {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
