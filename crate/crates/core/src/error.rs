use thiserror::Error;

/// Errors raised by the analyzer.
///
/// Variants are grouped so a front end can map them onto distinct exit
/// statuses: structural/validation problems, resource caps, and unmet
/// hypotheses of exact results.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SandpileError {
    #[error("invalid arborescence: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),

    #[error("vertex `{0}` is not a leaf")]
    NotALeaf(String),

    #[error("empty arborescence has no {0}")]
    EmptyTree(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("{what} exceeds cap: {found} > {limit}")]
    CapExceeded {
        what: &'static str,
        limit: usize,
        found: usize,
    },

    #[error("hypothesis unmet for {result}: {detail}")]
    HypothesisUnmet {
        result: &'static str,
        detail: String,
    },

    #[error("chain is not ergodic: {0}")]
    NonErgodic(String),

    #[error("monoid is not R-trivial: {0}")]
    NotRTrivial(String),

    #[error("element is not idempotent")]
    NotIdempotent,

    #[error("{0} is not an upset of the vertex poset")]
    NotAnUpset(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, SandpileError>;
