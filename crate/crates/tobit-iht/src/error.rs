//! Crate-wide error type and result alias.

use thiserror::Error;

/// Errors produced by dataset construction, solvers, and the evaluation
/// harness. Variants map onto the CLI exit-code groups: configuration /
/// argument problems, data problems, and solver divergence.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// A caller-supplied argument violates a precondition (dimension
    /// mismatch, non-positive step size, out-of-range index, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input data violates the dataset contract (non-finite entries,
    /// responses below the censoring threshold, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A serialized dataset or config does not match the documented schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// Every row is censored: the scale parameter has no information and
    /// the likelihood is unbounded in gamma.
    #[error("gamma is unidentifiable: the dataset has no uncensored rows")]
    GammaUnidentifiable,

    /// The objective became non-finite during a local fit.
    #[error("divergence: objective became non-finite at iteration {iteration}")]
    Divergence { iteration: usize },

    /// The objective became non-finite during a distributed fit.
    #[error("divergence: objective became non-finite at round {round}, inner iteration {iteration}")]
    DistDivergence { round: usize, iteration: usize },

    /// Shards disagree on dimensions or machine ids collide.
    #[error("distributed protocol error: {0}")]
    Protocol(String),

    /// A gradient aggregation round is missing a machine's contribution.
    #[error("incomplete round: no gradient from machine {machine_id}")]
    IncompleteRound { machine_id: usize },

    /// A cross-validation fold has no uncensored training rows.
    #[error("fold {fold} is degenerate: its training split has no uncensored rows")]
    FoldDegenerate { fold: usize },

    /// Per-iteration iterates were not retained by the fit.
    #[error("diagnostics unavailable: fit was run without trace_thetas")]
    DiagnosticsUnavailable,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
