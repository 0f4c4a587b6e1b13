//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by graph/signal ingestion, model evaluation, and the
/// training and evaluation harnesses.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("empty graph: {0} contains no triples")]
    EmptyGraph(String),

    #[error("feature dimension mismatch at {path}:{line}: expected {expected} values, found {found}")]
    FeatureDimension {
        path: String,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("empty input for {0}")]
    EmptyInput(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("unknown signal: {0}")]
    UnknownSignal(String),

    #[error("signal {name} has no positive teleport mass")]
    DegenerateTeleport { name: String },

    #[error("cluster has no usable signals")]
    EmptyCluster,

    #[error("fold error: domain of size {domain} cannot be split into {folds} folds")]
    Fold { domain: usize, folds: usize },

    #[error("split error: {0}")]
    Split(String),

    #[error("task error: {0}")]
    Task(String),

    #[error("priority policy error: {0}")]
    Policy(String),
}

pub type Result<T> = std::result::Result<T, Error>;
