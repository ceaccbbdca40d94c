use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum SeaError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("shape mismatch in {context}: {detail}")]
    ShapeMismatch { context: &'static str, detail: String },

    #[error("node {node} has zero degree; remove or regularize isolated nodes before normalizing")]
    ZeroDegreeNode { node: usize },

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("dense oracle limited to n <= {limit}, got n = {n}")]
    OracleScaleExceeded { n: usize, limit: usize },

    #[error("requested {requested} eigenpairs but only {available} are available on the deflated complement")]
    SubspaceTooLarge { requested: usize, available: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid deflation basis: {0}")]
    InvalidDeflation(String),

    #[error("invalid k = {k} for {n} rows (need 1 <= k < n)")]
    InvalidK { k: usize, n: usize },

    #[error("k = {k} exceeds distinct rows minus one ({distinct} distinct rows); neighbor ranking is meaningless")]
    DegenerateFeatures { k: usize, distinct: usize },

    #[error("invalid feature matrix: {0}")]
    InvalidFeatures(String),

    #[error("node {node} out of range for graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("edge set is empty")]
    EmptyEdgeSet,

    #[error("invalid fraction {0}; expected 0 < fraction <= 1")]
    InvalidFraction(f64),

    #[error("loss became non-finite at epoch {epoch} (loss = {loss})")]
    NonFiniteLoss { epoch: usize, loss: f64 },

    #[error("evaluation mask selects no nodes")]
    EmptyMask,

    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow { path: PathBuf, line: usize, reason: String },

    #[error("class {class} has {available} nodes, need at least {needed}")]
    ClassTooSmall { class: usize, available: usize, needed: usize },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("attack changed the graph topology: {0}")]
    TopologyViolation(String),

    #[error("reports are not comparable: {0}")]
    ConfigMismatch(String),

    #[error("missing runs: {0}")]
    MissingRuns(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("dataset cache: {0}")]
    Cache(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SeaError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SeaError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, SeaError>;
