use std::path::PathBuf;

/// Errors produced by the MLBN toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid tropical value: {0}")]
    InvalidValue(f64),

    #[error("positive-weight cycle through vertex {vertex}")]
    PositiveCycle { vertex: usize },

    #[error("vertex {vertex} out of range for a graph with {n} vertices")]
    VertexOutOfRange { vertex: usize, n: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("pair ({0}, {0}) is not a pair of distinct vertices")]
    SamePair(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("samples carry no provenance channel; regenerate them with the simulator")]
    MissingProvenance,

    #[error("sample set does not match graph (hash {expected} vs {found})")]
    GraphMismatch { expected: String, found: String },

    #[error("empty sample set")]
    EmptySamples,

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },

    #[error("every mixture component has weight below the floor {floor}; use the hyperplane (QP) estimator instead")]
    NoComponentAboveFloor { floor: f64 },

    #[error("the mixture estimator is not identified without noise (sigma = 0 gives Dirac atoms)")]
    DegenerateNoise,

    #[error("K2 must be positive: with K2 = 0 the boundary runs off to +inf and every slack vanishes")]
    UnboundedTuning,

    #[error("quadratic program is infeasible (constraint {constraint})")]
    Infeasible { constraint: usize },

    #[error("quadratic program did not converge after {iterations} active-set iterations")]
    NotConverged { iterations: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("cancelled")]
    Cancelled,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
