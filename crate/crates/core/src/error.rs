use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: negative timestamp {time}")]
    NegativeTime { line: usize, time: f64 },
    #[error("line {line}: expected {expected} feature columns, found {found}")]
    FeatureArity { line: usize, expected: usize, found: usize },
    #[error("empty event stream")]
    EmptyStream,
    #[error("invalid split fractions: {0}")]
    InvalidSplit(String),
    #[error("stream already carries {0}-dimensional edge features")]
    FeaturesPresent(usize),
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("loss must be a scalar, got shape {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("empty community")]
    EmptyCommunity,
    #[error("community of {size} nodes needs {pairs} pair logits, budget is {budget}")]
    PairBudget { size: usize, pairs: usize, budget: usize },
    #[error("node {node} is not a member of the community")]
    NotInCommunity { node: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unstable Hawkes process: alpha {alpha} >= beta {beta}")]
    UnstableHawkes { alpha: f64, beta: f64 },
    #[error("parameter container: {0}")]
    Container(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
