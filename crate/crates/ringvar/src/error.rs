use thiserror::Error;

/// Errors raised by tree construction and the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("capacity exceeded: {what} requires {requested}, limit is {limit}")]
    Capacity {
        what: &'static str,
        requested: usize,
        limit: usize,
    },
    #[error("leaf weights sum to {sum}, expected 1")]
    WeightSum { sum: f64 },
    #[error("child overlap: atom {atom} is claimed by more than one split")]
    ChildOverlap { atom: u64 },
    #[error("binary-mode violation: atom {atom} is split into {count} children")]
    BinaryMode { atom: u64, count: usize },
    #[error("arity violation: atom {atom} has {count} children, allowed 2..={nu}")]
    Arity { atom: u64, count: usize, nu: usize },
    #[error("invalid filtration: {0}")]
    InvalidTree(String),
    #[error("local space is degenerate on atom {atom}")]
    Degenerate { atom: u64 },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("unsupported combination: {0}")]
    Unsupported(String),
    #[error("function is not of the required form: {0}")]
    Form(String),
    #[error("superadditivity fails for the pair {first} / {second}")]
    Superadditivity { first: String, second: String },
    #[error("threshold {eps} is below the set function on leaf atom {atom}")]
    LeafAboveThreshold { eps: f64, atom: u64 },
    #[error("near-best constant {requested} is below the certified {certified}")]
    NearBest { requested: f64, certified: f64 },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn is_capacity(&self) -> bool {
        matches!(self, Error::Capacity { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::InvalidParam(msg.into())
}
