use std::fmt;

/// A structural problem found while validating a [`Network`](crate::model::Network).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuralError {
    pub layer: usize,
    pub message: String,
}

impl StructuralError {
    pub(crate) fn new(layer: usize, message: impl Into<String>) -> Self {
        Self { layer, message: message.into() }
    }
}

impl fmt::Display for StructuralError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at layer {}", self.message, self.layer)
    }
}

fn join(errors: &[StructuralError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Errors produced by the verifier.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid network: {}", join(.0))]
    InvalidNetwork(Vec<StructuralError>),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid property: {0}")]
    InvalidProperty(String),
    #[error("no finite lower bound for input {index} of maxpool layer {layer}")]
    MissingBound { layer: usize, index: usize },
    #[error("LP numerical failure after {iterations} iterations")]
    NumericalFailure { iterations: usize },
    #[error("reference LP solver handles at most {cap} variables, got {vars}")]
    TooLarge { vars: usize, cap: usize },
    #[error("network has {relus} ReLU units, enumeration cap is {cap}")]
    CapExceeded { relus: usize, cap: usize },
    #[error("unsupported format `{0}`")]
    UnsupportedFormat(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
