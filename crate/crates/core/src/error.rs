use alloc::string::{String, ToString};
use thiserror::Error;

/// A record failed one of its invariants. `field` is a path such as
/// `samples[0].tokens[2].logprob`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{field}: {message}")]
pub struct ValidationError {
    pub field: String,
    pub message: String,
}

impl ValidationError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }

    /// Prefixes the field path, used when a nested record fails validation.
    pub fn within(mut self, parent: &str) -> Self {
        self.field = if self.field.is_empty() {
            parent.to_string()
        } else if self.field.starts_with('[') {
            alloc::format!("{parent}{}", self.field)
        } else {
            alloc::format!("{parent}.{}", self.field)
        };
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EntropyError {
    #[error("sequence has no tokens")]
    EmptySequence,
    #[error("sample set has no samples")]
    EmptySampleSet,
    #[error("token {index} has non-finite logprob {value}")]
    NonFiniteLogprob { index: usize, value: f64 },
    #[error("meaning cluster has no members")]
    EmptyCluster,
    #[error("sample index {index} out of range for {len} samples")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("sample index {0} appears in more than one cluster")]
    DuplicateIndex(usize),
    #[error("sample index {0} is not covered by any cluster")]
    MissingIndex(usize),
}

/// Failure reported by a [`crate::LogitProvider`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("backend timed out")]
    Timeout,
    #[error("backend returned status {0}")]
    Status(u16),
    #[error("logit vector length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite logit at index {index}")]
    NonFinite { index: usize },
    #[error("no distribution for prefix [{0}]")]
    UnknownPrefix(String),
    #[error("backend protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    #[error(transparent)]
    Config(#[from] ValidationError),
    #[error("temperature must be > 0, got {0}")]
    Temperature(f64),
    #[error("logit vector is empty")]
    EmptyLogits,
    #[error("top_p must be in (0, 1], got {0}")]
    TopP(f64),
    #[error("method {0} is not handled by this decoder")]
    WrongMethod(&'static str),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("enumeration bound exceeded: {vocab}^{max_len} > 10^6")]
    EnumerationBound { vocab: usize, max_len: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("no records to aggregate")]
    Empty,
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score {index} is not finite")]
    NonFiniteScore { index: usize },
    #[error(transparent)]
    Entropy(#[from] EntropyError),
}
