use std::path::PathBuf;

use thiserror::Error;

/// A parameter outside its documented domain, named by field.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SvmError {
    #[error("all training labels belong to one class")]
    SingleClass,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),
    #[error("solver did not converge within {0} iterations")]
    IterationLimit(usize),
    #[error("empty training set")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantizerError {
    #[error("need at least {needed} calibration rounds, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("calibration samples produce a single label")]
    DegenerateLabels,
    #[error("guard band discards every calibration round")]
    EmptyRetention,
    #[error("round {0} missing from samples")]
    MissingRound(u64),
    #[error("bit materials cover different rounds")]
    RoundMismatch,
    #[error("guard band must be finite and non-negative")]
    InvalidGuard,
    #[error(transparent)]
    Svm(#[from] SvmError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("need at least 64 bits of material, got {0}")]
    InsufficientEntropy(usize),
    #[error("unsupported LFSR width {0}; expected 15 or 31")]
    UnsupportedWidth(u32),
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrustError {
    #[error("transmitter already terminated")]
    AlreadyTerminated,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("challenge-response table is empty")]
    ChallengeExhausted,
    #[error("session is not authenticated")]
    NotAuthenticated,
    #[error("device {0} is not enrolled")]
    NotEnrolled(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no sessions in the {0} population")]
    EmptyPopulation(&'static str),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Parse(String),
    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
}

#[derive(Debug, Error)]
#[error("cannot write {path}: {source}")]
pub struct ReportError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("enrollment of {device} failed: {source}")]
    Enrollment {
        device: String,
        #[source]
        source: SvmError,
    },
    #[error(transparent)]
    Report(#[from] ReportError),
}
