use thiserror::Error;

/// Errors raised by inference, policies, simulation and training.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),

    #[error("unknown variable {0}")]
    UnknownVariable(String),

    #[error("value {value} out of range for variable {variable} (domain size {domain_size})")]
    ValueOutOfRange {
        variable: String,
        value: usize,
        domain_size: usize,
    },

    #[error("variable {0} appears more than once in the evidence")]
    DuplicateEvidence(String),

    #[error("query target {0} also appears in the evidence")]
    TargetInEvidence(String),

    /// The conditioning event has probability zero. Kept distinct from
    /// invalid input so callers can tell a malformed query from an
    /// impossible one.
    #[error("evidence has probability zero")]
    ZeroProbabilityEvidence,

    #[error("enumeration needs {required} assignments, cap is {cap}")]
    Capacity { required: u128, cap: u128 },

    #[error("invalid process: {0}")]
    InvalidProcess(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid history: {0}")]
    InvalidHistory(String),

    #[error("process lacks a bandit-style round structure: {0}")]
    NotRoundStructured(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
