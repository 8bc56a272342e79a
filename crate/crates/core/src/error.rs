use thiserror::Error;

use crate::backend::AgentRole;

/// Errors raised while loading or validating corpora and queries.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate report id {report_id:?} in domain {domain_id:?}")]
    DuplicateReportId { domain_id: String, report_id: String },
    #[error("domain {0:?} declared more than once in the sidecar")]
    DuplicateDomain(String),
    #[error("domain {0:?} has no reports")]
    EmptyDomain(String),
    #[error("malformed embedding on {owner}: {reason}")]
    MalformedEmbedding { owner: String, reason: String },
    #[error("history score {value} for domain {domain_id:?} is outside [0, 1]")]
    HistoryOutOfRange { domain_id: String, value: f64 },
    #[error("unknown domain {0:?}")]
    UnknownDomain(String),
    #[error("query text is empty")]
    EmptyQuery,
    #[error("budget must be strictly positive (max_time_secs={max_time_secs}, max_tokens={max_tokens})")]
    InvalidBudget { max_time_secs: f64, max_tokens: u64 },
}

/// Errors from computing relevance signals.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("unknown domain {0:?}")]
    UnknownDomain(String),
    #[error("embedding dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("registry is empty")]
    EmptyRegistry,
}

/// Errors from invoking or configuring an agent backend.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("no script entry matches {role:?} request with digest {digest}")]
    NoScriptMatch { role: AgentRole, digest: String },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    TransportFailure { attempts: u32, message: String },
    #[error("{role:?} response violates its schema: {message}")]
    SchemaViolation { role: AgentRole, message: String },
    #[error("{role:?} request payload is invalid: {message}")]
    InvalidPayload { role: AgentRole, message: String },
    #[error("duplicate script entry for {role:?} ({key})")]
    DuplicateEntry { role: AgentRole, key: String },
    #[error("cannot parse script: {0}")]
    ParseError(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

/// Terminal failures of a query run. Each maps to one CLI exit code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("no domain was assessed as HIGH or MODERATE")]
    NoRelevantDomain,
    #[error("synthesis failed: {0}")]
    SynthesisFailed(String),
    #[error("budget exhausted before a seed answer existed ({0})")]
    BudgetExhaustedBeforeSeed(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl RunError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Corpus(_) | RunError::Signal(_) | RunError::Config(_) => 2,
            RunError::NoRelevantDomain => 3,
            RunError::SynthesisFailed(_) => 4,
            RunError::BudgetExhaustedBeforeSeed(_) => 5,
        }
    }
}
