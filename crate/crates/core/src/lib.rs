//! Relevance-guided retrieval over a mesh of domain knowledge graphs.

pub mod backend;
pub mod baselines;
pub mod clock;
pub mod compare;
pub mod config;
pub mod dispatch;
pub mod embed;
pub mod error;
pub mod ledger;
pub mod model;
pub mod pipeline;
pub mod refinement;
pub mod relevance;
pub mod report;
pub mod seeding;

pub use config::{execute, RunConfig};
pub use error::{BackendError, CorpusError, RunError, SignalError};
pub use model::{Budget, CommunityReport, DomainId, DomainProfile, DomainRegistry, Query, UnitVector};
pub use pipeline::{RunMode, RunOutcome};
pub use report::RunReport;
