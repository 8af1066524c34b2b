//! Personal databases and the batch job scheduler.

mod delimited;
mod jobs;
mod mydb;
mod scheduler;

pub use delimited::parse_delimited;
pub use jobs::{IllegalTransition, JobQuota, JobRecord, JobState, MAX_DOUBLINGS};
pub use mydb::{
    validate_table_name, validate_user, Access, DbInfo, MyDbStore, PersonalDb, TableSummary, UserWorkspace,
    DEFAULT_QUOTA_BYTES,
};
pub use scheduler::{JobBook, JobOutcome, JobRunner, QueryRunner, RunOutput, Scheduler, SchedulerConfig};

use crate::archive_node::{self as codes, ServiceError};
use crate::query::ParseError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorkspaceError {
    #[error("a workspace for {0} already exists")]
    AlreadyExists(String),
    #[error("no workspace for {0}")]
    NoSuchDb(String),
    #[error("no table {table} in {db}'s workspace")]
    NoSuchTable { db: String, table: String },
    #[error("table {table} already exists in {db}'s workspace")]
    DuplicateTable { db: String, table: String },
    #[error("{user} has no {need} access to {db}'s workspace")]
    Denied { user: String, db: String, need: Access },
    #[error("only the owner may grant access to {db}'s workspace, not {user}")]
    NotOwner { user: String, db: String },
    #[error("workspace quota exceeded for {db}: {used} bytes used, {needed} more requested, quota {quota}")]
    Quota { db: String, used: u64, needed: u64, quota: u64 },
    #[error("invalid name {0:?}")]
    BadName(String),
    #[error("bad upload: {0}")]
    BadUpload(String),
    #[error(transparent)]
    Syntax(#[from] ParseError),
    #[error("unknown job {0}")]
    UnknownJob(u64),
    #[error("job {id}: illegal transition {from} -> {to}")]
    IllegalTransition { id: u64, from: JobState, to: JobState },
    #[error("job {id} is {state}; only quota_exceeded jobs can be rerun")]
    NotQuotaExceeded { id: u64, state: JobState },
    #[error("doubling limit reached for job {id} (max {max} doublings)")]
    DoublingLimit { id: u64, max: u32 },
    #[error("job {id} has no result: {reason}")]
    NoResult { id: u64, reason: String },
    #[error("job journal line {line} is corrupt: {detail}")]
    Corrupt { line: usize, detail: String },
    #[error("workspace storage: {0}")]
    Io(String),
}

impl From<WorkspaceError> for ServiceError {
    fn from(e: WorkspaceError) -> ServiceError {
        use WorkspaceError::*;
        let code = match &e {
            NoSuchDb(_) | NoSuchTable { .. } | UnknownJob(_) | NoResult { .. } => codes::NOT_FOUND,
            AlreadyExists(_) | DuplicateTable { .. } | IllegalTransition { .. } | NotQuotaExceeded { .. } | DoublingLimit { .. } => {
                codes::CONFLICT
            }
            Denied { .. } | NotOwner { .. } => codes::DENIED,
            Quota { .. } => codes::QUOTA,
            BadName(_) | BadUpload(_) => codes::BAD_REQUEST,
            Syntax(_) => codes::SYNTAX,
            Corrupt { .. } | Io(_) => codes::UNAVAILABLE,
        };
        ServiceError::new(code, e.to_string())
    }
}
