//! The declarative query language: parser, canonical printer, planner and
//! executor.
//!
//! ```text
//! SELECT cols FROM archive.table
//!     [XMATCH archive.table, ... WITHIN n ARCSEC]
//!     [WHERE pred AND ...] [LIMIT n] [INTO [db.]table]
//! ```
//!
//! A predicate is `CONE(ra, dec, radius)` in degrees or `column op literal`
//! with `op` one of `= <> < <= > >=`.

mod access;
mod ast;
mod exec;
mod parser;
mod plan;

pub use access::{fetch_local, AccessError, ArchiveAccess, FetchRequest, LocalArchives, TableResult};
pub use ast::{ColumnRef, CompareOp, IntoTarget, Literal, Predicate, QueryAst, Selection, SourceRef, XMatchClause};
pub use exec::{execute, DepositError, DepositTarget, ExecContext, ExecError, ExecLimits};
pub use parser::{parse, ParseError};
pub use plan::{
    plan, Filter, OutputColumn, OutputValue, PlanError, PlanStep, PlannedSource, QueryPlan, RegistryView, TableInfo,
    DEFAULT_TOLERANCE_ARCSEC, MAX_TOLERANCE_ARCSEC, SEPARATION_COLUMN,
};
