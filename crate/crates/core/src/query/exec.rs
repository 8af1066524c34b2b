use std::time::Duration;

use super::access::{AccessError, ArchiveAccess, FetchRequest, TableResult};
use super::ast::IntoTarget;
use super::plan::{OutputValue, PlanStep, QueryPlan};
use crate::catalog::Value;
use crate::clock::{Budget, BudgetExceeded, Clock};
use crate::federation::{anchor_tuples, extend_matches, MatchSide, MatchedTuple};

/// Per-tier resource limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecLimits {
    pub elapsed: Duration,
    pub row_cap: u64,
}

impl ExecLimits {
    pub fn unlimited() -> ExecLimits {
        ExecLimits { elapsed: Duration::MAX, row_cap: u64::MAX }
    }
}

/// Where `INTO` results land. Deposits must be all-or-nothing.
pub trait DepositTarget: Send + Sync {
    fn deposit(&self, target: &IntoTarget, result: &TableResult) -> Result<(), DepositError>;
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DepositError {
    #[error("workspace quota exceeded: {used} of {quota} bytes")]
    Quota { used: u64, quota: u64 },
    #[error("not permitted to write {0}")]
    Denied(String),
    #[error("deposit failed: {0}")]
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error(transparent)]
    Quota(#[from] BudgetExceeded),
    #[error(transparent)]
    Access(AccessError),
    #[error(transparent)]
    Deposit(#[from] DepositError),
    #[error("query has INTO but no workspace is available")]
    NoWorkspace,
}

impl From<AccessError> for ExecError {
    fn from(e: AccessError) -> ExecError {
        match e {
            AccessError::Budget(b) => ExecError::Quota(b),
            e => ExecError::Access(e),
        }
    }
}

pub struct ExecContext<'a> {
    pub access: &'a dyn ArchiveAccess,
    pub clock: &'a dyn Clock,
    pub workspace: Option<&'a dyn DepositTarget>,
}

enum State {
    Empty,
    Single(TableResult),
    Tuples { tuples: Vec<MatchedTuple>, member_of: Vec<Option<usize>> },
}

/// Runs a plan to completion. Rows are in primary-key order (of the seed
/// for a cross-match); at most `min(LIMIT, row_cap)` are returned. A deposit
/// happens only after every row has been produced.
pub fn execute(plan: &QueryPlan, limits: &ExecLimits, ctx: &ExecContext<'_>) -> Result<TableResult, ExecError> {
    let budget = Budget::new(ctx.clock, limits.elapsed);
    let applied = plan.limit.map_or(limits.row_cap, |l| l.min(limits.row_cap));
    let side = |i: usize| {
        let s = &plan.sources[i];
        MatchSide { archive: &s.source.archive, info: &s.info, filters: &s.filters }
    };
    let mut state = State::Empty;
    let mut result = None;
    for step in &plan.steps {
        match step {
            PlanStep::Fetch { source } => {
                if plan.is_crossmatch() {
                    let tuples = anchor_tuples(side(*source), plan.region.as_ref(), ctx.access, &budget)?;
                    let mut member_of = vec![None; plan.sources.len()];
                    member_of[*source] = Some(0);
                    state = State::Tuples { tuples, member_of };
                } else {
                    let s = &plan.sources[*source];
                    let req = FetchRequest {
                        table: s.info.name.clone(),
                        cone: plan.region,
                        filters: s.filters.clone(),
                        max_rows: Some(applied),
                    };
                    state = State::Single(ctx.access.fetch(&s.source.archive, &req, &budget)?);
                }
            }
            PlanStep::CrossMatch { source, tolerance_arcsec } => {
                let State::Tuples { tuples, member_of } = &mut state else {
                    unreachable!("cross-match before fetch");
                };
                extend_matches(tuples, side(*source), plan.region.as_ref(), *tolerance_arcsec, ctx.access, &budget)?;
                member_of[*source] = Some(member_of.iter().flatten().count());
            }
            PlanStep::Truncate { .. } | PlanStep::Deposit { .. } => {
                if result.is_none() {
                    result = Some(assemble(plan, std::mem::replace(&mut state, State::Empty), applied, &budget)?);
                }
                if let PlanStep::Deposit { target } = step {
                    budget.check()?;
                    let ws = ctx.workspace.ok_or(ExecError::NoWorkspace)?;
                    ws.deposit(target, result.as_ref().expect("assembled"))?;
                }
            }
        }
    }
    let result = match result {
        Some(r) => r,
        None => assemble(plan, state, applied, &budget)?,
    };
    Ok(result)
}

fn assemble(plan: &QueryPlan, state: State, applied: u64, budget: &Budget<'_>) -> Result<TableResult, ExecError> {
    let columns = plan.columns();
    let mut out = match state {
        State::Empty => TableResult::empty(columns),
        State::Single(res) => {
            let mut rows = Vec::with_capacity(res.rows.len());
            for (n, row) in res.rows.into_iter().enumerate() {
                budget.tick(n)?;
                rows.push(
                    plan.output
                        .iter()
                        .map(|c| match c.value {
                            OutputValue::Column(i) => row[i].clone(),
                            OutputValue::Separation => Value::Real(0.0),
                        })
                        .collect(),
                );
            }
            TableResult { columns, rows, truncated: res.truncated }
        }
        State::Tuples { tuples, member_of } => {
            let mut rows = Vec::with_capacity(tuples.len());
            for (n, t) in tuples.iter().enumerate() {
                budget.tick(n)?;
                rows.push(
                    plan.output
                        .iter()
                        .map(|c| {
                            let m = member_of[c.source].expect("every source matched");
                            match c.value {
                                OutputValue::Column(i) => t.members[m].row[i].clone(),
                                OutputValue::Separation => Value::Real(t.separations_arcsec[m]),
                            }
                        })
                        .collect(),
                );
            }
            TableResult { columns, rows, truncated: false }
        }
    };
    if out.rows.len() as u64 > applied {
        out.rows.truncate(applied as usize);
        out.truncated = true;
    }
    budget.check()?;
    Ok(out)
}
