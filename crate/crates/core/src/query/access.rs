use std::collections::BTreeMap;
use std::sync::Arc;

use super::ast::fmt_real;
use super::plan::{Filter, PlanError, RegistryView, TableInfo};
use crate::catalog::{ColumnMeta, Edition, Value};
use crate::clock::{Budget, BudgetExceeded};
use crate::sphere::Cone;

/// Rows plus column metadata, as returned by services and queries.
#[derive(Debug, Clone, PartialEq)]
pub struct TableResult {
    pub columns: Vec<ColumnMeta>,
    pub rows: Vec<Vec<Value>>,
    /// Rows were left out because a limit or row cap was reached.
    pub truncated: bool,
}

impl TableResult {
    pub fn empty(columns: Vec<ColumnMeta>) -> TableResult {
        TableResult { columns, rows: Vec::new(), truncated: false }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Comma-separated text with a header row of column names. Nulls are
    /// empty cells.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|c| c.name.as_str())).expect("write to memory");
        for r in &self.rows {
            w.write_record(r.iter().map(Value::render)).expect("write to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 cells")
    }

    /// Size of the rows as delimited text, the unit workspace quotas count.
    pub fn text_bytes(&self) -> u64 {
        let header: usize = self.columns.iter().map(|c| c.name.len() + 1).sum();
        let body: usize = self.rows.iter().map(|r| r.iter().map(|v| v.encoded_len() + 1).sum::<usize>()).sum();
        (header + body) as u64
    }
}

/// One table read from one archive.
#[derive(Debug, Clone, PartialEq)]
pub struct FetchRequest {
    pub table: String,
    pub cone: Option<Cone>,
    pub filters: Vec<Filter>,
    /// Return at most this many rows, flagging the result truncated if more
    /// matched.
    pub max_rows: Option<u64>,
}

impl FetchRequest {
    pub fn table(table: &str) -> FetchRequest {
        FetchRequest { table: table.to_string(), cone: None, filters: Vec::new(), max_rows: None }
    }

    /// The same request as query text, for archives reached over the wire.
    /// Its result is the table's columns in schema order.
    pub fn to_query(&self, archive: &str) -> String {
        let mut q = format!("SELECT * FROM {archive}.{}", self.table);
        let mut preds = Vec::new();
        if let Some(c) = &self.cone {
            preds.push(format!(
                "CONE({}, {}, {})",
                fmt_real(c.center().ra()),
                fmt_real(c.center().dec()),
                fmt_real(c.radius())
            ));
        }
        for f in &self.filters {
            let lit = match &f.value {
                Value::Int(v) => v.to_string(),
                Value::Real(v) => fmt_real(*v),
                Value::Text(t) => format!("'{}'", t.replace('\'', "''")),
                Value::Flag(b) => if *b { "TRUE" } else { "FALSE" }.to_string(),
                Value::Null => "NULL".to_string(),
            };
            preds.push(format!("{} {} {lit}", f.column, f.op.symbol()));
        }
        if !preds.is_empty() {
            q.push_str(" WHERE ");
            q.push_str(&preds.join(" AND "));
        }
        if let Some(n) = self.max_rows {
            q.push_str(&format!(" LIMIT {}", n.max(1)));
        }
        q
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AccessError {
    #[error("unknown archive {0}")]
    UnknownArchive(String),
    #[error("unknown table {archive}.{table}")]
    UnknownTable { archive: String, table: String },
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("table {0} has no sky position")]
    NotSpatial(String),
    #[error("archive {archive} unreachable: {detail}")]
    Unreachable { archive: String, detail: String },
    #[error("archive {archive} answered {code}: {message}")]
    Remote { archive: String, code: String, message: String },
    #[error(transparent)]
    Budget(#[from] BudgetExceeded),
}

/// Access to archive tables, local or remote.
pub trait ArchiveAccess: Send + Sync {
    /// Rows come back sorted by primary key.
    fn fetch(&self, archive: &str, req: &FetchRequest, budget: &Budget<'_>) -> Result<TableResult, AccessError>;
}

/// Evaluates a fetch against an edition held in memory.
pub fn fetch_local(
    archive: &str,
    edition: &Edition,
    req: &FetchRequest,
    budget: &Budget<'_>,
) -> Result<TableResult, AccessError> {
    let t = edition
        .table(&req.table)
        .map_err(|_| AccessError::UnknownTable { archive: archive.to_string(), table: req.table.clone() })?;
    let filters: Vec<(usize, &Filter)> = req
        .filters
        .iter()
        .map(|f| {
            t.def().column_index(&f.column).map(|i| (i, f)).ok_or_else(|| AccessError::UnknownColumn(f.column.clone()))
        })
        .collect::<Result<_, _>>()?;
    let cone_rows;
    let candidates: &[u32] = match &req.cone {
        Some(cone) => {
            cone_rows = t.cone_rows(cone).map_err(|_| AccessError::NotSpatial(req.table.clone()))?;
            &cone_rows
        }
        None => t.pk_order(),
    };
    let cap = req.max_rows.unwrap_or(u64::MAX);
    let mut rows = Vec::new();
    let mut truncated = false;
    for (n, &row) in candidates.iter().enumerate() {
        budget.tick(n)?;
        let row = row as usize;
        if !filters.iter().all(|(c, f)| f.matches(&t.value(row, *c))) {
            continue;
        }
        if rows.len() as u64 >= cap {
            truncated = true;
            break;
        }
        rows.push(t.row(row));
    }
    budget.check()?;
    Ok(TableResult { columns: t.def().columns.clone(), rows, truncated })
}

/// Named editions served in-process.
#[derive(Debug, Clone, Default)]
pub struct LocalArchives {
    editions: BTreeMap<String, Arc<Edition>>,
}

impl LocalArchives {
    pub fn new() -> LocalArchives {
        LocalArchives::default()
    }

    pub fn insert(&mut self, name: &str, edition: Arc<Edition>) {
        self.editions.insert(name.to_string(), edition);
    }

    pub fn with(mut self, name: &str, edition: Edition) -> LocalArchives {
        self.insert(name, Arc::new(edition));
        self
    }

    pub fn get(&self, name: &str) -> Option<&Arc<Edition>> {
        self.editions.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.editions.keys().map(String::as_str)
    }
}

impl ArchiveAccess for LocalArchives {
    fn fetch(&self, archive: &str, req: &FetchRequest, budget: &Budget<'_>) -> Result<TableResult, AccessError> {
        let ed = self.get(archive).ok_or_else(|| AccessError::UnknownArchive(archive.to_string()))?;
        fetch_local(archive, ed, req, budget)
    }
}

impl RegistryView for LocalArchives {
    fn table_info(&self, archive: &str, table: &str) -> Result<TableInfo, PlanError> {
        let ed = self.get(archive).ok_or_else(|| PlanError::UnknownArchive(archive.to_string()))?;
        let t = ed
            .table(table)
            .map_err(|_| PlanError::UnknownTable { archive: archive.to_string(), table: table.to_string() })?;
        Ok(TableInfo::from_table(t))
    }
}
