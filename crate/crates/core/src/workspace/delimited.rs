use crate::catalog::{ColumnKind, ColumnMeta, Value};
use crate::query::TableResult;

use super::WorkspaceError;

/// Reads an uploaded table: comma-separated with a header row. A header
/// cell may pin its kind as `name:kind`; otherwise the narrowest kind
/// (integer, real, flag, text) that reads every non-empty cell is used.
/// Empty cells are null.
pub fn parse_delimited(text: &str) -> Result<TableResult, WorkspaceError> {
    let bad = |m: String| WorkspaceError::BadUpload(m);
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.is_empty() || header.iter().all(str::is_empty) {
        return Err(bad("missing header row".into()));
    }
    let mut names = Vec::new();
    let mut pinned = Vec::new();
    for cell in header.iter() {
        let (name, kind) = match cell.split_once(':') {
            Some((n, k)) => {
                let kind = ColumnKind::from_name(k.trim()).ok_or_else(|| bad(format!("unknown kind {k:?}")))?;
                (n.trim(), Some(kind))
            }
            None => (cell, None),
        };
        super::validate_table_name(name).map_err(|_| bad(format!("bad column name {name:?}")))?;
        if names.contains(&name.to_string()) {
            return Err(bad(format!("duplicate column {name}")));
        }
        names.push(name.to_string());
        pinned.push(kind);
    }
    let mut cells: Vec<Vec<String>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
        if rec.len() != names.len() {
            return Err(bad(format!("row {} has {} cells, expected {}", i + 1, rec.len(), names.len())));
        }
        cells.push(rec.iter().map(str::to_string).collect());
    }
    let kinds: Vec<ColumnKind> =
        (0..names.len()).map(|c| pinned[c].unwrap_or_else(|| infer(cells.iter().map(|r| r[c].as_str())))).collect();
    let mut rows = Vec::with_capacity(cells.len());
    for (i, r) in cells.iter().enumerate() {
        let mut row = Vec::with_capacity(r.len());
        for (c, text) in r.iter().enumerate() {
            let v = if text.is_empty() {
                Value::Null
            } else {
                Value::parse(kinds[c], text).map_err(|e| bad(format!("row {}, column {}: {e}", i + 1, names[c])))?
            };
            row.push(v);
        }
        rows.push(row);
    }
    let columns = names.iter().zip(&kinds).map(|(n, k)| ColumnMeta::new(n, *k, "", "", "")).collect();
    Ok(TableResult { columns, rows, truncated: false })
}

fn infer<'a>(cells: impl Iterator<Item = &'a str> + Clone) -> ColumnKind {
    let filled = cells.filter(|s| !s.is_empty());
    for kind in [ColumnKind::Integer, ColumnKind::Real, ColumnKind::Flag] {
        if filled.clone().next().is_some() && filled.clone().all(|s| Value::parse(kind, s).is_ok()) {
            return kind;
        }
    }
    ColumnKind::Text
}
