use std::collections::{BTreeMap, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::edition::{Edition, TableData};
use super::schema::{Schema, SchemaViolation, TableDef};
use super::value::Value;
use crate::sphere::SkyCoord;

/// One delimited-text stream destined for `table`.
pub struct LoadInput<'a> {
    pub table: String,
    pub reader: Box<dyn Read + 'a>,
}

impl<'a> LoadInput<'a> {
    pub fn new(table: &str, reader: impl Read + 'a) -> Self {
        LoadInput { table: table.to_string(), reader: Box::new(reader) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub table: String,
    /// 1-based line in the input stream; the header is line 1.
    pub line: u64,
    pub rule: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: u64,
    pub rows_loaded: u64,
    pub rows_rejected: u64,
    pub rejections: Vec<Rejection>,
    pub edition: u64,
    pub checksum: String,
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("schema invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Schema(Vec<SchemaViolation>),
    #[error("input names unknown table {0}")]
    UnknownTable(String),
    #[error("table {0} supplied twice")]
    DuplicateInput(String),
    #[error("header of {table} does not match schema: {detail}")]
    Header { table: String, detail: String },
    #[error("unreadable input for {table}: {source}")]
    Read { table: String, source: std::io::Error },
    #[error("load aborted: {rejected} of {read} rows rejected")]
    TooManyRejected { rejected: u64, read: u64 },
    #[error(transparent)]
    Store(#[from] super::CatalogError),
}

pub const RULE_ARITY: &str = "arity";
pub const RULE_TYPE: &str = "type mismatch";
pub const RULE_MISSING_KEY: &str = "missing primary key";
pub const RULE_DUPLICATE_KEY: &str = "duplicate primary key";
pub const RULE_COORDINATE: &str = "invalid coordinate";
pub const RULE_INTEGRITY: &str = "integrity check";
pub const RULE_MALFORMED: &str = "malformed record";

struct Pending {
    line: u64,
    row: Vec<Value>,
}

/// Parses, validates and indexes all inputs into an unpublished edition.
///
/// Rows breaking a constraint are rejected and reported; the load only
/// fails outright on unreadable input, a header mismatch, or when more than
/// half of all rows are rejected.
pub fn load_edition(schema: &Schema, inputs: Vec<LoadInput<'_>>) -> Result<(Edition, LoadReport), LoadError> {
    schema.validate().map_err(LoadError::Schema)?;
    let mut by_table: BTreeMap<String, LoadInput<'_>> = BTreeMap::new();
    for input in inputs {
        if schema.table(&input.table).is_none() {
            return Err(LoadError::UnknownTable(input.table));
        }
        let name = input.table.clone();
        if by_table.insert(name.clone(), input).is_some() {
            return Err(LoadError::DuplicateInput(name));
        }
    }

    let mut report = LoadReport::default();
    let mut keys: BTreeMap<String, HashSet<i64>> = BTreeMap::new();
    let mut tables = BTreeMap::new();
    for def in schema.load_order() {
        let rows = match by_table.remove(&def.name) {
            Some(input) => read_table(def, input.reader, &mut report)?,
            None => Vec::new(),
        };
        let pk = def.pk_index();
        let own: HashSet<i64> = rows.iter().filter_map(|p| p.row[pk].as_i64()).collect();
        let mut accepted = Vec::with_capacity(rows.len());
        'rows: for p in rows {
            for fk in &def.foreign_keys {
                let col = def.column_index(&fk.column).expect("validated");
                let Some(v) = p.row[col].as_i64() else { continue };
                let targets = if fk.table == def.name { Some(&own) } else { keys.get(&fk.table) };
                if !targets.is_some_and(|k| k.contains(&v)) {
                    report.reject(def, p.line, RULE_INTEGRITY, format!("{}={v} has no {}.{}", fk.column, fk.table, fk.target));
                    continue 'rows;
                }
            }
            accepted.push(p.row);
        }
        report.rows_loaded += accepted.len() as u64;
        keys.insert(def.name.clone(), accepted.iter().filter_map(|r| r[pk].as_i64()).collect());
        tables.insert(def.name.clone(), TableData::from_rows(def.clone(), accepted, schema.index_depth));
    }
    report.rows_rejected = report.rejections.len() as u64;
    debug_assert_eq!(report.rows_read, report.rows_loaded + report.rows_rejected);
    if report.rows_rejected * 2 > report.rows_read {
        return Err(LoadError::TooManyRejected { rejected: report.rows_rejected, read: report.rows_read });
    }
    let edition = Edition::new(0, schema.clone(), tables, None);
    report.checksum = edition.checksum().to_string();
    Ok((edition, report))
}

impl LoadReport {
    fn reject(&mut self, def: &TableDef, line: u64, rule: &str, detail: String) {
        self.rejections.push(Rejection { table: def.name.clone(), line, rule: rule.to_string(), detail });
    }
}

fn read_table(def: &TableDef, reader: Box<dyn Read + '_>, report: &mut LoadReport) -> Result<Vec<Pending>, LoadError> {
    let read_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => LoadError::Read { table: def.name.clone(), source },
        other => LoadError::Header { table: def.name.clone(), detail: format!("{other:?}") },
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers().map_err(read_err)?.clone();
    if header.is_empty() {
        return Ok(Vec::new());
    }
    // Map each schema column to its position in the input.
    let mut positions = Vec::with_capacity(def.columns.len());
    for c in &def.columns {
        match header.iter().position(|h| h == c.name) {
            Some(p) => positions.push(p),
            None => {
                return Err(LoadError::Header { table: def.name.clone(), detail: format!("missing column {}", c.name) })
            }
        }
    }
    if header.len() != def.columns.len() {
        let extra: Vec<&str> = header.iter().filter(|h| def.column(h).is_none()).collect();
        return Err(LoadError::Header { table: def.name.clone(), detail: format!("unexpected columns {extra:?}") });
    }

    let pk = def.pk_index();
    let spatial = def.spatial_indices();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line_hint = rdr.position().line();
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map_or(line_hint, |p| p.line());
                match e.into_kind() {
                    csv::ErrorKind::Io(source) => return Err(LoadError::Read { table: def.name.clone(), source }),
                    other => {
                        report.rows_read += 1;
                        report.reject(def, line, RULE_MALFORMED, format!("{other:?}"));
                        continue;
                    }
                }
            }
        }
        report.rows_read += 1;
        let line = record.position().map_or(line_hint, |p| p.line());
        if record.len() != def.columns.len() {
            report.reject(def, line, RULE_ARITY, format!("{} fields, expected {}", record.len(), def.columns.len()));
            continue;
        }
        let mut row = Vec::with_capacity(def.columns.len());
        let mut bad = None;
        for (c, p) in def.columns.iter().zip(&positions) {
            match Value::parse(c.kind, &record[*p]) {
                Ok(v) => row.push(v),
                Err(e) => {
                    bad = Some(format!("{}: {e}", c.name));
                    break;
                }
            }
        }
        if let Some(detail) = bad {
            report.reject(def, line, RULE_TYPE, detail);
            continue;
        }
        let Some(key) = row[pk].as_i64() else {
            report.reject(def, line, RULE_MISSING_KEY, def.primary_key.clone());
            continue;
        };
        if let Some((ra, dec)) = spatial {
            let ok = match (row[ra].as_f64(), row[dec].as_f64()) {
                (Some(a), Some(d)) => SkyCoord::new(a, d).is_ok(),
                _ => false,
            };
            if !ok {
                report.reject(def, line, RULE_COORDINATE, format!("({}, {})", row[ra], row[dec]));
                continue;
            }
            // Store the normalized right ascension so exports reload identically.
            if let (Some(a), Some(d)) = (row[ra].as_f64(), row[dec].as_f64()) {
                row[ra] = Value::Real(SkyCoord::new(a, d).unwrap().ra());
            }
        }
        if !seen.insert(key) {
            report.reject(def, line, RULE_DUPLICATE_KEY, format!("{}={key}", def.primary_key));
            continue;
        }
        out.push(Pending { line, row });
    }
    Ok(out)
}
