use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ast::*;
use crate::catalog::{ColumnKind, ColumnMeta, SpatialColumns, TableData, Value};
use crate::sphere::{Cone, SkyCoord};

/// What a planner needs to know about one table of one archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableInfo {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub cardinality: u64,
    pub primary_key: String,
    #[serde(default)]
    pub spatial: Option<SpatialColumns>,
    pub columns: Vec<ColumnMeta>,
}

impl TableInfo {
    pub fn from_table(t: &TableData) -> TableInfo {
        let def = t.def();
        TableInfo {
            name: def.name.clone(),
            description: def.description.clone(),
            cardinality: t.len() as u64,
            primary_key: def.primary_key.clone(),
            spatial: def.spatial.clone(),
            columns: def.columns.clone(),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn pk_index(&self) -> Option<usize> {
        self.column_index(&self.primary_key)
    }

    pub fn spatial_indices(&self) -> Option<(usize, usize)> {
        let s = self.spatial.as_ref()?;
        Some((self.column_index(&s.ra)?, self.column_index(&s.dec)?))
    }
}

/// Read-only view of the archives a planner can see.
pub trait RegistryView {
    fn table_info(&self, archive: &str, table: &str) -> Result<TableInfo, PlanError>;
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("unknown archive {0}")]
    UnknownArchive(String),
    #[error("unknown table {archive}.{table}")]
    UnknownTable { archive: String, table: String },
    #[error("unknown column {0}")]
    UnknownColumn(String),
    #[error("ambiguous column {0}")]
    AmbiguousColumn(String),
    #[error("table {0} has no sky position")]
    NotSpatial(String),
    #[error("cannot compare {column} ({kind}) with {literal}")]
    TypeMismatch { column: String, kind: ColumnKind, literal: String },
    #[error("invalid cone: {0}")]
    InvalidCone(String),
    #[error("match tolerance {0} arcsec must be in (0, 3600]")]
    InvalidTolerance(f64),
    #[error("at most one CONE predicate is allowed")]
    MultipleCones,
    #[error("source {0} appears more than once")]
    DuplicateSource(String),
    #[error("output column {0} appears more than once")]
    DuplicateOutput(String),
}

/// `column op value`, evaluated against one source's rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    pub column: String,
    pub op: CompareOp,
    pub value: Value,
}

impl Filter {
    pub fn matches(&self, v: &Value) -> bool {
        self.op.eval(v, &self.value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedSource {
    pub source: SourceRef,
    pub info: TableInfo,
    /// Prefix for this source's output columns in a cross-match.
    pub label: String,
    pub filters: Vec<Filter>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanStep {
    /// Fetch the seed source, restricted to the cone when given.
    Fetch { source: usize },
    /// Join another source to the current tuples by position.
    CrossMatch { source: usize, tolerance_arcsec: f64 },
    Truncate { limit: u64 },
    Deposit { target: IntoTarget },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputValue {
    Column(usize),
    /// Separation from the seed, in arcseconds.
    Separation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputColumn {
    pub source: usize,
    pub value: OutputValue,
    pub meta: ColumnMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryPlan {
    /// Sources in declared order: FROM first, then the XMATCH list.
    pub sources: Vec<PlannedSource>,
    pub region: Option<Cone>,
    pub steps: Vec<PlanStep>,
    pub output: Vec<OutputColumn>,
    pub limit: Option<u64>,
    pub into: Option<IntoTarget>,
    pub canonical: String,
}

impl QueryPlan {
    pub fn is_crossmatch(&self) -> bool {
        self.sources.len() > 1
    }

    /// Index of the source fetched first.
    pub fn seed(&self) -> usize {
        self.steps
            .iter()
            .find_map(|s| match s {
                PlanStep::Fetch { source } => Some(*source),
                _ => None,
            })
            .unwrap_or(0)
    }

    pub fn columns(&self) -> Vec<ColumnMeta> {
        self.output.iter().map(|c| c.meta.clone()).collect()
    }
}

pub const DEFAULT_TOLERANCE_ARCSEC: f64 = 2.0;
pub const MAX_TOLERANCE_ARCSEC: f64 = 3600.0;
pub const SEPARATION_COLUMN: &str = "sep_arcsec";

fn labels(sources: &[SourceRef]) -> Vec<String> {
    let count = |f: &dyn Fn(&SourceRef) -> bool| sources.iter().filter(|s| f(s)).count();
    sources
        .iter()
        .map(|s| {
            if count(&|o| o.archive == s.archive) == 1 {
                s.archive.clone()
            } else if count(&|o| o.table == s.table) == 1 {
                s.table.clone()
            } else {
                format!("{}_{}", s.archive, s.table)
            }
        })
        .collect()
}

fn literal_fits(kind: ColumnKind, lit: &Literal) -> Option<Value> {
    match (kind, lit) {
        (ColumnKind::Integer | ColumnKind::Real, Literal::Int(_) | Literal::Real(_)) => Some(lit.to_value()),
        (ColumnKind::Text, Literal::Text(_)) => Some(lit.to_value()),
        (ColumnKind::Flag, Literal::Bool(_)) => Some(lit.to_value()),
        (ColumnKind::Flag, Literal::Int(v @ (0 | 1))) => Some(Value::Flag(*v == 1)),
        _ => None,
    }
}

struct Resolver<'a> {
    sources: &'a [SourceRef],
    infos: &'a [TableInfo],
    labels: &'a [String],
}

enum Resolved {
    Column(usize, usize),
    Separation(usize),
}

impl Resolver<'_> {
    fn candidates(&self, q: &str) -> Vec<usize> {
        (0..self.sources.len())
            .filter(|&i| self.labels[i] == q || self.sources[i].archive == q || self.sources[i].table == q)
            .collect()
    }

    fn resolve(&self, c: &ColumnRef) -> Result<Resolved, PlanError> {
        let xmatch = self.sources.len() > 1;
        let pool: Vec<usize> = match &c.qualifier {
            Some(q) => {
                let cands = self.candidates(q);
                match cands.len() {
                    0 => return Err(PlanError::UnknownColumn(c.to_string())),
                    1 => cands,
                    _ => return Err(PlanError::AmbiguousColumn(c.to_string())),
                }
            }
            None => (0..self.sources.len()).collect(),
        };
        for &i in &pool {
            if let Some(col) = self.infos[i].column_index(&c.name) {
                return Ok(Resolved::Column(i, col));
            }
        }
        if xmatch && c.name == SEPARATION_COLUMN && c.qualifier.is_some() {
            return Ok(Resolved::Separation(pool[0]));
        }
        Err(PlanError::UnknownColumn(c.to_string()))
    }
}

fn output_meta(meta: &ColumnMeta, label: Option<&str>) -> ColumnMeta {
    let mut m = meta.clone();
    if let Some(l) = label {
        m.name = format!("{l}_{}", meta.name);
    }
    m
}

fn separation_meta(label: &str) -> ColumnMeta {
    ColumnMeta::new(
        &format!("{label}_{SEPARATION_COLUMN}"),
        ColumnKind::Real,
        "arcsec",
        "pos.angDistance",
        "separation from the match seed",
    )
}

/// Resolves a parsed query against the registry.
///
/// A cross-match is seeded from the source with the fewest rows; ties keep
/// declared order. Output columns keep declared order regardless.
pub fn plan(ast: &QueryAst, registry: &dyn RegistryView) -> Result<QueryPlan, PlanError> {
    let mut sources = vec![ast.source.clone()];
    let mut tolerance = None;
    if let Some(x) = &ast.xmatch {
        if !(x.tolerance_arcsec > 0.0 && x.tolerance_arcsec <= MAX_TOLERANCE_ARCSEC) {
            return Err(PlanError::InvalidTolerance(x.tolerance_arcsec));
        }
        tolerance = Some(x.tolerance_arcsec);
        sources.extend(x.sources.iter().cloned());
    }
    let mut seen = BTreeSet::new();
    for s in &sources {
        if !seen.insert(s.clone()) {
            return Err(PlanError::DuplicateSource(s.to_string()));
        }
    }
    let infos: Vec<TableInfo> =
        sources.iter().map(|s| registry.table_info(&s.archive, &s.table)).collect::<Result<_, _>>()?;
    let labels = labels(&sources);
    let xmatch = sources.len() > 1;
    if xmatch {
        for (s, info) in sources.iter().zip(&infos) {
            if info.spatial_indices().is_none() {
                return Err(PlanError::NotSpatial(s.to_string()));
            }
        }
    }
    let resolver = Resolver { sources: &sources, infos: &infos, labels: &labels };

    let mut region = None;
    let mut filters: Vec<Vec<Filter>> = vec![Vec::new(); sources.len()];
    for p in &ast.predicates {
        match p {
            Predicate::Cone { ra, dec, radius } => {
                if region.is_some() {
                    return Err(PlanError::MultipleCones);
                }
                let center = SkyCoord::new(*ra, *dec).map_err(|e| PlanError::InvalidCone(e.to_string()))?;
                let cone = Cone::new(center, *radius).map_err(|e| PlanError::InvalidCone(e.to_string()))?;
                if infos[0].spatial_indices().is_none() {
                    return Err(PlanError::NotSpatial(sources[0].to_string()));
                }
                region = Some(cone);
            }
            Predicate::Compare { column, op, value } => {
                let Resolved::Column(src, col) = resolver.resolve(column)? else {
                    return Err(PlanError::UnknownColumn(column.to_string()));
                };
                let meta = &infos[src].columns[col];
                let v = literal_fits(meta.kind, value).ok_or_else(|| PlanError::TypeMismatch {
                    column: column.to_string(),
                    kind: meta.kind,
                    literal: value.to_string(),
                })?;
                filters[src].push(Filter { column: meta.name.clone(), op: *op, value: v });
            }
        }
    }

    let mut order: Vec<usize> = (0..sources.len()).collect();
    if xmatch {
        order.sort_by_key(|&i| infos[i].cardinality);
    }
    let seed = order[0];

    let label_for = |i: usize| if xmatch { Some(labels[i].as_str()) } else { None };
    let mut output = Vec::new();
    match &ast.select {
        Selection::Star => {
            for (i, info) in infos.iter().enumerate() {
                for (c, meta) in info.columns.iter().enumerate() {
                    output.push(OutputColumn {
                        source: i,
                        value: OutputValue::Column(c),
                        meta: output_meta(meta, label_for(i)),
                    });
                }
                if xmatch && i != seed {
                    output.push(OutputColumn {
                        source: i,
                        value: OutputValue::Separation,
                        meta: separation_meta(&labels[i]),
                    });
                }
            }
        }
        Selection::Columns(cols) => {
            for c in cols {
                output.push(match resolver.resolve(c)? {
                    Resolved::Column(i, col) => OutputColumn {
                        source: i,
                        value: OutputValue::Column(col),
                        meta: output_meta(&infos[i].columns[col], label_for(i)),
                    },
                    Resolved::Separation(i) => {
                        OutputColumn { source: i, value: OutputValue::Separation, meta: separation_meta(&labels[i]) }
                    }
                });
            }
        }
    }
    let mut names = BTreeSet::new();
    for c in &output {
        if !names.insert(c.meta.name.clone()) {
            return Err(PlanError::DuplicateOutput(c.meta.name.clone()));
        }
    }

    let mut steps = vec![PlanStep::Fetch { source: seed }];
    for &i in &order[1..] {
        steps.push(PlanStep::CrossMatch { source: i, tolerance_arcsec: tolerance.unwrap_or(DEFAULT_TOLERANCE_ARCSEC) });
    }
    if let Some(limit) = ast.limit {
        steps.push(PlanStep::Truncate { limit });
    }
    if let Some(target) = &ast.into {
        steps.push(PlanStep::Deposit { target: target.clone() });
    }

    let planned = sources
        .into_iter()
        .zip(infos)
        .zip(labels)
        .zip(filters)
        .map(|(((source, info), label), filters)| PlannedSource { source, info, label, filters })
        .collect();
    Ok(QueryPlan {
        sources: planned,
        region,
        steps,
        output,
        limit: ast.limit,
        into: ast.into.clone(),
        canonical: ast.canonical(),
    })
}
