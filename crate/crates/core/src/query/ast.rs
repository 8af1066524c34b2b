use std::fmt;

use crate::catalog::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct QueryAst {
    pub select: Selection,
    pub source: SourceRef,
    pub xmatch: Option<XMatchClause>,
    /// Conjunction of predicates.
    pub predicates: Vec<Predicate>,
    pub limit: Option<u64>,
    pub into: Option<IntoTarget>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    Star,
    Columns(Vec<ColumnRef>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColumnRef {
    pub qualifier: Option<String>,
    pub name: String,
}

impl ColumnRef {
    pub fn bare(name: &str) -> ColumnRef {
        ColumnRef { qualifier: None, name: name.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct SourceRef {
    pub archive: String,
    pub table: String,
}

impl SourceRef {
    pub fn new(archive: &str, table: &str) -> SourceRef {
        SourceRef { archive: archive.to_string(), table: table.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct XMatchClause {
    pub sources: Vec<SourceRef>,
    pub tolerance_arcsec: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    /// Degrees throughout.
    Cone { ra: f64, dec: f64, radius: f64 },
    Compare { column: ColumnRef, op: CompareOp, value: Literal },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ne => "<>",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }

    /// The operator with its operands swapped (`a < b` is `b > a`).
    pub fn flipped(self) -> CompareOp {
        match self {
            CompareOp::Lt => CompareOp::Gt,
            CompareOp::Le => CompareOp::Ge,
            CompareOp::Gt => CompareOp::Lt,
            CompareOp::Ge => CompareOp::Le,
            op => op,
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CompareOp::Eq => ord == Equal,
            CompareOp::Ne => ord != Equal,
            CompareOp::Lt => ord == Less,
            CompareOp::Le => ord != Greater,
            CompareOp::Gt => ord == Greater,
            CompareOp::Ge => ord != Less,
        }
    }

    /// `lhs op rhs`; false whenever either side is null or incomparable.
    pub fn eval(self, lhs: &Value, rhs: &Value) -> bool {
        lhs.compare(rhs).is_some_and(|o| self.holds(o))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Int(i64),
    Real(f64),
    Text(String),
    Bool(bool),
}

impl Literal {
    pub fn to_value(&self) -> Value {
        match self {
            Literal::Int(v) => Value::Int(*v),
            Literal::Real(v) => Value::Real(*v),
            Literal::Text(s) => Value::Text(s.clone()),
            Literal::Bool(b) => Value::Flag(*b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct IntoTarget {
    /// Owner of the workspace; the submitting user's own when absent.
    pub db: Option<String>,
    pub table: String,
}

impl fmt::Display for IntoTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.db {
            Some(db) => write!(f, "{db}.{}", self.table),
            None => f.write_str(&self.table),
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.qualifier {
            Some(q) => write!(f, "{q}.{}", self.name),
            None => f.write_str(&self.name),
        }
    }
}

impl fmt::Display for SourceRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.archive, self.table)
    }
}

/// Reals always print with a fractional part or exponent so they re-parse
/// as reals.
pub(crate) fn fmt_real(v: f64) -> String {
    format!("{v:?}")
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Real(v) => f.write_str(&fmt_real(*v)),
            Literal::Text(s) => write!(f, "'{}'", s.replace('\'', "''")),
            Literal::Bool(true) => f.write_str("TRUE"),
            Literal::Bool(false) => f.write_str("FALSE"),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Cone { ra, dec, radius } => {
                write!(f, "CONE({}, {}, {})", fmt_real(*ra), fmt_real(*dec), fmt_real(*radius))
            }
            Predicate::Compare { column, op, value } => write!(f, "{column} {} {value}", op.symbol()),
        }
    }
}

/// The canonical printer: the normative serialization of a query.
impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        match &self.select {
            Selection::Star => f.write_str("*")?,
            Selection::Columns(cols) => {
                for (i, c) in cols.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{c}")?;
                }
            }
        }
        write!(f, " FROM {}", self.source)?;
        if let Some(x) = &self.xmatch {
            f.write_str(" XMATCH ")?;
            for (i, s) in x.sources.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{s}")?;
            }
            write!(f, " WITHIN {} ARCSEC", fmt_real(x.tolerance_arcsec))?;
        }
        for (i, p) in self.predicates.iter().enumerate() {
            f.write_str(if i == 0 { " WHERE " } else { " AND " })?;
            write!(f, "{p}")?;
        }
        if let Some(n) = self.limit {
            write!(f, " LIMIT {n}")?;
        }
        if let Some(t) = &self.into {
            write!(f, " INTO {t}")?;
        }
        Ok(())
    }
}

impl QueryAst {
    pub fn canonical(&self) -> String {
        self.to_string()
    }

    pub fn cone(&self) -> Option<(f64, f64, f64)> {
        self.predicates.iter().find_map(|p| match p {
            Predicate::Cone { ra, dec, radius } => Some((*ra, *dec, *radius)),
            _ => None,
        })
    }
}
