use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::value::ColumnKind;
use crate::sphere::{DEFAULT_INDEX_DEPTH, DEFAULT_MAX_DEPTH};

static UCD_FILE: &str = include_str!("../../data/ucd.txt");

fn ucd_atoms() -> &'static BTreeSet<&'static str> {
    static ATOMS: OnceLock<BTreeSet<&'static str>> = OnceLock::new();
    ATOMS.get_or_init(|| {
        UCD_FILE
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

/// True if every `;`-separated atom of `ucd` is in the bundled vocabulary.
pub fn is_known_ucd(ucd: &str) -> bool {
    !ucd.is_empty() && ucd.split(';').all(|atom| ucd_atoms().contains(atom))
}

pub fn ucd_vocabulary() -> impl Iterator<Item = &'static str> {
    ucd_atoms().iter().copied()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default)]
    pub unit: String,
    pub ucd: String,
    #[serde(default)]
    pub description: String,
}

impl ColumnMeta {
    pub fn new(name: &str, kind: ColumnKind, unit: &str, ucd: &str, description: &str) -> Self {
        ColumnMeta {
            name: name.to_string(),
            kind,
            unit: unit.to_string(),
            ucd: ucd.to_string(),
            description: description.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub column: String,
    pub table: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialColumns {
    pub ra: String,
    pub dec: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub primary_key: String,
    #[serde(default, rename = "column")]
    pub columns: Vec<ColumnMeta>,
    #[serde(default, rename = "foreign_key")]
    pub foreign_keys: Vec<ForeignKey>,
    #[serde(default)]
    pub spatial: Option<SpatialColumns>,
}

impl TableDef {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&ColumnMeta> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn pk_index(&self) -> usize {
        self.column_index(&self.primary_key).expect("validated primary key")
    }

    /// Column positions of (ra, dec) for spatial tables.
    pub fn spatial_indices(&self) -> Option<(usize, usize)> {
        let s = self.spatial.as_ref()?;
        Some((self.column_index(&s.ra)?, self.column_index(&s.dec)?))
    }
}

/// One archive's tables, as read from its schema file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub archive: String,
    #[serde(default = "default_version")]
    pub version: String,
    #[serde(default = "default_depth")]
    pub index_depth: u8,
    #[serde(default, rename = "table")]
    pub tables: Vec<TableDef>,
}

fn default_version() -> String {
    "1".to_string()
}

fn default_depth() -> u8 {
    DEFAULT_INDEX_DEPTH
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchemaViolation {
    DuplicateTable(String),
    DuplicateColumn { table: String, column: String },
    UnknownUcd { table: String, column: String, ucd: String },
    MissingPrimaryKey { table: String, column: String },
    PrimaryKeyNotInteger { table: String },
    MissingColumn { table: String, column: String },
    DanglingForeignKey { table: String, column: String, target: String },
    ForeignKeyNotPrimary { table: String, column: String },
    ForeignKeyKind { table: String, column: String },
    SpatialNotReal { table: String, column: String },
    BadIdentifier(String),
    IndexDepth(u8),
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use SchemaViolation::*;
        match self {
            DuplicateTable(t) => write!(f, "duplicate table {t}"),
            DuplicateColumn { table, column } => write!(f, "duplicate column {table}.{column}"),
            UnknownUcd { table, column, ucd } => write!(f, "unknown UCD {ucd:?} on {table}.{column}"),
            MissingPrimaryKey { table, column } => {
                write!(f, "primary key {column} is not a column of {table}")
            }
            PrimaryKeyNotInteger { table } => write!(f, "primary key of {table} must be integer"),
            MissingColumn { table, column } => write!(f, "no column {column} in {table}"),
            DanglingForeignKey { table, column, target } => {
                write!(f, "dangling foreign key {table}.{column} -> {target}")
            }
            ForeignKeyNotPrimary { table, column } => {
                write!(f, "foreign key {table}.{column} must reference a primary key")
            }
            ForeignKeyKind { table, column } => {
                write!(f, "foreign key {table}.{column} must be integer")
            }
            SpatialNotReal { table, column } => {
                write!(f, "spatial column {table}.{column} must be real")
            }
            BadIdentifier(s) => write!(f, "invalid identifier {s:?}"),
            IndexDepth(d) => write!(f, "index depth {d} exceeds {DEFAULT_MAX_DEPTH}"),
        }
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Checks a set of table definitions, including cross-table references.
pub fn validate_schema(tables: &[TableDef]) -> Result<(), Vec<SchemaViolation>> {
    use SchemaViolation::*;
    let mut out = Vec::new();
    let mut by_name: BTreeMap<&str, &TableDef> = BTreeMap::new();
    for t in tables {
        if !is_identifier(&t.name) {
            out.push(BadIdentifier(t.name.clone()));
        }
        if by_name.insert(&t.name, t).is_some() {
            out.push(DuplicateTable(t.name.clone()));
        }
    }
    for t in tables {
        let table = t.name.clone();
        let mut seen = BTreeSet::new();
        for c in &t.columns {
            if !is_identifier(&c.name) {
                out.push(BadIdentifier(c.name.clone()));
            }
            if !seen.insert(c.name.as_str()) {
                out.push(DuplicateColumn { table: table.clone(), column: c.name.clone() });
            }
            if !is_known_ucd(&c.ucd) {
                out.push(UnknownUcd { table: table.clone(), column: c.name.clone(), ucd: c.ucd.clone() });
            }
        }
        match t.column(&t.primary_key) {
            None => out.push(MissingPrimaryKey { table: table.clone(), column: t.primary_key.clone() }),
            Some(c) if c.kind != ColumnKind::Integer => {
                out.push(PrimaryKeyNotInteger { table: table.clone() })
            }
            _ => {}
        }
        for fk in &t.foreign_keys {
            match t.column(&fk.column) {
                None => out.push(MissingColumn { table: table.clone(), column: fk.column.clone() }),
                Some(c) if c.kind != ColumnKind::Integer => {
                    out.push(ForeignKeyKind { table: table.clone(), column: fk.column.clone() })
                }
                _ => {}
            }
            match by_name.get(fk.table.as_str()) {
                Some(target) if target.column(&fk.target).is_some() => {
                    if target.primary_key != fk.target {
                        out.push(ForeignKeyNotPrimary { table: table.clone(), column: fk.column.clone() });
                    }
                }
                _ => out.push(DanglingForeignKey {
                    table: table.clone(),
                    column: fk.column.clone(),
                    target: format!("{}.{}", fk.table, fk.target),
                }),
            }
        }
        if let Some(s) = &t.spatial {
            for col in [&s.ra, &s.dec] {
                match t.column(col) {
                    None => out.push(MissingColumn { table: table.clone(), column: col.clone() }),
                    Some(c) if c.kind != ColumnKind::Real => {
                        out.push(SpatialNotReal { table: table.clone(), column: col.clone() })
                    }
                    _ => {}
                }
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

impl Schema {
    pub fn from_toml(text: &str) -> Result<Schema, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    pub fn validate(&self) -> Result<(), Vec<SchemaViolation>> {
        let mut out = match validate_schema(&self.tables) {
            Ok(()) => Vec::new(),
            Err(v) => v,
        };
        if !is_identifier(&self.archive) {
            out.push(SchemaViolation::BadIdentifier(self.archive.clone()));
        }
        if self.index_depth > DEFAULT_MAX_DEPTH {
            out.push(SchemaViolation::IndexDepth(self.index_depth));
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Tables ordered so that every foreign-key target precedes the tables
    /// referencing it. Assumes a validated, acyclic schema.
    pub fn load_order(&self) -> Vec<&TableDef> {
        let mut done: BTreeSet<&str> = BTreeSet::new();
        let mut order = Vec::new();
        while order.len() < self.tables.len() {
            let before = order.len();
            for t in &self.tables {
                if done.contains(t.name.as_str()) {
                    continue;
                }
                let ready = t
                    .foreign_keys
                    .iter()
                    .all(|fk| fk.table == t.name || done.contains(fk.table.as_str()));
                if ready {
                    done.insert(&t.name);
                    order.push(t);
                }
            }
            if order.len() == before {
                // Cycle: fall back to declaration order for the rest.
                order.extend(self.tables.iter().filter(|t| !done.contains(t.name.as_str())));
                break;
            }
        }
        order
    }
}

/// The bundled example spine schema: photometric objects with an optional
/// link to a spectroscopic object.
pub fn spine_schema() -> Schema {
    Schema::from_toml(SPINE_TOML).expect("bundled schema parses")
}

pub static SPINE_TOML: &str = include_str!("../../data/spine.toml");

#[cfg(test)]
mod tests {
    use super::*;

    fn col(name: &str, kind: ColumnKind, ucd: &str) -> ColumnMeta {
        ColumnMeta::new(name, kind, "", ucd, "")
    }

    fn two_tables() -> Vec<TableDef> {
        vec![
            TableDef {
                name: "a".into(),
                description: String::new(),
                primary_key: "id".into(),
                columns: vec![col("id", ColumnKind::Integer, "meta.id;meta.main"), col("b_id", ColumnKind::Integer, "meta.id")],
                foreign_keys: vec![ForeignKey { column: "b_id".into(), table: "b".into(), target: "id".into() }],
                spatial: None,
            },
            TableDef {
                name: "b".into(),
                description: String::new(),
                primary_key: "id".into(),
                columns: vec![col("id", ColumnKind::Integer, "meta.id")],
                foreign_keys: vec![],
                spatial: None,
            },
        ]
    }

    #[test]
    fn valid_fk_schema() {
        assert_eq!(validate_schema(&two_tables()), Ok(()));
    }

    #[test]
    fn dangling_fk() {
        let mut t = two_tables();
        t[0].foreign_keys[0].table = "nope".into();
        let v = validate_schema(&t).unwrap_err();
        assert!(v.iter().any(|e| e.to_string().contains("dangling foreign key")));
    }

    #[test]
    fn unknown_ucd_and_duplicate_column() {
        let mut t = two_tables();
        t[1].columns.push(col("id", ColumnKind::Integer, "made.up"));
        let v = validate_schema(&t).unwrap_err();
        assert!(v.iter().any(|e| e.to_string().contains("unknown UCD")));
        assert!(v.iter().any(|e| matches!(e, SchemaViolation::DuplicateColumn { .. })));
    }

    #[test]
    fn spatial_columns_must_be_real() {
        let mut t = two_tables();
        t[1].columns.push(col("ra", ColumnKind::Text, "pos.eq.ra"));
        t[1].spatial = Some(SpatialColumns { ra: "ra".into(), dec: "dec".into() });
        let v = validate_schema(&t).unwrap_err();
        assert!(v.contains(&SchemaViolation::SpatialNotReal { table: "b".into(), column: "ra".into() }));
        assert!(v.contains(&SchemaViolation::MissingColumn { table: "b".into(), column: "dec".into() }));
    }

    #[test]
    fn compound_ucds() {
        assert!(is_known_ucd("pos.eq.ra;meta.main"));
        assert!(!is_known_ucd("pos.eq.ra;bogus"));
        assert!(!is_known_ucd(""));
        assert!(ucd_vocabulary().count() >= 40);
    }

    #[test]
    fn spine_schema_is_valid_and_ordered() {
        let s = spine_schema();
        s.validate().unwrap();
        let order: Vec<&str> = s.load_order().iter().map(|t| t.name.as_str()).collect();
        assert_eq!(order, vec!["spec_obj", "photo_obj"]);
        let again = Schema::from_toml(&s.to_toml()).unwrap();
        assert_eq!(again, s);
    }
}
