//! The archive's spine-schema store.
//!
//! A [`Schema`] declares tables with UCD-tagged columns, primary and foreign
//! keys, and optional spatial columns. The loader turns delimited text into
//! an immutable [`Edition`]; spatial tables are stored sorted by mesh cell so
//! that a cone becomes a handful of contiguous row ranges.

mod docs;
mod edition;
mod loader;
mod pyramid;
mod schema;
mod store;
pub mod synth;
mod value;

pub use docs::{generate_docs, Document};
pub use edition::{cover_depth, CatalogObject, ColumnData, Edition, SubsetOrigin, TableData, SPARSE_STRIDE};
pub use loader::{
    load_edition, LoadError, LoadInput, LoadReport, Rejection, RULE_ARITY, RULE_COORDINATE, RULE_DUPLICATE_KEY,
    RULE_INTEGRITY, RULE_MALFORMED, RULE_MISSING_KEY, RULE_TYPE,
};
pub use pyramid::{in_subset, make_pyramid, pyramid_hash, subset, PYRAMID_SEED};
pub use schema::{
    is_identifier, is_known_ucd, spine_schema, ucd_vocabulary, validate_schema, ColumnMeta, ForeignKey, Schema,
    SchemaViolation, SpatialColumns, TableDef, SPINE_TOML,
};
pub use store::CatalogStore;
pub use value::{ColumnKind, Value, ValueError};

use crate::sphere::SphereError;

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("table {0} has no spatial columns")]
    NotSpatial(String),
    #[error("no such edition {0}")]
    UnknownEdition(u64),
    #[error("no edition has been published")]
    NoEdition,
    #[error("pyramid fraction {0} must be in (0, 1] and ascending")]
    BadFraction(f64),
    #[error("corrupt edition: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Sphere(#[from] SphereError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
