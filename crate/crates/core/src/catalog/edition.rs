use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::schema::{Schema, TableDef};
use super::value::{ColumnKind, Value};
use super::CatalogError;
use crate::sphere::{self, Cone, SkyCoord, TrixelId};

const COLUMN_MAGIC: &[u8; 4] = b"SKYC";
const TRIXEL_MAGIC: &[u8; 4] = b"SKYT";
const INDEX_MAGIC: &[u8; 4] = b"SKYI";
const FORMAT_VERSION: u8 = 1;
/// One sparse-index entry per this many rows.
pub const SPARSE_STRIDE: usize = 256;

/// Column values in row order.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Integer(Vec<Option<i64>>),
    Real(Vec<Option<f64>>),
    Text(Vec<Option<String>>),
    Flag(Vec<Option<bool>>),
}

impl ColumnData {
    pub fn new(kind: ColumnKind) -> ColumnData {
        match kind {
            ColumnKind::Integer => ColumnData::Integer(Vec::new()),
            ColumnKind::Real => ColumnData::Real(Vec::new()),
            ColumnKind::Text => ColumnData::Text(Vec::new()),
            ColumnKind::Flag => ColumnData::Flag(Vec::new()),
        }
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            ColumnData::Integer(_) => ColumnKind::Integer,
            ColumnData::Real(_) => ColumnKind::Real,
            ColumnData::Text(_) => ColumnKind::Text,
            ColumnData::Flag(_) => ColumnKind::Flag,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnData::Integer(v) => v.len(),
            ColumnData::Real(v) => v.len(),
            ColumnData::Text(v) => v.len(),
            ColumnData::Flag(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends a value already checked against the column kind.
    pub fn push(&mut self, v: Value) {
        match (self, v) {
            (ColumnData::Integer(c), Value::Int(x)) => c.push(Some(x)),
            (ColumnData::Real(c), Value::Real(x)) => c.push(Some(x)),
            (ColumnData::Text(c), Value::Text(x)) => c.push(Some(x)),
            (ColumnData::Flag(c), Value::Flag(x)) => c.push(Some(x)),
            (ColumnData::Integer(c), Value::Null) => c.push(None),
            (ColumnData::Real(c), Value::Null) => c.push(None),
            (ColumnData::Text(c), Value::Null) => c.push(None),
            (ColumnData::Flag(c), Value::Null) => c.push(None),
            (c, v) => panic!("value {v:?} does not fit {} column", c.kind()),
        }
    }

    pub fn get(&self, row: usize) -> Value {
        match self {
            ColumnData::Integer(c) => c[row].map_or(Value::Null, Value::Int),
            ColumnData::Real(c) => c[row].map_or(Value::Null, Value::Real),
            ColumnData::Text(c) => c[row].clone().map_or(Value::Null, Value::Text),
            ColumnData::Flag(c) => c[row].map_or(Value::Null, Value::Flag),
        }
    }

    pub fn real(&self, row: usize) -> Option<f64> {
        match self {
            ColumnData::Real(c) => c[row],
            ColumnData::Integer(c) => c[row].map(|v| v as f64),
            _ => None,
        }
    }

    fn select(&self, rows: &[u32]) -> ColumnData {
        fn pick<T: Clone>(v: &[T], rows: &[u32]) -> Vec<T> {
            rows.iter().map(|r| v[*r as usize].clone()).collect()
        }
        match self {
            ColumnData::Integer(c) => ColumnData::Integer(pick(c, rows)),
            ColumnData::Real(c) => ColumnData::Real(pick(c, rows)),
            ColumnData::Text(c) => ColumnData::Text(pick(c, rows)),
            ColumnData::Flag(c) => ColumnData::Flag(pick(c, rows)),
        }
    }

    fn encode(&self) -> Vec<u8> {
        let n = self.len();
        let mut out = Vec::with_capacity(16 + n * 9);
        out.extend_from_slice(COLUMN_MAGIC);
        out.push(FORMAT_VERSION);
        out.push(match self.kind() {
            ColumnKind::Integer => 0,
            ColumnKind::Real => 1,
            ColumnKind::Text => 2,
            ColumnKind::Flag => 3,
        });
        out.extend_from_slice(&(n as u64).to_le_bytes());
        let mut nulls = vec![0u8; n.div_ceil(8)];
        let mut set_null = |i: usize| nulls[i / 8] |= 1 << (i % 8);
        let mut body = Vec::new();
        match self {
            ColumnData::Integer(c) => {
                for (i, v) in c.iter().enumerate() {
                    if v.is_none() {
                        set_null(i);
                    }
                    body.extend_from_slice(&v.unwrap_or(0).to_le_bytes());
                }
            }
            ColumnData::Real(c) => {
                for (i, v) in c.iter().enumerate() {
                    if v.is_none() {
                        set_null(i);
                    }
                    body.extend_from_slice(&v.unwrap_or(0.0).to_bits().to_le_bytes());
                }
            }
            ColumnData::Text(c) => {
                for (i, v) in c.iter().enumerate() {
                    let s = v.as_deref().unwrap_or_else(|| {
                        set_null(i);
                        ""
                    });
                    body.extend_from_slice(&(s.len() as u32).to_le_bytes());
                    body.extend_from_slice(s.as_bytes());
                }
            }
            ColumnData::Flag(c) => {
                for (i, v) in c.iter().enumerate() {
                    if v.is_none() {
                        set_null(i);
                    }
                    body.push(v.unwrap_or(false) as u8);
                }
            }
        }
        out.extend_from_slice(&nulls);
        out.extend_from_slice(&body);
        out
    }

    fn decode(bytes: &[u8]) -> Result<ColumnData, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != COLUMN_MAGIC || r.u8()? != FORMAT_VERSION {
            return Err("bad column header".into());
        }
        let kind = r.u8()?;
        let n = r.u64()? as usize;
        let nulls = r.take(n.div_ceil(8))?.to_vec();
        let is_null = |i: usize| nulls[i / 8] & (1 << (i % 8)) != 0;
        Ok(match kind {
            0 => ColumnData::Integer(
                (0..n)
                    .map(|i| {
                        let v = r.u64()? as i64;
                        Ok((!is_null(i)).then_some(v))
                    })
                    .collect::<Result<_, String>>()?,
            ),
            1 => ColumnData::Real(
                (0..n)
                    .map(|i| {
                        let v = f64::from_bits(r.u64()?);
                        Ok((!is_null(i)).then_some(v))
                    })
                    .collect::<Result<_, String>>()?,
            ),
            2 => ColumnData::Text(
                (0..n)
                    .map(|i| {
                        let len = r.u32()? as usize;
                        let s = std::str::from_utf8(r.take(len)?).map_err(|e| e.to_string())?;
                        Ok((!is_null(i)).then(|| s.to_string()))
                    })
                    .collect::<Result<_, String>>()?,
            ),
            3 => ColumnData::Flag(
                (0..n)
                    .map(|i| {
                        let v = r.u8()? != 0;
                        Ok((!is_null(i)).then_some(v))
                    })
                    .collect::<Result<_, String>>()?,
            ),
            k => return Err(format!("unknown column kind {k}")),
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| "truncated file".to_string())?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// A catalog row with its position resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogObject {
    pub id: i64,
    pub coord: SkyCoord,
    pub trixel: TrixelId,
    pub values: Vec<Value>,
}

/// One table of an edition. Spatial tables keep rows sorted by
/// (trixel, primary key); others by primary key.
#[derive(Debug, Clone)]
pub struct TableData {
    def: TableDef,
    index_depth: u8,
    columns: Vec<ColumnData>,
    trixels: Vec<u64>,
    sparse: Vec<(u64, u32)>,
    by_pk: Vec<u32>,
}

impl TableData {
    /// Builds a table from rows that already conform to `def`.
    pub fn from_rows(def: TableDef, mut rows: Vec<Vec<Value>>, index_depth: u8) -> TableData {
        let pk = def.pk_index();
        let key = |r: &Vec<Value>| r[pk].as_i64().expect("integer primary key");
        let trixels: Vec<u64> = match def.spatial_indices() {
            Some((ra, dec)) => {
                let mut keyed: Vec<(u64, Vec<Value>)> = rows
                    .into_iter()
                    .map(|r| {
                        let c = SkyCoord::new(r[ra].as_f64().unwrap(), r[dec].as_f64().unwrap())
                            .expect("validated coordinate");
                        (sphere::trixel_of(c, index_depth).unwrap().raw(), r)
                    })
                    .collect();
                keyed.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| key(&a.1).cmp(&key(&b.1))));
                let (t, r): (Vec<u64>, Vec<Vec<Value>>) = keyed.into_iter().unzip();
                rows = r;
                t
            }
            None => {
                rows.sort_by_key(key);
                Vec::new()
            }
        };
        let mut columns: Vec<ColumnData> = def.columns.iter().map(|c| ColumnData::new(c.kind)).collect();
        for row in rows {
            for (col, v) in columns.iter_mut().zip(row) {
                col.push(v);
            }
        }
        Self::assemble(def, index_depth, columns, trixels)
    }

    fn assemble(def: TableDef, index_depth: u8, columns: Vec<ColumnData>, trixels: Vec<u64>) -> TableData {
        let sparse = trixels
            .iter()
            .enumerate()
            .step_by(SPARSE_STRIDE)
            .map(|(i, t)| (*t, i as u32))
            .collect();
        let mut t = TableData { def, index_depth, columns, trixels, sparse, by_pk: Vec::new() };
        let pk = t.def.pk_index();
        let mut order: Vec<u32> = (0..t.len() as u32).collect();
        if !t.is_spatial() {
            // Already in key order.
        } else if let ColumnData::Integer(keys) = &t.columns[pk] {
            order.sort_by_key(|r| keys[*r as usize]);
        }
        t.by_pk = order;
        t
    }

    pub fn def(&self) -> &TableDef {
        &self.def
    }

    pub fn name(&self) -> &str {
        &self.def.name
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, ColumnData::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_spatial(&self) -> bool {
        self.def.spatial.is_some()
    }

    pub fn index_depth(&self) -> u8 {
        self.index_depth
    }

    pub fn column(&self, i: usize) -> &ColumnData {
        &self.columns[i]
    }

    pub fn value(&self, row: usize, col: usize) -> Value {
        self.columns[col].get(row)
    }

    pub fn row(&self, row: usize) -> Vec<Value> {
        self.columns.iter().map(|c| c.get(row)).collect()
    }

    pub fn pk(&self, row: usize) -> i64 {
        match &self.columns[self.def.pk_index()] {
            ColumnData::Integer(v) => v[row].expect("primary key present"),
            _ => unreachable!("integer primary key"),
        }
    }

    /// Row positions in ascending primary-key order.
    pub fn pk_order(&self) -> &[u32] {
        &self.by_pk
    }

    pub fn trixel(&self, row: usize) -> Option<TrixelId> {
        self.trixels.get(row).map(|t| TrixelId::from_raw(*t).unwrap())
    }

    pub fn coord(&self, row: usize) -> Option<SkyCoord> {
        let (ra, dec) = self.def.spatial_indices()?;
        SkyCoord::new(self.columns[ra].real(row)?, self.columns[dec].real(row)?).ok()
    }

    pub fn object(&self, row: usize) -> Option<CatalogObject> {
        Some(CatalogObject {
            id: self.pk(row),
            coord: self.coord(row)?,
            trixel: self.trixel(row)?,
            values: self.row(row),
        })
    }

    /// Rows whose index cell lies in `raw` (ids at the index depth).
    pub fn rows_in_trixel_range(&self, raw: Range<u64>) -> Range<usize> {
        let lower = |x: u64| {
            // Sparse entries bracket the block holding the first id >= x.
            let block = self.sparse.partition_point(|(t, _)| *t < x);
            let lo = if block == 0 { 0 } else { self.sparse[block - 1].1 as usize };
            let hi = self.sparse.get(block).map_or(self.trixels.len(), |e| e.1 as usize);
            lo + self.trixels[lo..hi].partition_point(|t| *t < x)
        };
        lower(raw.start)..lower(raw.end)
    }

    /// Rows inside `cone`, via the cell cover, in primary-key order.
    pub fn cone_rows(&self, cone: &Cone) -> Result<Vec<u32>, CatalogError> {
        let mut rows = Vec::new();
        self.for_each_cone_row(cone, |r| rows.push(r as u32))?;
        rows.sort_by_key(|r| self.pk(*r as usize));
        Ok(rows)
    }

    /// Calls `f` for every row inside `cone` in storage order.
    pub fn for_each_cone_row(&self, cone: &Cone, mut f: impl FnMut(usize)) -> Result<(), CatalogError> {
        let (ra, dec) = self.def.spatial_indices().ok_or_else(|| CatalogError::NotSpatial(self.name().into()))?;
        let depth = cover_depth(cone.radius(), self.index_depth);
        let cv = sphere::cover(cone, depth).map_err(CatalogError::Sphere)?;
        for t in &cv.full {
            for r in self.rows_in_trixel_range(t.range_at(self.index_depth)) {
                f(r);
            }
        }
        let center = cone.center().to_cartesian();
        let limit = cone.radius();
        for t in &cv.partial {
            for r in self.rows_in_trixel_range(t.range_at(self.index_depth)) {
                let p = row_vec(&self.columns[ra], &self.columns[dec], r);
                if center.angle_to(&p).to_degrees() <= limit {
                    f(r);
                }
            }
        }
        Ok(())
    }

    /// Full scan without the index; the reference path for [`cone_rows`].
    ///
    /// [`cone_rows`]: TableData::cone_rows
    pub fn cone_rows_scan(&self, cone: &Cone) -> Result<Vec<u32>, CatalogError> {
        let (ra, dec) = self.def.spatial_indices().ok_or_else(|| CatalogError::NotSpatial(self.name().into()))?;
        let center = cone.center().to_cartesian();
        let mut rows: Vec<u32> = (0..self.len())
            .filter(|r| center.angle_to(&row_vec(&self.columns[ra], &self.columns[dec], *r)).to_degrees() <= cone.radius())
            .map(|r| r as u32)
            .collect();
        rows.sort_by_key(|r| self.pk(*r as usize));
        Ok(rows)
    }

    pub fn select_rows(&self, rows: &[u32]) -> TableData {
        let columns = self.columns.iter().map(|c| c.select(rows)).collect();
        let trixels = if self.trixels.is_empty() { Vec::new() } else { rows.iter().map(|r| self.trixels[*r as usize]).collect() };
        Self::assemble(self.def.clone(), self.index_depth, columns, trixels)
    }

    fn files(&self) -> Vec<(String, Vec<u8>)> {
        let mut out: Vec<(String, Vec<u8>)> = self
            .def
            .columns
            .iter()
            .zip(&self.columns)
            .map(|(meta, data)| (format!("col.{}.bin", meta.name), data.encode()))
            .collect();
        if self.is_spatial() {
            let mut t = Vec::with_capacity(14 + self.trixels.len() * 8);
            t.extend_from_slice(TRIXEL_MAGIC);
            t.push(FORMAT_VERSION);
            t.push(self.index_depth);
            t.extend_from_slice(&(self.trixels.len() as u64).to_le_bytes());
            for x in &self.trixels {
                t.extend_from_slice(&x.to_le_bytes());
            }
            out.push(("trixel.bin".into(), t));
            let mut ix = Vec::new();
            ix.extend_from_slice(INDEX_MAGIC);
            ix.push(FORMAT_VERSION);
            ix.extend_from_slice(&(SPARSE_STRIDE as u32).to_le_bytes());
            ix.extend_from_slice(&(self.sparse.len() as u64).to_le_bytes());
            for (t, r) in &self.sparse {
                ix.extend_from_slice(&t.to_le_bytes());
                ix.extend_from_slice(&(*r as u64).to_le_bytes());
            }
            out.push(("index.bin".into(), ix));
        }
        out
    }

    fn read(def: TableDef, index_depth: u8, dir: &Path) -> Result<TableData, CatalogError> {
        let bad = |what: String| CatalogError::Corrupt(format!("{}: {what}", dir.display()));
        let mut columns = Vec::new();
        for meta in &def.columns {
            let bytes = fs::read(dir.join(format!("col.{}.bin", meta.name)))?;
            let col = ColumnData::decode(&bytes).map_err(|e| bad(format!("{}: {e}", meta.name)))?;
            if col.kind() != meta.kind {
                return Err(bad(format!("column {} kind mismatch", meta.name)));
            }
            columns.push(col);
        }
        let mut trixels = Vec::new();
        if def.spatial.is_some() {
            let bytes = fs::read(dir.join("trixel.bin"))?;
            let mut r = Reader { bytes: &bytes, pos: 0 };
            if r.take(4).map_err(&bad)? != TRIXEL_MAGIC || r.u8().map_err(&bad)? != FORMAT_VERSION {
                return Err(bad("bad trixel header".into()));
            }
            if r.u8().map_err(&bad)? != index_depth {
                return Err(bad("index depth mismatch".into()));
            }
            let n = r.u64().map_err(&bad)?;
            for _ in 0..n {
                trixels.push(r.u64().map_err(&bad)?);
            }
        }
        let n = columns.first().map_or(0, ColumnData::len);
        if columns.iter().any(|c| c.len() != n) || (def.spatial.is_some() && trixels.len() != n) {
            return Err(bad("column lengths differ".into()));
        }
        Ok(Self::assemble(def, index_depth, columns, trixels))
    }
}

fn row_vec(ra: &ColumnData, dec: &ColumnData, row: usize) -> sphere::UnitVec3 {
    SkyCoord::new(ra.real(row).unwrap_or(0.0), dec.real(row).unwrap_or(0.0))
        .map(|c| c.to_cartesian())
        .unwrap_or(sphere::UnitVec3::X)
}

/// Cover depth matched to a cone radius: cells roughly a quarter of the
/// radius across, never deeper than the index.
pub fn cover_depth(radius_deg: f64, index_depth: u8) -> u8 {
    if radius_deg <= 0.0 {
        return index_depth;
    }
    let d = (90.0 / radius_deg).log2().floor() + 2.0;
    d.clamp(0.0, index_depth as f64) as u8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetOrigin {
    pub edition: u64,
    pub fraction: f64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: u8,
    edition: u64,
    checksum: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    subset: Option<SubsetOrigin>,
    tables: Vec<ManifestTable>,
    schema: Schema,
}

#[derive(Serialize, Deserialize)]
struct ManifestTable {
    name: String,
    rows: u64,
}

/// An immutable snapshot of an archive's tables.
#[derive(Debug, Clone)]
pub struct Edition {
    number: u64,
    checksum: String,
    schema: Schema,
    tables: BTreeMap<String, TableData>,
    subset: Option<SubsetOrigin>,
}

impl Edition {
    pub(crate) fn new(number: u64, schema: Schema, tables: BTreeMap<String, TableData>, subset: Option<SubsetOrigin>) -> Edition {
        let checksum = content_checksum(&schema, &tables);
        Edition { number, checksum, schema, tables, subset }
    }

    /// An edition with every schema table present and empty.
    pub fn empty(schema: Schema) -> Edition {
        let tables = schema
            .tables
            .iter()
            .map(|t| (t.name.clone(), TableData::from_rows(t.clone(), Vec::new(), schema.index_depth)))
            .collect();
        Edition::new(0, schema, tables, None)
    }

    pub fn number(&self) -> u64 {
        self.number
    }

    pub(crate) fn set_number(&mut self, n: u64) {
        self.number = n;
    }

    /// SHA-256 over the schema and all table files; independent of the
    /// edition number.
    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn subset_origin(&self) -> Option<&SubsetOrigin> {
        self.subset.as_ref()
    }

    pub fn tables(&self) -> impl Iterator<Item = &TableData> {
        self.tables.values()
    }

    pub fn table(&self, name: &str) -> Result<&TableData, CatalogError> {
        self.tables.get(name).ok_or_else(|| CatalogError::UnknownTable(name.to_string()))
    }

    /// Objects of `table` within `cone`, ordered by id.
    pub fn cone_select(&self, table: &str, cone: &Cone) -> Result<Vec<CatalogObject>, CatalogError> {
        let t = self.table(table)?;
        Ok(t.cone_rows(cone)?.into_iter().filter_map(|r| t.object(r as usize)).collect())
    }

    /// [`Edition::cone_select`] by exhaustive scan.
    pub fn cone_select_scan(&self, table: &str, cone: &Cone) -> Result<Vec<CatalogObject>, CatalogError> {
        let t = self.table(table)?;
        Ok(t.cone_rows_scan(cone)?.into_iter().filter_map(|r| t.object(r as usize)).collect())
    }

    /// Writes `table` as delimited text with a header row, in key order.
    pub fn export(&self, table: &str, out: impl Write) -> Result<(), CatalogError> {
        let t = self.table(table)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(t.def().columns.iter().map(|c| c.name.as_str()))?;
        for r in t.pk_order() {
            w.write_record(t.row(*r as usize).iter().map(Value::render))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_to(&self, dir: &Path) -> Result<(), CatalogError> {
        fs::create_dir_all(dir)?;
        let mut listed = Vec::new();
        for t in self.tables.values() {
            let tdir = dir.join(t.name());
            fs::create_dir_all(&tdir)?;
            for (name, bytes) in t.files() {
                write_synced(&tdir.join(name), &bytes)?;
            }
            listed.push(ManifestTable { name: t.name().to_string(), rows: t.len() as u64 });
        }
        let manifest = Manifest {
            format: FORMAT_VERSION,
            edition: self.number,
            checksum: self.checksum.clone(),
            subset: self.subset.clone(),
            tables: listed,
            schema: self.schema.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_synced(&dir.join("manifest.json"), text.as_bytes())?;
        Ok(())
    }

    pub fn read_from(dir: &Path) -> Result<Edition, CatalogError> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| CatalogError::Corrupt(e.to_string()))?;
        let mut tables = BTreeMap::new();
        for def in &m.schema.tables {
            let t = TableData::read(def.clone(), m.schema.index_depth, &dir.join(&def.name))?;
            tables.insert(def.name.clone(), t);
        }
        let e = Edition::new(m.edition, m.schema, tables, m.subset);
        if e.checksum != m.checksum {
            return Err(CatalogError::Corrupt(format!("{}: checksum mismatch", dir.display())));
        }
        Ok(e)
    }
}

fn write_synced(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()
}

fn content_checksum(schema: &Schema, tables: &BTreeMap<String, TableData>) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(schema).expect("schema serializes"));
    for t in tables.values() {
        h.update(t.name().as_bytes());
        for (name, bytes) in t.files() {
            h.update(name.as_bytes());
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
