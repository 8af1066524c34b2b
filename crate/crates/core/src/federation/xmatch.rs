use crate::catalog::{ColumnKind, ColumnMeta, Value};
use crate::clock::Budget;
use crate::query::{
    AccessError, ArchiveAccess, FetchRequest, Filter, PlanError, RegistryView, SourceRef, TableInfo, TableResult,
    DEFAULT_TOLERANCE_ARCSEC, MAX_TOLERANCE_ARCSEC,
};
use crate::sphere::{angular_distance, cover, trixel_of, Cone, SkyCoord, TrixelId, DEFAULT_MAX_DEPTH};

#[derive(Debug, Clone, PartialEq)]
pub struct MatchMember {
    pub id: i64,
    pub coord: SkyCoord,
    pub row: Vec<Value>,
}

/// One anchor object and its nearest counterpart in every other source.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedTuple {
    /// `members[0]` is the anchor; the rest follow in match order.
    pub members: Vec<MatchMember>,
    /// Separation of each member from the anchor, in arcseconds.
    pub separations_arcsec: Vec<f64>,
}

impl MatchedTuple {
    pub fn anchor(&self) -> &MatchMember {
        &self.members[0]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MatchSide<'a> {
    pub archive: &'a str,
    pub info: &'a TableInfo,
    pub filters: &'a [Filter],
}

fn positions(info: &TableInfo) -> Result<(usize, usize, usize), AccessError> {
    let pk = info.pk_index().ok_or_else(|| AccessError::UnknownColumn(info.primary_key.clone()))?;
    let (ra, dec) = info.spatial_indices().ok_or_else(|| AccessError::NotSpatial(info.name.clone()))?;
    Ok((pk, ra, dec))
}

fn member(row: Vec<Value>, pk: usize, ra: usize, dec: usize) -> Option<MatchMember> {
    let id = row[pk].as_i64()?;
    let coord = SkyCoord::new(row[ra].as_f64()?, row[dec].as_f64()?).ok()?;
    Some(MatchMember { id, coord, row })
}

fn fetch_side(
    side: MatchSide<'_>,
    cone: Option<Cone>,
    access: &dyn ArchiveAccess,
    budget: &Budget<'_>,
) -> Result<TableResult, AccessError> {
    let req = FetchRequest { table: side.info.name.clone(), cone, filters: side.filters.to_vec(), max_rows: None };
    access.fetch(side.archive, &req, budget)
}

fn row_cap_error(side: MatchSide<'_>) -> AccessError {
    AccessError::Remote {
        archive: side.archive.to_string(),
        code: "quota".into(),
        message: format!("{} exceeded the archive's row cap", side.info.name),
    }
}

/// Fetches the anchor source; every row with a position starts a tuple.
pub fn anchor_tuples(
    side: MatchSide<'_>,
    region: Option<&Cone>,
    access: &dyn ArchiveAccess,
    budget: &Budget<'_>,
) -> Result<Vec<MatchedTuple>, AccessError> {
    let (pk, ra, dec) = positions(side.info)?;
    let res = fetch_side(side, region.copied(), access, budget)?;
    if res.truncated {
        return Err(row_cap_error(side));
    }
    Ok(res
        .rows
        .into_iter()
        .filter_map(|row| member(row, pk, ra, dec))
        .map(|m| MatchedTuple { members: vec![m], separations_arcsec: vec![0.0] })
        .collect())
}

/// Mesh depth whose cells are about as wide as the tolerance.
fn match_depth(tol_deg: f64) -> u8 {
    (90.0 / tol_deg).log2().floor().clamp(0.0, DEFAULT_MAX_DEPTH as f64) as u8
}

/// Nearest candidate within the tolerance, ties to the smaller id.
fn nearest<'m>(
    anchor: SkyCoord,
    tolerance_arcsec: f64,
    candidates: impl Iterator<Item = &'m MatchMember>,
) -> Option<(f64, &'m MatchMember)> {
    let mut best: Option<(f64, &MatchMember)> = None;
    for m in candidates {
        let sep = angular_distance(anchor, m.coord) * 3600.0;
        if sep > tolerance_arcsec {
            continue;
        }
        if best.is_none_or(|(s, b)| (sep, m.id) < (s, b.id)) {
            best = Some((sep, m));
        }
    }
    best
}

/// Joins `side` to every tuple: its nearest object within the tolerance of
/// the anchor, ties to the smaller id. Tuples without a counterpart are
/// dropped.
///
/// The side is normally fetched once over the region widened by the
/// tolerance and matched in memory, which gives the same answer as one
/// tolerance-sized cone per tuple. If that fetch hits the archive's row cap
/// the per-tuple cones are issued instead.
pub fn extend_matches(
    tuples: &mut Vec<MatchedTuple>,
    side: MatchSide<'_>,
    region: Option<&Cone>,
    tolerance_arcsec: f64,
    access: &dyn ArchiveAccess,
    budget: &Budget<'_>,
) -> Result<(), AccessError> {
    let tol_deg = tolerance_arcsec / 3600.0;
    let (pk, ra, dec) = positions(side.info)?;
    let res = fetch_side(side, region.map(|c| c.widened(tol_deg)), access, budget)?;
    let mut kept = Vec::with_capacity(tuples.len());
    if res.truncated {
        drop(res);
        for (n, mut t) in std::mem::take(tuples).into_iter().enumerate() {
            budget.tick(n)?;
            let anchor = t.anchor().coord;
            let cone = Cone::new(anchor, tol_deg).expect("tolerance validated");
            let near = fetch_side(side, Some(cone), access, budget)?;
            if near.truncated {
                return Err(row_cap_error(side));
            }
            let objects: Vec<MatchMember> = near.rows.into_iter().filter_map(|r| member(r, pk, ra, dec)).collect();
            if let Some((sep, m)) = nearest(anchor, tolerance_arcsec, objects.iter()) {
                t.members.push(m.clone());
                t.separations_arcsec.push(sep);
                kept.push(t);
            }
        }
        *tuples = kept;
        return Ok(());
    }

    let depth = match_depth(tol_deg);
    let objects: Vec<MatchMember> = res.rows.into_iter().filter_map(|r| member(r, pk, ra, dec)).collect();
    let mut index: Vec<(u64, usize)> = objects
        .iter()
        .enumerate()
        .map(|(i, m)| (trixel_of(m.coord, depth).expect("depth within mesh").raw(), i))
        .collect();
    index.sort_unstable();

    for (n, mut t) in std::mem::take(tuples).into_iter().enumerate() {
        budget.tick(n)?;
        let anchor = t.anchor().coord;
        let cone = Cone::new(anchor, tol_deg).expect("tolerance validated");
        let cells = cover(&cone, depth).expect("depth within mesh");
        let candidates = cells.full.iter().chain(&cells.partial).flat_map(|cell| {
            let range = cell_range(*cell, depth);
            let lo = index.partition_point(|(k, _)| *k < range.start);
            index[lo..].iter().take_while(move |(k, _)| *k < range.end).map(|&(_, i)| &objects[i])
        });
        if let Some((sep, m)) = nearest(anchor, tolerance_arcsec, candidates) {
            t.members.push(m.clone());
            t.separations_arcsec.push(sep);
            kept.push(t);
        }
    }
    *tuples = kept;
    Ok(())
}

fn cell_range(cell: TrixelId, depth: u8) -> std::ops::Range<u64> {
    if cell.depth() >= depth {
        let a = cell.ancestor_at(depth);
        a.raw()..a.raw() + 1
    } else {
        cell.range_at(depth)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct XMatchSpec {
    /// The first source is the anchor.
    pub sources: Vec<SourceRef>,
    pub tolerance_arcsec: f64,
}

impl XMatchSpec {
    pub fn new(sources: Vec<SourceRef>) -> XMatchSpec {
        XMatchSpec { sources, tolerance_arcsec: DEFAULT_TOLERANCE_ARCSEC }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum XMatchError {
    #[error("a cross-match needs at least one source")]
    TooFewSources,
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Access(#[from] AccessError),
}

/// Positional cross-match of `spec.sources` within `region`, anchored
/// on the first source. Tuples come back in anchor-id order. With a single
/// source this is a cone search.
pub fn xmatch(
    spec: &XMatchSpec,
    region: Option<&Cone>,
    registry: &dyn RegistryView,
    access: &dyn ArchiveAccess,
    budget: &Budget<'_>,
) -> Result<Vec<MatchedTuple>, XMatchError> {
    if spec.sources.is_empty() {
        return Err(XMatchError::TooFewSources);
    }
    let tol = spec.tolerance_arcsec;
    if !(tol > 0.0 && tol <= MAX_TOLERANCE_ARCSEC) {
        return Err(PlanError::InvalidTolerance(tol).into());
    }
    let infos: Vec<TableInfo> =
        spec.sources.iter().map(|s| registry.table_info(&s.archive, &s.table)).collect::<Result<_, _>>()?;
    for (s, info) in spec.sources.iter().zip(&infos) {
        if info.spatial_indices().is_none() {
            return Err(PlanError::NotSpatial(s.to_string()).into());
        }
    }
    let side = |i: usize| MatchSide { archive: &spec.sources[i].archive, info: &infos[i], filters: &[] };
    let mut tuples = anchor_tuples(side(0), region, access, budget)?;
    for i in 1..spec.sources.len() {
        extend_matches(&mut tuples, side(i), region, tol, access, budget)?;
    }
    Ok(tuples)
}

/// Renders tuples as a table: id, position and separation from the anchor
/// for each source, prefixed `{archive}_{table}_`.
pub fn tuples_table(spec: &XMatchSpec, tuples: &[MatchedTuple]) -> TableResult {
    let mut columns = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, s) in spec.sources.iter().enumerate() {
        let mut label = format!("{}_{}", s.archive, s.table);
        if !seen.insert(label.clone()) {
            label = format!("{label}{}", i + 1);
        }
        columns.push(ColumnMeta::new(&format!("{label}_id"), ColumnKind::Integer, "", "meta.id", ""));
        columns.push(ColumnMeta::new(&format!("{label}_ra"), ColumnKind::Real, "deg", "pos.eq.ra", ""));
        columns.push(ColumnMeta::new(&format!("{label}_dec"), ColumnKind::Real, "deg", "pos.eq.dec", ""));
        columns.push(ColumnMeta::new(&format!("{label}_sep_arcsec"), ColumnKind::Real, "arcsec", "pos.angDistance", ""));
    }
    let rows = tuples
        .iter()
        .map(|t| {
            t.members
                .iter()
                .zip(&t.separations_arcsec)
                .flat_map(|(m, sep)| {
                    [Value::Int(m.id), Value::Real(m.coord.ra()), Value::Real(m.coord.dec()), Value::Real(*sep)]
                })
                .collect()
        })
        .collect();
    TableResult { columns, rows, truncated: false }
}
