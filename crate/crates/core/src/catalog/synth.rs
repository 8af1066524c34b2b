//! Deterministic synthetic catalogs for tests, benchmarks and demos.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::edition::{Edition, TableData};
use super::schema::{spine_schema, Schema, TableDef};
use super::value::Value;
use crate::sphere::{Cone, SkyCoord};

/// Uniformly distributed on the sphere.
pub fn random_coord(rng: &mut impl Rng) -> SkyCoord {
    let ra = rng.random_range(0.0..360.0);
    let dec = rng.random_range(-1.0f64..=1.0).asin().to_degrees();
    SkyCoord::new(ra, dec).expect("in range")
}

/// Uniformly distributed inside `cone`.
pub fn random_in_cone(rng: &mut impl Rng, cone: &Cone) -> SkyCoord {
    let cos_min = cone.radius().to_radians().cos();
    let cos_t: f64 = rng.random_range(cos_min..=1.0);
    let sep = cos_t.clamp(-1.0, 1.0).acos().to_degrees();
    let pa = rng.random_range(0.0..360.0);
    let p = cone.center().offset(sep, pa);
    // Keep rounding from pushing a point just past the rim.
    if cone.contains(p) {
        p
    } else {
        cone.center()
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub objects: usize,
    pub spectra_fraction: f64,
    pub seed: u64,
    /// Added to every generated id.
    pub id_offset: i64,
    /// Restrict positions to this region (whole sky if `None`).
    pub region: Option<Cone>,
}

impl SynthSpec {
    pub fn new(objects: usize, seed: u64) -> SynthSpec {
        SynthSpec { objects, spectra_fraction: 0.1, seed, id_offset: 0, region: None }
    }
}

/// Rows for the bundled spine schema, ids ascending.
#[derive(Debug, Clone, Default)]
pub struct SpineRows {
    pub spec_obj: Vec<Vec<Value>>,
    pub photo_obj: Vec<Vec<Value>>,
}

pub fn spine_rows(spec: &SynthSpec) -> SpineRows {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = SpineRows::default();
    for i in 0..spec.objects {
        let id = spec.id_offset + i as i64 + 1;
        let c = match &spec.region {
            Some(k) => random_in_cone(&mut rng, k),
            None => random_coord(&mut rng),
        };
        let galaxy = rng.random_bool(0.6);
        let r = round3(rng.random_range(14.0..23.0));
        let g = round3(r + rng.random_range(0.2..1.2));
        let u = round3(g + rng.random_range(0.5..2.0));
        let i_mag = round3(r - rng.random_range(0.0..0.6));
        let z = round3(i_mag - rng.random_range(0.0..0.4));
        let spec_id = if rng.random_bool(spec.spectra_fraction) {
            let sid = spec.id_offset + out.spec_obj.len() as i64 + 1;
            // Fibre position within half an arcsecond of the object.
            let fibre = c.offset(rng.random_range(0.0..0.5) / 3600.0, rng.random_range(0.0..360.0));
            let class = if galaxy { "GALAXY" } else if rng.random_bool(0.2) { "QSO" } else { "STAR" };
            let redshift = match class {
                "STAR" => round3(rng.random_range(-0.001..0.001)),
                "QSO" => round3(rng.random_range(0.3..4.0)),
                _ => round3(rng.random_range(0.01..0.6)),
            };
            out.spec_obj.push(vec![
                Value::Int(sid),
                Value::Real(fibre.ra()),
                Value::Real(fibre.dec()),
                Value::Real(redshift),
                Value::Text(class.to_string()),
                Value::Real(round3(rng.random_range(1.0..60.0))),
            ]);
            Value::Int(sid)
        } else {
            Value::Null
        };
        out.photo_obj.push(vec![
            Value::Int(id),
            Value::Real(c.ra()),
            Value::Real(c.dec()),
            Value::Real(u),
            Value::Real(g),
            Value::Real(r),
            Value::Real(i_mag),
            Value::Real(z),
            Value::Text(if galaxy { "GALAXY" } else { "STAR" }.to_string()),
            Value::Flag(r < 14.5),
            spec_id,
        ]);
    }
    out
}

/// Delimited text with a header row, the loader's input format.
pub fn write_csv(def: &TableDef, rows: &[Vec<Value>], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(def.columns.iter().map(|c| c.name.as_str()))?;
    for r in rows {
        w.write_record(r.iter().map(Value::render))?;
    }
    w.flush()?;
    Ok(())
}

/// Both spine tables as delimited text: `(spec_obj, photo_obj)`.
pub fn spine_csv(spec: &SynthSpec) -> (Vec<u8>, Vec<u8>) {
    let schema = spine_schema();
    let rows = spine_rows(spec);
    let mut s = Vec::new();
    let mut p = Vec::new();
    write_csv(schema.table("spec_obj").unwrap(), &rows.spec_obj, &mut s).expect("in-memory write");
    write_csv(schema.table("photo_obj").unwrap(), &rows.photo_obj, &mut p).expect("in-memory write");
    (s, p)
}

/// Builds an edition straight from rows that are known to be valid, skipping
/// the delimited-text round trip. Intended for fixtures.
pub fn edition_from_rows(schema: &Schema, mut rows: BTreeMap<String, Vec<Vec<Value>>>) -> Edition {
    schema.validate().expect("fixture schema is valid");
    let tables = schema
        .tables
        .iter()
        .map(|def| {
            let mut r = rows.remove(&def.name).unwrap_or_default();
            if let Some((ra, dec)) = def.spatial_indices() {
                for row in &mut r {
                    let c = SkyCoord::new(row[ra].as_f64().unwrap(), row[dec].as_f64().unwrap()).unwrap();
                    row[ra] = Value::Real(c.ra());
                }
            }
            (def.name.clone(), TableData::from_rows(def.clone(), r, schema.index_depth))
        })
        .collect();
    Edition::new(0, schema.clone(), tables, None)
}

pub fn spine_edition(spec: &SynthSpec) -> Edition {
    let rows = spine_rows(spec);
    let mut map = BTreeMap::new();
    map.insert("spec_obj".to_string(), rows.spec_obj);
    map.insert("photo_obj".to_string(), rows.photo_obj);
    edition_from_rows(&spine_schema(), map)
}

