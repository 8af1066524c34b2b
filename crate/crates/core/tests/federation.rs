use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skyfed_core::archive_node::{ArchiveNode, ServiceDescription};
use skyfed_core::catalog::synth::{edition_from_rows, random_in_cone};
use skyfed_core::catalog::{Edition, Schema, Value};
use skyfed_core::clock::{Budget, SystemClock};
use skyfed_core::federation::*;
use skyfed_core::query::*;
use skyfed_core::sphere::{angular_distance, Cone, SkyCoord};

fn schema(archive: &str) -> Schema {
    Schema::from_toml(&format!(
        r#"
archive = "{archive}"
[[table]]
name = "obj"
primary_key = "id"
spatial = {{ ra = "ra", dec = "dec" }}
[[table.column]]
name = "id"
kind = "integer"
ucd = "meta.id;meta.main"
[[table.column]]
name = "ra"
kind = "real"
unit = "deg"
ucd = "pos.eq.ra;meta.main"
[[table.column]]
name = "dec"
kind = "real"
unit = "deg"
ucd = "pos.eq.dec;meta.main"
[[table.column]]
name = "mag"
kind = "real"
ucd = "phot.mag"
"#
    ))
    .unwrap()
}

fn edition(archive: &str, objs: &[(i64, SkyCoord)]) -> Edition {
    let rows = objs
        .iter()
        .map(|(id, c)| vec![Value::Int(*id), Value::Real(c.ra()), Value::Real(c.dec()), Value::Real(18.0)])
        .collect();
    let mut m = BTreeMap::new();
    m.insert("obj".to_string(), rows);
    edition_from_rows(&schema(archive), m)
}

fn description(name: &str, ed: Edition) -> ServiceDescription {
    ArchiveNode::new(name, ed).describe()
}

fn record(name: &str) -> ServiceRecord {
    ServiceRecord {
        name: name.to_string(),
        endpoint: format!("http://127.0.0.1:9000/{name}"),
        description: description(name, edition(name, &[])),
        registered_at: 1,
    }
}

#[test]
fn registry_operations() {
    let r = Registry::in_memory();
    r.register(record("twomass")).unwrap();
    r.register(record("sdss")).unwrap();
    let names: Vec<String> = r.list().into_iter().map(|x| x.name).collect();
    assert_eq!(names, vec!["sdss", "twomass"]);
    assert_eq!(r.register(record("sdss")), Err(RegistryError::Duplicate("sdss".into())));
    r.unregister("sdss").unwrap();
    assert_eq!(r.find("sdss"), Err(RegistryError::Unknown("sdss".into())));
    assert_eq!(r.unregister("sdss"), Err(RegistryError::Unknown("sdss".into())));
    for bad in ["not a url", "ftp://host/x", "http://", "http://h/x?q=1"] {
        let mut rec = record("x");
        rec.endpoint = bad.into();
        assert!(matches!(r.register(rec), Err(RegistryError::InvalidEndpoint { .. })), "{bad}");
    }
    assert!(validate_endpoint("https://archive.example.org:8443/sdss/").is_ok());
}

#[test]
fn registry_matches_model_under_random_mutations() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("registry.jsonl");
    let r = Registry::open(&path).unwrap();
    let mut model: BTreeMap<String, u64> = BTreeMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for step in 0..400u64 {
        let name = format!("a{}", rng.random_range(0..12));
        match rng.random_range(0..3) {
            0 => {
                let mut rec = record(&name);
                rec.registered_at = step;
                let res = r.register(rec);
                assert_eq!(res.is_ok(), !model.contains_key(&name));
                model.entry(name).or_insert(step);
            }
            1 => {
                let res = r.unregister(&name);
                assert_eq!(res.is_ok(), model.remove(&name).is_some());
            }
            _ => assert_eq!(r.find(&name).map(|x| x.registered_at).ok(), model.get(&name).copied()),
        }
        let listed: Vec<(String, u64)> = r.list().into_iter().map(|x| (x.name, x.registered_at)).collect();
        assert_eq!(listed, model.clone().into_iter().collect::<Vec<_>>());
    }
    drop(r);
    let replayed = Registry::open(&path).unwrap();
    let listed: Vec<(String, u64)> = replayed.list().into_iter().map(|x| (x.name, x.registered_at)).collect();
    assert_eq!(listed, model.into_iter().collect::<Vec<_>>());
}

#[test]
fn journal_survives_torn_tail_and_refresh() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("registry.jsonl");
    {
        let r = Registry::open(&path).unwrap();
        r.register(record("a")).unwrap();
        r.register(record("b")).unwrap();
        let desc = description("a", edition("a", &[(1, SkyCoord::new(1.0, 1.0).unwrap())]));
        r.refresh("a", desc).unwrap();
        assert!(r.refresh("zz", description("zz", edition("zz", &[]))).is_err());
    }
    // A crash mid-append leaves a partial line.
    std::fs::OpenOptions::new().append(true).open(&path).unwrap().write_all(b"{\"op\":\"unregis").unwrap();
    let r = Registry::open(&path).unwrap();
    assert_eq!(r.list().len(), 2);
    assert_eq!(r.find("a").unwrap().description.tables[0].cardinality, 1);
    r.unregister("b").unwrap();
    drop(r);
    let r = Registry::open(&path).unwrap();
    assert_eq!(r.list().into_iter().map(|x| x.name).collect::<Vec<_>>(), vec!["a"]);

    std::fs::write(&path, b"{\"op\":\"register\"}\n\n").unwrap();
    assert!(matches!(Registry::open(&path), Err(RegistryError::Corrupt { line: 1, .. })));
}

#[test]
fn concurrent_registrations_are_serialized() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("registry.jsonl");
    let r = Arc::new(Registry::open(&path).unwrap());
    let handles: Vec<_> = (0..8)
        .map(|t| {
            let r = r.clone();
            std::thread::spawn(move || (0..20).filter(|i| r.register(record(&format!("n{}", (t * 7 + i) % 40))).is_ok()).count())
        })
        .collect();
    let wins: usize = handles.into_iter().map(|h| h.join().unwrap()).sum();
    assert_eq!(wins, r.list().len());
    drop(r);
    assert_eq!(Registry::open(&path).unwrap().list().len(), wins);
}

/// Three archives around one field: `a` holds 1,000 objects; `b` and `c`
/// hold planted counterparts of most of them at known offsets plus decoys.
struct Field {
    region: Cone,
    archives: LocalArchives,
    objs: BTreeMap<&'static str, Vec<(i64, SkyCoord)>>,
}

fn field(seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let region = Cone::new(SkyCoord::new(200.0, 30.0).unwrap(), 1.0).unwrap();
    let a: Vec<(i64, SkyCoord)> = (0..1_000).map(|i| (i + 1, random_in_cone(&mut rng, &region))).collect();
    let planted = |base: i64, rng: &mut ChaCha8Rng| {
        let mut out = Vec::new();
        for (i, (_, c)) in a.iter().enumerate() {
            if rng.random_bool(0.75) {
                let sep = rng.random_range(0.0..1.8) / 3600.0;
                out.push((base + i as i64, c.offset(sep, rng.random_range(0.0..360.0))));
            }
            if rng.random_bool(0.2) {
                // A decoy that sometimes beats the planted counterpart.
                let sep = rng.random_range(0.5..4.0) / 3600.0;
                out.push((base + 5_000 + i as i64, c.offset(sep, rng.random_range(0.0..360.0))));
            }
        }
        let wide = Cone::new(region.center(), 1.2).unwrap();
        for k in 0..300 {
            out.push((base + 20_000 + k, random_in_cone(rng, &wide)));
        }
        out
    };
    let b = planted(100_000, &mut rng);
    let c = planted(200_000, &mut rng);
    let archives = LocalArchives::new().with("a", edition("a", &a)).with("b", edition("b", &b)).with("c", edition("c", &c));
    let mut objs = BTreeMap::new();
    objs.insert("a", a);
    objs.insert("b", b);
    objs.insert("c", c);
    Field { region, archives, objs }
}

fn haversine_arcsec(p: SkyCoord, q: SkyCoord) -> f64 {
    let (d1, d2) = (p.dec().to_radians(), q.dec().to_radians());
    let h = ((d2 - d1) / 2.0).sin().powi(2) + d1.cos() * d2.cos() * ((q.ra() - p.ra()).to_radians() / 2.0).sin().powi(2);
    (2.0 * h.sqrt().min(1.0).asin()).to_degrees() * 3600.0
}

/// All-pairs nearest-neighbor chaining against the primary.
fn brute_force(f: &Field, order: &[&str], tol: f64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for &(id, c) in &f.objs[order[0]] {
        if haversine_arcsec(f.region.center(), c) > f.region.radius() * 3600.0 {
            continue;
        }
        let mut ids = vec![id];
        for s in &order[1..] {
            let best = f.objs[s]
                .iter()
                .map(|&(oid, oc)| (haversine_arcsec(c, oc), oid))
                .filter(|(d, _)| *d <= tol)
                .min_by(|x, y| x.partial_cmp(y).unwrap());
            match best {
                Some((_, oid)) => ids.push(oid),
                None => break,
            }
        }
        if ids.len() == order.len() {
            out.push(ids);
        }
    }
    out.sort();
    out
}

fn spec(order: &[&str], tol: f64) -> XMatchSpec {
    XMatchSpec { sources: order.iter().map(|a| SourceRef::new(a, "obj")).collect(), tolerance_arcsec: tol }
}

fn run(f: &Field, access: &dyn ArchiveAccess, order: &[&str], tol: f64) -> Result<Vec<MatchedTuple>, XMatchError> {
    let clock = SystemClock;
    xmatch(&spec(order, tol), Some(&f.region), &f.archives, access, &Budget::unlimited(&clock))
}

fn ids(tuples: &[MatchedTuple]) -> Vec<Vec<i64>> {
    tuples.iter().map(|t| t.members.iter().map(|m| m.id).collect()).collect()
}

#[test]
fn three_archive_xmatch_equals_all_pairs() {
    let f = field(21);
    for order in [["a", "b", "c"], ["a", "c", "b"], ["b", "a", "c"]] {
        let got = run(&f, &f.archives, &order, 2.0).unwrap();
        let want = brute_force(&f, &order, 2.0);
        assert!(want.len() > 300, "{}", want.len());
        assert_eq!(ids(&got), want, "{order:?}");
        for t in &got {
            assert_eq!(t.separations_arcsec[0], 0.0);
            for (m, sep) in t.members.iter().zip(&t.separations_arcsec) {
                assert!(*sep <= 2.0);
                let again = angular_distance(t.anchor().coord, m.coord) * 3600.0;
                assert!((again - sep).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn single_source_is_cone_search() {
    let f = field(3);
    let got = run(&f, &f.archives, &["a"], 2.0).unwrap();
    let node = ArchiveNode::new("a", (**f.archives.get("a").unwrap()).clone());
    let cone = node.cone_search(200.0, 30.0, 1.0, None, skyfed_core::archive_node::Tier::Collaboration).unwrap();
    assert_eq!(ids(&got), cone.rows.iter().map(|r| vec![r[0].as_i64().unwrap()]).collect::<Vec<_>>());
}

#[test]
fn disjoint_archives_match_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let north = Cone::new(SkyCoord::new(10.0, 60.0).unwrap(), 1.0).unwrap();
    let south = Cone::new(SkyCoord::new(10.0, -60.0).unwrap(), 1.0).unwrap();
    let n: Vec<_> = (0..200).map(|i| (i, random_in_cone(&mut rng, &north))).collect();
    let s: Vec<_> = (0..200).map(|i| (i, random_in_cone(&mut rng, &south))).collect();
    let arch = LocalArchives::new().with("n", edition("n", &n)).with("s", edition("s", &s));
    let clock = SystemClock;
    let got = xmatch(&spec(&["n", "s"], 3600.0), None, &arch, &arch, &Budget::unlimited(&clock)).unwrap();
    assert!(got.is_empty());
}

/// Caps every fetch, as a public-tier remote archive would.
struct Capped<'a> {
    inner: &'a LocalArchives,
    cap: u64,
}

impl ArchiveAccess for Capped<'_> {
    fn fetch(&self, archive: &str, req: &FetchRequest, budget: &Budget<'_>) -> Result<TableResult, AccessError> {
        let mut r = req.clone();
        r.max_rows = Some(req.max_rows.map_or(self.cap, |m| m.min(self.cap)));
        self.inner.fetch(archive, &r, budget)
    }
}

#[test]
fn capped_archives_fall_back_to_per_tuple_cones() {
    let f = field(8);
    let capped = Capped { inner: &f.archives, cap: 2_000 };
    let got = run(&f, &capped, &["a", "b", "c"], 2.0).unwrap();
    assert_eq!(ids(&got), brute_force(&f, &["a", "b", "c"], 2.0));
    // A seed larger than the cap cannot be matched.
    let tiny = Capped { inner: &f.archives, cap: 10 };
    assert!(matches!(run(&f, &tiny, &["a", "b"], 2.0), Err(XMatchError::Access(AccessError::Remote { .. }))));
}

struct Down<'a> {
    inner: &'a LocalArchives,
    down: &'static str,
}

impl ArchiveAccess for Down<'_> {
    fn fetch(&self, archive: &str, req: &FetchRequest, budget: &Budget<'_>) -> Result<TableResult, AccessError> {
        if archive == self.down {
            return Err(AccessError::Unreachable { archive: archive.into(), detail: "connection refused".into() });
        }
        self.inner.fetch(archive, req, budget)
    }
}

#[test]
fn unreachable_source_fails_the_match_by_name() {
    let f = field(2);
    match run(&f, &Down { inner: &f.archives, down: "c" }, &["a", "b", "c"], 2.0) {
        Err(XMatchError::Access(AccessError::Unreachable { archive, .. })) => assert_eq!(archive, "c"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(run(&f, &f.archives, &["a", "zz"], 2.0), Err(XMatchError::Plan(PlanError::UnknownArchive(_)))));
    assert!(matches!(run(&f, &f.archives, &["a", "b"], 0.0), Err(XMatchError::Plan(PlanError::InvalidTolerance(_)))));
}

#[test]
fn query_xmatch_agrees_with_engine() {
    let f = field(5);
    // The query seeds from the smallest table; here that is `a`.
    let text = "SELECT a.id, b.id, c.id FROM a.obj XMATCH b.obj, c.obj WITHIN 2 ARCSEC WHERE CONE(200.0, 30.0, 1.0)";
    let p = plan(&parse(text).unwrap(), &f.archives).unwrap();
    assert_eq!(p.seed(), 0);
    let ctx = ExecContext { access: &f.archives, clock: &SystemClock, workspace: None };
    let res = execute(&p, &ExecLimits::unlimited(), &ctx).unwrap();
    let got: Vec<Vec<i64>> = res.rows.iter().map(|r| r.iter().map(|v| v.as_i64().unwrap()).collect()).collect();
    assert_eq!(got, brute_force(&f, &["a", "b", "c"], 2.0));
}
