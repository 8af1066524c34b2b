use std::cmp::Ordering;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::Mutex;
use std::time::Duration;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skyfed_core::catalog::synth::{spine_edition, spine_rows, SynthSpec};
use skyfed_core::catalog::Value;
use skyfed_core::clock::{Clock, ManualClock, SystemClock};
use skyfed_core::query::*;

/// Moves forward a fixed step every time it is read.
struct TickingClock {
    nanos: AtomicU64,
    step: Duration,
}

impl TickingClock {
    fn new(step: Duration) -> TickingClock {
        TickingClock { nanos: AtomicU64::new(0), step }
    }
}

impl Clock for TickingClock {
    fn now(&self) -> Duration {
        Duration::from_nanos(self.nanos.fetch_add(self.step.as_nanos() as u64, AtomicOrdering::SeqCst))
    }
}

fn archives(n: usize, seed: u64) -> LocalArchives {
    LocalArchives::new().with("sdss", spine_edition(&SynthSpec::new(n, seed)))
}

fn run(text: &str, arch: &LocalArchives, limits: ExecLimits) -> Result<TableResult, String> {
    let ast = parse(text).map_err(|e| e.to_string())?;
    let p = plan(&ast, arch).map_err(|e| e.to_string())?;
    let ctx = ExecContext { access: arch, clock: &SystemClock, workspace: None };
    execute(&p, &limits, &ctx).map_err(|e| e.to_string())
}

/// Great-circle distance by the haversine formula, in degrees.
fn haversine(ra1: f64, dec1: f64, ra2: f64, dec2: f64) -> f64 {
    let (p1, p2) = (dec1.to_radians(), dec2.to_radians());
    let dp = p2 - p1;
    let dl = (ra2 - ra1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    (2.0 * h.sqrt().min(1.0).asin()).to_degrees()
}

const PHOTO_COLUMNS: &[&str] =
    &["id", "ra", "dec", "mag_u", "mag_g", "mag_r", "mag_i", "mag_z", "obj_type", "saturated", "spec_id"];

struct RefQuery {
    text: String,
    cone: Option<(f64, f64, f64)>,
    preds: Vec<(usize, CompareOp, Value)>,
    columns: Option<Vec<usize>>,
    limit: Option<u64>,
}

fn random_query(rng: &mut impl Rng) -> RefQuery {
    let mut where_parts = Vec::new();
    let mut preds = Vec::new();
    let cone = rng.random_bool(0.7).then(|| {
        let ra = rng.random_range(0.0..360.0);
        let dec = rng.random_range(-89.0..89.0);
        let r = rng.random_range(0.5..25.0);
        where_parts.push(format!("CONE({ra:?}, {dec:?}, {r:?})"));
        (ra, dec, r)
    });
    let ops = [CompareOp::Eq, CompareOp::Ne, CompareOp::Lt, CompareOp::Le, CompareOp::Gt, CompareOp::Ge];
    for _ in 0..rng.random_range(0..3) {
        let op = ops[rng.random_range(0..ops.len())];
        let (col, text, value) = match rng.random_range(0..5) {
            0 => {
                let v = (rng.random_range(15.0..22.0f64) * 1000.0).round() / 1000.0;
                (5, format!("{v:?}"), Value::Real(v))
            }
            1 => {
                let v = rng.random_range(15..23i64);
                (4, v.to_string(), Value::Int(v))
            }
            2 => {
                let s = if rng.random_bool(0.5) { "GALAXY" } else { "STAR" };
                (8, format!("'{s}'"), Value::Text(s.into()))
            }
            3 => {
                let b = rng.random_bool(0.5);
                (9, if b { "TRUE" } else { "FALSE" }.into(), Value::Flag(b))
            }
            _ => {
                let v = rng.random_range(0..2000i64);
                (10, v.to_string(), Value::Int(v))
            }
        };
        where_parts.push(format!("{} {} {text}", PHOTO_COLUMNS[col], op.symbol()));
        preds.push((col, op, value));
    }
    let columns = rng.random_bool(0.5).then(|| {
        let mut c: Vec<usize> = (0..PHOTO_COLUMNS.len()).filter(|_| rng.random_bool(0.4)).collect();
        if c.is_empty() {
            c.push(0);
        }
        c
    });
    let limit = rng.random_bool(0.4).then(|| rng.random_range(1..400u64));
    let mut text = String::from("SELECT ");
    match &columns {
        None => text.push('*'),
        Some(c) => text.push_str(&c.iter().map(|&i| PHOTO_COLUMNS[i]).collect::<Vec<_>>().join(", ")),
    }
    text.push_str(" FROM sdss.photo_obj");
    if !where_parts.is_empty() {
        text.push_str(" WHERE ");
        text.push_str(&where_parts.join(" AND "));
    }
    if let Some(l) = limit {
        text.push_str(&format!(" LIMIT {l}"));
    }
    RefQuery { text, cone, preds, columns, limit }
}

fn reference_eval(q: &RefQuery, rows: &[Vec<Value>]) -> (Vec<Vec<Value>>, bool) {
    let mut hits: Vec<&Vec<Value>> = rows
        .iter()
        .filter(|r| {
            q.cone.is_none_or(|(ra, dec, rad)| {
                haversine(ra, dec, r[1].as_f64().unwrap(), r[2].as_f64().unwrap()) <= rad
            })
        })
        .filter(|r| {
            q.preds.iter().all(|(c, op, v)| r[*c].compare(v).is_some_and(|o: Ordering| op.holds(o)))
        })
        .collect();
    hits.sort_by_key(|r| r[0].as_i64().unwrap());
    let truncated = q.limit.is_some_and(|l| hits.len() as u64 > l);
    if let Some(l) = q.limit {
        hits.truncate(l as usize);
    }
    let proj = hits
        .into_iter()
        .map(|r| match &q.columns {
            None => r.clone(),
            Some(c) => c.iter().map(|&i| r[i].clone()).collect(),
        })
        .collect();
    (proj, truncated)
}

#[test]
fn executor_matches_reference_evaluator() {
    let spec = SynthSpec::new(10_000, 41);
    let rows = spine_rows(&spec).photo_obj;
    let arch = archives(10_000, 41);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut nonempty = 0;
    for _ in 0..200 {
        let q = random_query(&mut rng);
        let got = run(&q.text, &arch, ExecLimits::unlimited()).unwrap_or_else(|e| panic!("{}: {e}", q.text));
        let (want, truncated) = reference_eval(&q, &rows);
        assert_eq!(got.rows.len(), want.len(), "{}", q.text);
        assert_eq!(got.rows, want, "{}", q.text);
        assert_eq!(got.truncated, truncated, "{}", q.text);
        if !want.is_empty() {
            nonempty += 1;
        }
    }
    assert!(nonempty > 100, "only {nonempty} queries returned rows");
}

#[test]
fn row_cap_truncates_in_key_order() {
    let arch = archives(5_000, 3);
    let limits = ExecLimits { elapsed: Duration::from_secs(90), row_cap: 1_000 };
    let res = run("SELECT id FROM sdss.photo_obj", &arch, limits).unwrap();
    assert_eq!(res.rows.len(), 1_000);
    assert!(res.truncated);
    let ids: Vec<i64> = res.rows.iter().map(|r| r[0].as_i64().unwrap()).collect();
    assert_eq!(ids, (1..=1_000).collect::<Vec<_>>());

    let res = run("SELECT id FROM sdss.photo_obj LIMIT 10", &arch, limits).unwrap();
    assert_eq!(res.rows.len(), 10);
    assert!(res.truncated);
    let res = run("SELECT id FROM sdss.photo_obj WHERE id <= 1000", &arch, limits).unwrap();
    assert_eq!(res.rows.len(), 1_000);
    assert!(!res.truncated);
}

#[test]
fn elapsed_quota_aborts_long_queries() {
    let arch = archives(100_000, 5);
    let ast = parse("SELECT * FROM sdss.photo_obj WHERE mag_r < 0").unwrap();
    let p = plan(&ast, &arch).unwrap();
    let clock = TickingClock::new(Duration::from_secs(1));
    let ctx = ExecContext { access: &arch, clock: &clock, workspace: None };
    let limits = ExecLimits { elapsed: Duration::from_secs(90), row_cap: 1_000 };
    match execute(&p, &limits, &ctx) {
        Err(ExecError::Quota(q)) => assert_eq!(q.limit, Duration::from_secs(90)),
        other => panic!("expected quota error, got {other:?}"),
    }
    // The same scan passes with a budget above its ~100 checks.
    let limits = ExecLimits { elapsed: Duration::from_secs(1_000), row_cap: 1_000 };
    assert!(execute(&p, &limits, &ctx).unwrap().rows.is_empty());
}

struct Recorder {
    fail: bool,
    seen: Mutex<Vec<(IntoTarget, usize)>>,
}

impl DepositTarget for Recorder {
    fn deposit(&self, target: &IntoTarget, result: &TableResult) -> Result<(), DepositError> {
        if self.fail {
            return Err(DepositError::Quota { used: 10, quota: 5 });
        }
        self.seen.lock().unwrap().push((target.clone(), result.rows.len()));
        Ok(())
    }
}

#[test]
fn into_deposits_after_completion() {
    let arch = archives(2_000, 9);
    let ast = parse("SELECT id, mag_r FROM sdss.photo_obj WHERE mag_r < 18 LIMIT 50 INTO mine.bright").unwrap();
    let p = plan(&ast, &arch).unwrap();
    assert!(matches!(p.steps.last(), Some(PlanStep::Deposit { .. })));
    let rec = Recorder { fail: false, seen: Mutex::new(Vec::new()) };
    let ctx = ExecContext { access: &arch, clock: &SystemClock, workspace: Some(&rec) };
    let res = execute(&p, &ExecLimits::unlimited(), &ctx).unwrap();
    let seen = rec.seen.lock().unwrap().clone();
    assert_eq!(seen, vec![(IntoTarget { db: Some("mine".into()), table: "bright".into() }, res.rows.len())]);

    let failing = Recorder { fail: true, seen: Mutex::new(Vec::new()) };
    let ctx = ExecContext { access: &arch, clock: &SystemClock, workspace: Some(&failing) };
    assert!(matches!(execute(&p, &ExecLimits::unlimited(), &ctx), Err(ExecError::Deposit(DepositError::Quota { .. }))));

    let ctx = ExecContext { access: &arch, clock: &SystemClock, workspace: None };
    assert_eq!(execute(&p, &ExecLimits::unlimited(), &ctx), Err(ExecError::NoWorkspace));

    // A query that runs out of time never reaches the deposit.
    let clock = TickingClock::new(Duration::from_secs(1));
    let ctx = ExecContext { access: &arch, clock: &clock, workspace: Some(&rec) };
    let tight = ExecLimits { elapsed: Duration::from_millis(500), row_cap: u64::MAX };
    assert!(matches!(execute(&p, &tight, &ctx), Err(ExecError::Quota(_))));
    assert_eq!(rec.seen.lock().unwrap().len(), 1);
}

#[test]
fn planner_resolution_errors() {
    let arch = archives(100, 1);
    let err = |q: &str| plan(&parse(q).unwrap(), &arch).unwrap_err();
    assert_eq!(err("SELECT * FROM nope.photo_obj"), PlanError::UnknownArchive("nope".into()));
    assert!(matches!(err("SELECT * FROM sdss.nope"), PlanError::UnknownTable { .. }));
    assert_eq!(err("SELECT bogus FROM sdss.photo_obj"), PlanError::UnknownColumn("bogus".into()));
    assert!(matches!(err("SELECT * FROM sdss.photo_obj WHERE obj_type < 3"), PlanError::TypeMismatch { .. }));
    assert!(matches!(err("SELECT * FROM sdss.photo_obj WHERE CONE(0, 95, 1)"), PlanError::InvalidCone(_)));
    assert!(matches!(err("SELECT * FROM sdss.photo_obj WHERE CONE(0, 0, 181)"), PlanError::InvalidCone(_)));
    assert_eq!(
        err("SELECT * FROM sdss.photo_obj WHERE CONE(0, 0, 1) AND CONE(1, 1, 1)"),
        PlanError::MultipleCones
    );
    assert_eq!(
        err("SELECT * FROM sdss.photo_obj XMATCH sdss.spec_obj WITHIN 0 ARCSEC"),
        PlanError::InvalidTolerance(0.0)
    );
    assert!(matches!(err("SELECT * FROM sdss.photo_obj XMATCH sdss.photo_obj WITHIN 1 ARCSEC"), PlanError::DuplicateSource(_)));
    assert_eq!(err("SELECT id, id FROM sdss.photo_obj"), PlanError::DuplicateOutput("id".into()));
}

#[test]
fn single_source_plan_shape() {
    let arch = archives(100, 1);
    let p = plan(&parse("SELECT id FROM sdss.photo_obj WHERE CONE(180.0, 0.0, 1.0) LIMIT 10").unwrap(), &arch).unwrap();
    assert_eq!(p.steps, vec![PlanStep::Fetch { source: 0 }, PlanStep::Truncate { limit: 10 }]);
    assert!(p.region.is_some());
    let p = plan(&parse("SELECT * FROM sdss.photo_obj").unwrap(), &arch).unwrap();
    assert_eq!(p.steps, vec![PlanStep::Fetch { source: 0 }]);
    assert_eq!(p.columns().len(), PHOTO_COLUMNS.len());
}

#[test]
fn crossmatch_seeds_from_smallest_source() {
    let big = spine_edition(&SynthSpec::new(2_000, 1));
    let small = spine_edition(&SynthSpec::new(200, 2));
    let arch = LocalArchives::new().with("a", big).with("b", small);
    let p = plan(&parse("SELECT * FROM a.photo_obj XMATCH b.photo_obj WITHIN 2 ARCSEC").unwrap(), &arch).unwrap();
    assert_eq!(
        p.steps,
        vec![PlanStep::Fetch { source: 1 }, PlanStep::CrossMatch { source: 0, tolerance_arcsec: 2.0 }]
    );
    // Output keeps declared order: a's columns, its separation, then b's.
    let names: Vec<String> = p.columns().into_iter().map(|c| c.name).collect();
    assert_eq!(names[0], "a_id");
    assert_eq!(names[PHOTO_COLUMNS.len()], "a_sep_arcsec");
    assert_eq!(names[PHOTO_COLUMNS.len() + 1], "b_id");

    let p = plan(&parse("SELECT b.id, a.id, a.sep_arcsec FROM a.photo_obj XMATCH b.photo_obj WITHIN 2 ARCSEC").unwrap(), &arch)
        .unwrap();
    let names: Vec<String> = p.columns().into_iter().map(|c| c.name).collect();
    assert_eq!(names, vec!["b_id", "a_id", "a_sep_arcsec"]);
}

#[test]
fn crossmatch_in_one_archive_uses_table_labels() {
    let arch = archives(3_000, 12);
    let res = run(
        "SELECT photo_obj.id, spec_obj.id, spec_obj.sep_arcsec FROM sdss.photo_obj XMATCH sdss.spec_obj WITHIN 1 ARCSEC",
        &arch,
        ExecLimits::unlimited(),
    )
    .unwrap();
    let rows = spine_rows(&SynthSpec::new(3_000, 12));
    // Every spectrum sits under half an arcsecond from its object, so the
    // match recovers (almost always exactly) the foreign key.
    let linked: Vec<(i64, i64)> = rows
        .photo_obj
        .iter()
        .filter_map(|r| Some((r[0].as_i64()?, r[10].as_i64()?)))
        .collect();
    assert!(res.rows.len() >= linked.len() * 99 / 100, "{} of {}", res.rows.len(), linked.len());
    let agree = res
        .rows
        .iter()
        .filter(|r| linked.contains(&(r[0].as_i64().unwrap(), r[1].as_i64().unwrap())))
        .count();
    assert!(agree >= linked.len() * 99 / 100);
    assert!(res.rows.iter().all(|r| r[2].as_f64().unwrap() <= 1.0));
    // The seed is the smaller table, so rows follow spectrum ids.
    let sids: Vec<i64> = res.rows.iter().map(|r| r[1].as_i64().unwrap()).collect();
    assert!(sids.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn manual_clock_never_expires() {
    let arch = archives(20_000, 4);
    let clock = ManualClock::new(Duration::from_secs(5));
    let ctx = ExecContext { access: &arch, clock: &clock, workspace: None };
    let p = plan(&parse("SELECT * FROM sdss.photo_obj").unwrap(), &arch).unwrap();
    let limits = ExecLimits { elapsed: Duration::ZERO, row_cap: u64::MAX };
    assert_eq!(execute(&p, &limits, &ctx).unwrap().rows.len(), 20_000);
}

// Round trip of the canonical printer over generated queries.

const KEYWORDS: &[&str] = &[
    "select", "from", "xmatch", "within", "arcsec", "where", "and", "or", "not", "limit", "into", "cone", "true",
    "false",
];

fn ident() -> impl Strategy<Value = String> {
    "[A-Za-z_][A-Za-z0-9_]{0,8}".prop_filter("keyword", |s| !KEYWORDS.contains(&s.to_ascii_lowercase().as_str()))
}

fn real() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        (-1000i32..1000).prop_map(|v| v as f64 / 8.0),
    ]
}

fn literal() -> impl Strategy<Value = Literal> {
    prop_oneof![
        any::<i64>().prop_map(Literal::Int),
        real().prop_map(Literal::Real),
        "[ -~\\n\u{e9}]{0,12}".prop_map(Literal::Text),
        any::<bool>().prop_map(Literal::Bool),
    ]
}

fn column() -> impl Strategy<Value = ColumnRef> {
    (proptest::option::of(ident()), ident()).prop_map(|(qualifier, name)| ColumnRef { qualifier, name })
}

fn source() -> impl Strategy<Value = SourceRef> {
    (ident(), ident()).prop_map(|(archive, table)| SourceRef { archive, table })
}

fn op() -> impl Strategy<Value = CompareOp> {
    prop_oneof![
        Just(CompareOp::Eq),
        Just(CompareOp::Ne),
        Just(CompareOp::Lt),
        Just(CompareOp::Le),
        Just(CompareOp::Gt),
        Just(CompareOp::Ge),
    ]
}

fn predicate() -> impl Strategy<Value = Predicate> {
    prop_oneof![
        (real(), real(), real()).prop_map(|(ra, dec, radius)| Predicate::Cone { ra, dec, radius }),
        (column(), op(), literal()).prop_map(|(column, op, value)| Predicate::Compare { column, op, value }),
    ]
}

fn query() -> impl Strategy<Value = QueryAst> {
    (
        prop_oneof![Just(Selection::Star), proptest::collection::vec(column(), 1..4).prop_map(Selection::Columns)],
        source(),
        proptest::option::of(
            (proptest::collection::vec(source(), 1..3), real())
                .prop_map(|(sources, tolerance_arcsec)| XMatchClause { sources, tolerance_arcsec }),
        ),
        proptest::collection::vec(predicate(), 0..4),
        proptest::option::of(1..=i64::MAX as u64),
        proptest::option::of(
            (proptest::option::of(ident()), ident()).prop_map(|(db, table)| IntoTarget { db, table }),
        ),
    )
        .prop_map(|(select, source, xmatch, predicates, limit, into)| QueryAst {
            select,
            source,
            xmatch,
            predicates,
            limit,
            into,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn canonical_print_round_trips(q in query()) {
        let text = q.to_string();
        let back = parse(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        prop_assert_eq!(&back, &q);
        prop_assert_eq!(back.to_string(), text);
    }

    #[test]
    fn keyword_case_does_not_matter(q in query()) {
        let text = q.to_string();
        // Lowercase everything outside string literals.
        let mut lowered = String::new();
        let mut in_str = false;
        for ch in text.chars() {
            if ch == '\'' {
                in_str = !in_str;
            }
            lowered.push(if in_str { ch } else { ch.to_ascii_lowercase() });
        }
        let back = parse(&lowered);
        // Identifiers are case-sensitive, so only compare the shape.
        prop_assert!(back.is_ok(), "{}", lowered);
        let back = back.unwrap();
        prop_assert_eq!(back.predicates.len(), q.predicates.len());
        prop_assert_eq!(back.limit, q.limit);
    }
}

#[test]
fn fetch_requests_survive_translation_to_query_text() {
    let arch = archives(5_000, 17);
    let ed = arch.get("sdss").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let clock = SystemClock;
    for _ in 0..200 {
        let mut req = FetchRequest::table("photo_obj");
        if rng.random_bool(0.7) {
            let c = skyfed_core::catalog::synth::random_coord(&mut rng);
            req.cone = Some(skyfed_core::sphere::Cone::new(c, rng.random_range(0.0..30.0)).unwrap());
        }
        if rng.random_bool(0.5) {
            req.filters.push(Filter { column: "mag_r".into(), op: CompareOp::Lt, value: Value::Real(rng.random_range(14.0..23.0)) });
        }
        if rng.random_bool(0.3) {
            req.filters.push(Filter { column: "obj_type".into(), op: CompareOp::Eq, value: Value::Text("it's".into()) });
        }
        if rng.random_bool(0.3) {
            req.filters.push(Filter { column: "saturated".into(), op: CompareOp::Ne, value: Value::Flag(true) });
        }
        if rng.random_bool(0.5) {
            req.max_rows = Some(rng.random_range(1..50));
        }
        let direct = fetch_local("sdss", ed, &req, &skyfed_core::clock::Budget::unlimited(&clock)).unwrap();
        let text = req.to_query("sdss");
        let via = run(&text, &arch, ExecLimits::unlimited()).unwrap();
        assert_eq!(via.rows, direct.rows, "{text}");
        assert_eq!(via.truncated, direct.truncated, "{text}");
        assert_eq!(via.columns, direct.columns);
    }
}
