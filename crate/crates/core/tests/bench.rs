use skyfed_core::archive_node::ServiceError;
use skyfed_core::bench::*;
use skyfed_core::catalog::synth::{spine_csv, spine_edition, SynthSpec};
use skyfed_core::catalog::{spine_schema, LoadInput};
use skyfed_core::query::{ExecLimits, TableResult};

fn service(rows: usize) -> LocalService {
    LocalService::new(spine_edition(&SynthSpec::new(rows, 1)), ExecLimits::unlimited())
}

#[test]
fn suite_runs_clean_on_small_edition() {
    let svc = service(200_000);
    let timings = run_suite(&bundled_suite(), &svc).unwrap();
    assert_eq!(timings.len(), 20);
    for t in &timings {
        assert!(t.error.is_none(), "query {}: {:?}", t.id, t.error);
        assert!(t.stable, "query {}", t.id);
    }
    // Every category does real work on this edition.
    for id in [1, 7, 14, 18, 20] {
        assert!(timings[id - 1].rows > 0, "query {id} returned nothing");
    }
    let info = svc.mydb.info("bench", "bench").unwrap();
    let names: Vec<&str> = info.tables.iter().map(|t| t.name.as_str()).collect();
    assert_eq!(names, vec!["bench_cone", "bench_pairs", "bench_qso"]);

    // Identical rows run to run.
    let again = run_suite(&bundled_suite(), &svc).unwrap();
    assert_eq!(timings.iter().map(|t| t.rows).collect::<Vec<_>>(), again.iter().map(|t| t.rows).collect::<Vec<_>>());
}

#[test]
fn slow_query_is_flagged() {
    let svc = service(20_000);
    let mut suite = bundled_suite();
    suite[4].threshold_ms = 0;
    let report = BenchReport::new(run_suite(&suite, &svc).unwrap(), None);
    assert!(!report.queries[4].pass);
    assert!(report.queries.iter().enumerate().all(|(i, q)| i == 4 || q.pass));
    assert!(!report.pass);
    assert!(report.to_table().contains("FAIL (over threshold)"));
}

struct Down;

impl QueryService for Down {
    fn run_query(&self, _: &str) -> Result<TableResult, ServiceError> {
        Err(ServiceError::new("unavailable", "connection refused"))
    }
}

#[test]
fn unreachable_archive_aborts() {
    assert!(matches!(run_suite(&bundled_suite(), &Down), Err(BenchError::Unreachable(_))));
}

#[test]
fn reload_check() {
    let schema = spine_schema();
    let empty = run_reload_check(&schema, Vec::new(), 300.0).unwrap();
    assert!(empty.pass);
    assert_eq!(empty.rows, 0);

    let (spec, photo) = spine_csv(&SynthSpec::new(5_000, 3));
    let load = || {
        run_reload_check(&schema, vec![LoadInput::new("spec_obj", &spec[..]), LoadInput::new("photo_obj", &photo[..])], 300.0)
            .unwrap()
    };
    let (a, b) = (load(), load());
    assert!(a.pass);
    assert_eq!(a.checksum, b.checksum);
    assert_eq!(a.rejected, 0);
    assert!(!run_reload_check(&schema, Vec::new(), 0.0).unwrap().pass);
}

#[test]
fn speedup_reported_even_when_tiny() {
    let ed = spine_edition(&SynthSpec::new(100, 2));
    let r = index_speedup_check(&ed, "photo_obj", &random_cones(20, 5, 1.0..20.0)).unwrap();
    assert!(r.identical);
    assert!(r.ratio.is_finite() && r.ratio > 0.0);
}

#[test]
fn report_serialization_is_deterministic() {
    let q = |id, elapsed_ms, pass| QueryTiming {
        id,
        category: Category::Spatial,
        threshold_ms: 1000,
        elapsed_ms,
        rows: 7,
        stable: true,
        error: None,
        pass,
    };
    let reload = ReloadReport { rows: 10, rejected: 0, elapsed_s: 1.5, threshold_s: 300.0, checksum: "x".into(), pass: true };
    let r = BenchReport::new(vec![q(1, 12.25, true), q(2, 3.0, true)], Some(reload));
    assert!(r.pass);
    assert_eq!(r.reload_elapsed_s, Some(1.5));
    assert_eq!(r.to_csv(), BenchReport::new(r.queries.clone(), r.reload.clone()).to_csv());
    assert_eq!(
        r.to_csv(),
        "id,category,threshold_ms,elapsed_ms,rows,stable,pass,error\n\
         1,spatial,1000,12.250,7,true,true,\n\
         2,spatial,1000,3.000,7,true,true,\n\
         reload,reload,300000,1500.000,10,true,true,\n"
    );
}

#[test]
fn config_overrides_thresholds() {
    let c = BenchConfig::from_toml("edition_rows = 1000\nquery_threshold_ms = 250\n").unwrap();
    assert_eq!(c.reload_threshold_s, 300.0);
    let mut s = bundled_suite();
    c.apply(&mut s);
    assert!(s.iter().all(|q| q.threshold_ms == 250));
    assert!(BenchConfig::from_toml("rows = 3\n").is_err());
}
