//! Performance regression harness: a fixed query suite timed against
//! thresholds, a full reload check, and an index speedup measurement.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::archive_node::{ServiceError, UNAVAILABLE};
use crate::catalog::synth::{random_coord, spine_csv, spine_edition, SynthSpec};
use crate::catalog::{load_edition, spine_schema, Edition, LoadInput, Schema};
use crate::clock::SystemClock;
use crate::query::{execute, parse, plan, ExecContext, ExecLimits, LocalArchives, TableResult};
use crate::sphere::Cone;
use crate::workspace::MyDbStore;

pub static BUNDLED_SUITE: &str = include_str!("../data/bench_suite.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Spatial,
    Photometric,
    Join,
    Workspace,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Spatial => "spatial",
            Category::Photometric => "photometric",
            Category::Join => "join",
            Category::Workspace => "workspace",
        }
    }

    pub fn parse(s: &str) -> Option<Category> {
        [Category::Spatial, Category::Photometric, Category::Join, Category::Workspace].into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchQuery {
    pub id: u32,
    pub text: String,
    pub category: Category,
    pub threshold_ms: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BenchError {
    #[error("suite line {line}: {detail}")]
    Suite { line: usize, detail: String },
    #[error("archive unreachable: {0}")]
    Unreachable(String),
    #[error("reload failed: {0}")]
    Load(String),
}

pub const SUITE_SIZE: usize = 20;
pub const MIN_SPATIAL: usize = 5;

/// Reads a suite file: one `id | category | threshold_ms | query` per line;
/// blank lines and `#` comments are skipped. The suite must hold exactly
/// twenty queries with ids 1..=20, at least a quarter of them spatial.
pub fn parse_suite(text: &str) -> Result<Vec<BenchQuery>, BenchError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |detail: String| BenchError::Suite { line: i + 1, detail };
        let parts: Vec<&str> = line.splitn(4, '|').map(str::trim).collect();
        let [id, cat, threshold, query] = parts[..] else {
            return Err(err("expected id | category | threshold_ms | query".into()));
        };
        let id: u32 = id.parse().map_err(|_| err(format!("bad id {id:?}")))?;
        let category = Category::parse(cat).ok_or_else(|| err(format!("unknown category {cat:?}")))?;
        let threshold_ms: u64 = threshold.parse().map_err(|_| err(format!("bad threshold {threshold:?}")))?;
        parse(query).map_err(|e| err(format!("query {id}: {e}")))?;
        out.push(BenchQuery { id, text: query.to_string(), category, threshold_ms });
    }
    let whole = |detail: String| BenchError::Suite { line: 0, detail };
    let ids: Vec<u32> = out.iter().map(|q| q.id).collect();
    if ids != (1..=SUITE_SIZE as u32).collect::<Vec<_>>() {
        return Err(whole(format!("ids must be 1..={SUITE_SIZE} in order, got {ids:?}")));
    }
    let spatial = out.iter().filter(|q| q.category == Category::Spatial).count();
    if spatial < MIN_SPATIAL {
        return Err(whole(format!("{spatial} spatial queries, need at least {MIN_SPATIAL}")));
    }
    Ok(out)
}

pub fn bundled_suite() -> Vec<BenchQuery> {
    parse_suite(BUNDLED_SUITE).expect("bundled suite is valid")
}

/// Runs query text somewhere: in process or through an archive service.
pub trait QueryService {
    fn run_query(&self, text: &str) -> Result<TableResult, ServiceError>;
}

/// In-process service over local archives, with a workspace for `INTO`.
pub struct LocalService {
    pub archives: LocalArchives,
    pub mydb: MyDbStore,
    pub user: String,
    pub limits: ExecLimits,
}

impl LocalService {
    /// The bench edition under archive "sdss" and a fresh workspace.
    pub fn new(edition: Edition, limits: ExecLimits) -> LocalService {
        let mydb = MyDbStore::in_memory(u64::MAX);
        mydb.create("bench").expect("fresh store");
        LocalService { archives: LocalArchives::new().with("sdss", edition), mydb, user: "bench".into(), limits }
    }
}

impl QueryService for LocalService {
    fn run_query(&self, text: &str) -> Result<TableResult, ServiceError> {
        let ast = parse(text)?;
        let p = plan(&ast, &self.archives)?;
        let ws = self.mydb.as_user(&self.user);
        let ctx = ExecContext { access: &self.archives, clock: &SystemClock, workspace: Some(&ws) };
        Ok(execute(&p, &self.limits, &ctx)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTiming {
    pub id: u32,
    pub category: Category,
    pub threshold_ms: u64,
    pub elapsed_ms: f64,
    pub rows: u64,
    /// The timed run returned the same rows as the warm-up.
    pub stable: bool,
    pub error: Option<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReloadReport {
    pub rows: u64,
    pub rejected: u64,
    pub elapsed_s: f64,
    pub threshold_s: f64,
    pub checksum: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub queries: Vec<QueryTiming>,
    pub reload_elapsed_s: Option<f64>,
    pub reload: Option<ReloadReport>,
    /// Every query passed, and the reload passed if it was run.
    pub pass: bool,
}

impl BenchReport {
    pub fn new(queries: Vec<QueryTiming>, reload: Option<ReloadReport>) -> BenchReport {
        let pass = queries.iter().all(|q| q.pass) && reload.as_ref().is_none_or(|r| r.pass);
        BenchReport { reload_elapsed_s: reload.as_ref().map(|r| r.elapsed_s), queries, reload, pass }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "category", "threshold_ms", "elapsed_ms", "rows", "stable", "pass", "error"]).unwrap();
        for q in &self.queries {
            w.write_record([
                q.id.to_string(),
                q.category.name().to_string(),
                q.threshold_ms.to_string(),
                format!("{:.3}", q.elapsed_ms),
                q.rows.to_string(),
                q.stable.to_string(),
                q.pass.to_string(),
                q.error.clone().unwrap_or_default(),
            ])
            .unwrap();
        }
        if let Some(r) = &self.reload {
            let ms = format!("{:.3}", r.elapsed_s * 1000.0);
            let threshold = format!("{}", (r.threshold_s * 1000.0).round() as u64);
            w.write_record(["reload", "reload", &threshold, &ms, &r.rows.to_string(), "true", &r.pass.to_string(), ""])
                .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{:>4}  {:<12} {:>10} {:>12} {:>8}  result", "id", "category", "limit ms", "elapsed ms", "rows").unwrap();
        for q in &self.queries {
            let verdict = match (&q.error, q.pass) {
                (Some(e), _) => format!("FAIL ({e})"),
                (None, true) => "ok".to_string(),
                (None, false) if !q.stable => "FAIL (rows changed between runs)".to_string(),
                (None, false) => "FAIL (over threshold)".to_string(),
            };
            writeln!(s, "{:>4}  {:<12} {:>10} {:>12.3} {:>8}  {verdict}", q.id, q.category.name(), q.threshold_ms, q.elapsed_ms, q.rows)
                .unwrap();
        }
        if let Some(r) = &self.reload {
            writeln!(
                s,
                "reload: {} rows in {:.3} s (limit {} s) {}",
                r.rows,
                r.elapsed_s,
                r.threshold_s,
                if r.pass { "ok" } else { "FAIL" }
            )
            .unwrap();
        }
        let passed = self.queries.iter().filter(|q| q.pass).count();
        writeln!(s, "{passed}/{} queries passed; overall {}", self.queries.len(), if self.pass { "PASS" } else { "FAIL" })
            .unwrap();
        s
    }
}

/// Runs each query once to warm up, then once timed, in suite order. Fails
/// outright only if the service is unreachable.
pub fn run_suite(suite: &[BenchQuery], service: &dyn QueryService) -> Result<Vec<QueryTiming>, BenchError> {
    let mut out = Vec::with_capacity(suite.len());
    for q in suite {
        let warm = service.run_query(&q.text);
        if let Err(e) = &warm {
            if e.code == UNAVAILABLE {
                return Err(BenchError::Unreachable(e.message.clone()));
            }
        }
        let start = Instant::now();
        let timed = service.run_query(&q.text);
        let elapsed_ms = start.elapsed().as_secs_f64() * 1000.0;
        let t = match (timed, warm) {
            (Ok(r), Ok(w)) => {
                let stable = r.rows == w.rows;
                let pass = stable && elapsed_ms <= q.threshold_ms as f64;
                QueryTiming { id: q.id, category: q.category, threshold_ms: q.threshold_ms, elapsed_ms, rows: r.len() as u64, stable, error: None, pass }
            }
            (Err(e), _) | (_, Err(e)) => {
                if e.code == UNAVAILABLE {
                    return Err(BenchError::Unreachable(e.message));
                }
                QueryTiming {
                    id: q.id,
                    category: q.category,
                    threshold_ms: q.threshold_ms,
                    elapsed_ms,
                    rows: 0,
                    stable: false,
                    error: Some(format!("{}: {}", e.code, e.message)),
                    pass: false,
                }
            }
        };
        out.push(t);
    }
    Ok(out)
}

/// Times a full load of delimited inputs into a fresh edition.
pub fn run_reload_check(schema: &Schema, inputs: Vec<LoadInput<'_>>, threshold_s: f64) -> Result<ReloadReport, BenchError> {
    let start = Instant::now();
    let (_, report) = load_edition(schema, inputs).map_err(|e| BenchError::Load(e.to_string()))?;
    let elapsed_s = start.elapsed().as_secs_f64();
    Ok(ReloadReport {
        rows: report.rows_loaded,
        rejected: report.rows_rejected,
        elapsed_s,
        threshold_s,
        checksum: report.checksum,
        pass: elapsed_s < threshold_s,
    })
}

/// Reload check on freshly generated spine data of `rows` objects.
pub fn spine_reload_check(rows: usize, seed: u64, threshold_s: f64) -> Result<ReloadReport, BenchError> {
    let (spec, photo) = spine_csv(&SynthSpec::new(rows, seed));
    let inputs = vec![LoadInput::new("spec_obj", &spec[..]), LoadInput::new("photo_obj", &photo[..])];
    run_reload_check(&spine_schema(), inputs, threshold_s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub cones: usize,
    pub median_indexed_ms: f64,
    pub median_scan_ms: f64,
    /// Median scan time over median indexed time.
    pub ratio: f64,
    /// Both paths returned the same rows for every cone.
    pub identical: bool,
}

/// Random cones with radii in `radius_deg`.
pub fn random_cones(n: usize, seed: u64, radius_deg: std::ops::Range<f64>) -> Vec<Cone> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Cone::new(random_coord(&mut rng), rng.random_range(radius_deg.clone())).expect("valid radius")).collect()
}

/// Compares indexed cone selection with a forced full scan.
pub fn index_speedup_check(edition: &Edition, table: &str, cones: &[Cone]) -> Result<SpeedupReport, BenchError> {
    let t = edition.table(table).map_err(|e| BenchError::Load(e.to_string()))?;
    let mut indexed = Vec::with_capacity(cones.len());
    let mut scanned = Vec::with_capacity(cones.len());
    let mut identical = true;
    for c in cones {
        let s = Instant::now();
        let a = t.cone_rows(c).map_err(|e| BenchError::Load(e.to_string()))?;
        indexed.push(s.elapsed().as_secs_f64() * 1000.0);
        let s = Instant::now();
        let b = t.cone_rows_scan(c).map_err(|e| BenchError::Load(e.to_string()))?;
        scanned.push(s.elapsed().as_secs_f64() * 1000.0);
        identical &= a == b;
    }
    let (mi, ms) = (median(&mut indexed), median(&mut scanned));
    Ok(SpeedupReport { cones: cones.len(), median_indexed_ms: mi, median_scan_ms: ms, ratio: ms / mi.max(1e-9), identical })
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Desk-scale settings; thresholds are configuration, not code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub edition_rows: usize,
    pub seed: u64,
    pub reload_threshold_s: f64,
    /// Replaces every query's threshold when set.
    pub query_threshold_ms: Option<u64>,
    pub speedup_cones: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { edition_rows: 1_000_000, seed: 1, reload_threshold_s: 300.0, query_threshold_ms: None, speedup_cones: 50 }
    }
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<BenchConfig, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn apply(&self, suite: &mut [BenchQuery]) {
        if let Some(ms) = self.query_threshold_ms {
            for q in suite {
                q.threshold_ms = ms;
            }
        }
    }
}

pub fn bench_edition(config: &BenchConfig) -> Edition {
    spine_edition(&SynthSpec::new(config.edition_rows, config.seed))
}
