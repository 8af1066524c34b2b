use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use skyfed_core::archive_node::{Document, ServiceError, Tier, UNAVAILABLE};
use skyfed_core::bench::{self, BenchConfig, BenchError, BenchReport, LocalService, QueryService};
use skyfed_core::capacity::{yearly_outlay, ModelParams};
use skyfed_core::catalog::synth::{spine_csv, SynthSpec};
use skyfed_core::catalog::{make_pyramid, spine_schema, CatalogStore, LoadInput, Schema};
use skyfed_core::query::{ExecLimits, TableResult};
use skyfed_server::client::{join, Client};

use crate::config::CliConfig;
use crate::{emit, read_file, CliError, ReportFormat};

pub fn load(store: &Path, schema: Option<&Path>, inputs: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    let schema = match schema {
        Some(p) => Schema::from_toml(&read_file(p)?).map_err(|e| CliError::Local(format!("schema {}: {e}", p.display())))?,
        None => spine_schema(),
    };
    let mut streams = Vec::with_capacity(inputs.len());
    for spec in inputs {
        let (table, path) =
            spec.split_once('=').ok_or_else(|| CliError::Usage(format!("expected table=path, got {spec}")))?;
        let f = File::open(path).map_err(|e| CliError::Local(format!("cannot open {path}: {e}")))?;
        streams.push(LoadInput::new(table, BufReader::new(f)));
    }
    let store = open_store(store)?;
    let (_, report) = store.load(&schema, streams).map_err(|e| CliError::Local(e.to_string()))?;
    let mut text = serde_json::to_string_pretty(&report).expect("serializable");
    text.push('\n');
    emit(None, text.as_bytes(), out)
}

pub fn synth(rows: usize, seed: u64, dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let (spec, photo) = spine_csv(&SynthSpec::new(rows, seed));
    std::fs::create_dir_all(dir).map_err(|e| CliError::Local(format!("cannot create {}: {e}", dir.display())))?;
    let mut listing = String::new();
    for (name, bytes) in [("spec_obj", spec), ("photo_obj", photo)] {
        let path = dir.join(format!("{name}.csv"));
        emit(Some(&path), &bytes, out)?;
        writeln!(listing, "{name}={}", path.display()).unwrap();
    }
    emit(None, listing.as_bytes(), out)
}

fn open_store(dir: &Path) -> Result<CatalogStore, CliError> {
    CatalogStore::open(dir).map_err(|e| CliError::Local(format!("store {}: {e}", dir.display())))
}

pub fn pyramid(store: &Path, fractions: &[f64], dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let edition = open_store(store)?.open_current().map_err(|e| CliError::Local(format!("store {}: {e}", store.display())))?;
    let levels = make_pyramid(&edition, fractions).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut csv = String::from("fraction,edition,rows,checksum\n");
    for (f, level) in fractions.iter().zip(levels) {
        let rows: usize = level.tables().map(|t| t.len()).sum();
        let published = open_store(&dir.join(f.to_string()))?
            .publish(level)
            .map_err(|e| CliError::Local(format!("writing fraction {f}: {e}")))?;
        writeln!(csv, "{f},{},{rows},{}", published.number(), published.checksum()).unwrap();
    }
    emit(None, csv.as_bytes(), out)
}

pub fn capacity(params: &Path, path: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let p = ModelParams::from_toml(&read_file(params)?).map_err(|e| CliError::Local(format!("{}: {e}", params.display())))?;
    let projection = yearly_outlay(&p).map_err(|e| CliError::Local(e.to_string()))?;
    emit(path, projection.to_csv().as_bytes(), out)
}

/// Bench queries sent to the portal's /query endpoint.
struct PortalService {
    client: Client,
    url: String,
    tier: Tier,
}

impl QueryService for PortalService {
    fn run_query(&self, text: &str) -> Result<TableResult, ServiceError> {
        let params = [("format", "json".to_string()), ("tier", self.tier.name().to_string())];
        let resp = self
            .client
            .post(&self.url, &params, text.as_bytes(), "text/plain")
            .map_err(|e| ServiceError::new(UNAVAILABLE, format!("{}: {e}", self.url)))?;
        match resp.document() {
            Document::Table(t) if resp.is_success() => Ok(t),
            _ => Err(resp.service_error()),
        }
    }
}

pub struct BenchOptions {
    pub suite: Option<PathBuf>,
    pub bench_config: Option<PathBuf>,
    pub rows: Option<usize>,
    pub remote: bool,
    pub reload: bool,
    pub speedup: bool,
    pub format: ReportFormat,
    pub out: Option<PathBuf>,
}

fn bench_error(e: BenchError) -> CliError {
    match e {
        BenchError::Unreachable(m) => CliError::Transport(m),
        e => CliError::Local(e.to_string()),
    }
}

pub fn bench(cfg: &CliConfig, opts: &BenchOptions, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let mut config = match &opts.bench_config {
        Some(p) => BenchConfig::from_toml(&read_file(p)?).map_err(|e| CliError::Local(format!("{}: {e}", p.display())))?,
        None => BenchConfig::default(),
    };
    if let Some(rows) = opts.rows {
        config.edition_rows = rows;
    }
    let mut suite = match &opts.suite {
        Some(p) => bench::parse_suite(&read_file(p)?).map_err(bench_error)?,
        None => bench::bundled_suite(),
    };
    config.apply(&mut suite);

    let needs_local = !opts.remote || opts.speedup;
    let edition = needs_local.then(|| {
        let _ = writeln!(err, "generating {} objects (seed {})", config.edition_rows, config.seed);
        bench::bench_edition(&config)
    });
    let queries = if opts.remote {
        let portal = cfg.portal.as_deref().ok_or_else(|| CliError::Usage("--remote needs a portal".into()))?;
        let service = PortalService { client: Client::new(cfg.credentials.clone()), url: join(portal, "query"), tier: cfg.tier };
        bench::run_suite(&suite, &service)
    } else {
        let service = LocalService::new(edition.clone().expect("generated above"), ExecLimits::unlimited());
        bench::run_suite(&suite, &service)
    }
    .map_err(bench_error)?;

    let reload = if opts.reload {
        let _ = writeln!(err, "reloading {} objects", config.edition_rows);
        Some(bench::spine_reload_check(config.edition_rows, config.seed, config.reload_threshold_s).map_err(bench_error)?)
    } else {
        None
    };
    let report = BenchReport::new(queries, reload);
    let mut text = match opts.format {
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Table => report.to_table(),
    };
    let mut speedup_ok = true;
    if let (true, Some(ed)) = (opts.speedup, &edition) {
        let cones = bench::random_cones(config.speedup_cones, config.seed, 0.05..1.0);
        let s = bench::index_speedup_check(ed, "photo_obj", &cones).map_err(bench_error)?;
        speedup_ok = s.identical;
        let line = format!(
            "index speedup: {:.1}x over {} cones (indexed {:.3} ms, scan {:.3} ms, identical rows {})\n",
            s.ratio, s.cones, s.median_indexed_ms, s.median_scan_ms, s.identical
        );
        match opts.format {
            ReportFormat::Table => text.push_str(&line),
            ReportFormat::Csv => {
                let _ = err.write_all(line.as_bytes());
            }
        }
    }
    emit(opts.out.as_deref(), text.as_bytes(), out)?;
    if !report.pass || !speedup_ok {
        return Err(CliError::CheckFailed("benchmark criteria not met".into()));
    }
    Ok(())
}
