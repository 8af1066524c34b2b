//! The `skyfed` command-line tool: queries against nodes and the portal,
//! batch jobs and workspaces, plus local loading, capacity projection and
//! benchmarking.
//!
//! Exit codes: 0 success, 1 usage or local input error, 2 transport
//! failure, 3 service error, 4 quota exceeded, 5 benchmark criteria not met.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use skyfed_core::archive_node::{ServiceError, QUOTA};

pub mod config;
mod local;
mod service;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_TRANSPORT: i32 = 2;
pub const EXIT_SERVICE: i32 = 3;
pub const EXIT_QUOTA: i32 = 4;
pub const EXIT_CHECK: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Local(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("{}: {}", .0.code, .0.message)]
    Service(ServiceError),
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Local(_) => EXIT_USAGE,
            CliError::Transport(_) => EXIT_TRANSPORT,
            CliError::Service(e) if e.code == QUOTA => EXIT_QUOTA,
            CliError::Service(_) => EXIT_SERVICE,
            CliError::CheckFailed(_) => EXIT_CHECK,
        }
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> CliError {
        CliError::Service(e)
    }
}

impl From<skyfed_server::client::TransportError> for CliError {
    fn from(e: skyfed_server::client::TransportError) -> CliError {
        CliError::Transport(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "skyfed", version, about = "Query and operate a federated astronomy archive")]
pub struct Cli {
    /// Configuration file (TOML); defaults to $SKYFED_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Portal base URL; overrides $SKYFED_PORTAL.
    #[arg(long, global = true)]
    pub portal: Option<String>,
    #[arg(long, global = true)]
    pub user: Option<String>,
    #[arg(long, global = true)]
    pub secret: Option<String>,
    /// public or collaboration.
    #[arg(long, global = true)]
    pub tier: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Xml,
    Json,
    Csv,
}

/// Which archive a cone or cutout goes to.
#[derive(Debug, Args)]
pub struct Target {
    /// Archive name: a `[archives]` entry in the config, else routed
    /// through the portal.
    #[arg(long)]
    pub archive: Option<String>,
    /// Node base URL, bypassing the portal.
    #[arg(long, conflicts_with = "archive")]
    pub endpoint: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Objects within `sr` degrees of (ra, dec).
    Cone {
        #[arg(long, allow_negative_numbers = true)]
        ra: f64,
        #[arg(long, allow_negative_numbers = true)]
        dec: f64,
        #[arg(long)]
        sr: f64,
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        table: Option<String>,
        #[arg(long, value_enum, default_value = "xml")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// A PGM image rendered from catalog positions.
    Cutout {
        #[arg(long, allow_negative_numbers = true)]
        ra: f64,
        #[arg(long, allow_negative_numbers = true)]
        dec: f64,
        #[arg(long)]
        width: Option<u32>,
        #[arg(long)]
        height: Option<u32>,
        /// Degrees per pixel.
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        table: Option<String>,
        #[arg(long)]
        band: Option<String>,
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs a query synchronously through the portal or one node.
    Query {
        text: Option<String>,
        #[arg(long, conflicts_with = "text")]
        file: Option<PathBuf>,
        /// Node base URL, bypassing the portal.
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long, value_enum, default_value = "xml")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-matches `archive.table` sources through the portal.
    Xmatch {
        /// Repeat for each source; the first is the anchor.
        #[arg(long = "source", required = true)]
        sources: Vec<String>,
        #[arg(long)]
        tolerance_arcsec: Option<f64>,
        #[arg(long, allow_negative_numbers = true, requires_all = ["dec", "sr"])]
        ra: Option<f64>,
        #[arg(long, allow_negative_numbers = true, requires_all = ["ra", "sr"])]
        dec: Option<f64>,
        #[arg(long, requires_all = ["ra", "dec"])]
        sr: Option<f64>,
        #[arg(long, value_enum, default_value = "xml")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Batch jobs on the portal.
    #[command(subcommand)]
    Job(JobCommand),
    /// Personal workspaces on the portal.
    #[command(subcommand)]
    Mydb(MydbCommand),
    /// The portal's archive registry.
    #[command(subcommand)]
    Registry(RegistryCommand),
    /// Loads delimited files into a catalog store as a new edition.
    Load {
        #[arg(long)]
        store: PathBuf,
        /// Schema TOML; the built-in spine schema when omitted.
        #[arg(long)]
        schema: Option<PathBuf>,
        /// `table=path` pairs.
        #[arg(required = true)]
        inputs: Vec<String>,
    },
    /// Writes synthetic spine catalog files (spec_obj.csv, photo_obj.csv)
    /// for `load`.
    Synth {
        #[arg(long, default_value_t = 100_000)]
        rows: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Writes nested subsets of a store's current edition, one store per
    /// fraction.
    Pyramid {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        fractions: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Projects storage purchases and outlay per year.
    Capacity {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Query-suite and reload benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Debug, Subcommand)]
pub enum JobCommand {
    /// Queues a query and prints the job record.
    Submit {
        #[arg(long, required_unless_present = "query_file")]
        query: Option<String>,
        #[arg(long, conflicts_with = "query")]
        query_file: Option<PathBuf>,
    },
    Status {
        id: u64,
        /// Polls until the job finishes. Exits 4 if it exceeded its quota
        /// and 3 if it failed or was cancelled.
        #[arg(long)]
        wait: bool,
        /// Seconds to wait before giving up.
        #[arg(long, default_value_t = 600.0)]
        timeout: f64,
    },
    /// Resubmits a quota-exceeded job with its quota doubled.
    Rerun { id: u64 },
    Cancel { id: u64 },
    /// The result table of a finished job.
    Fetch {
        id: u64,
        #[arg(long, value_enum, default_value = "xml")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    List {
        #[arg(long)]
        state: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum MydbCommand {
    /// Creates the caller's workspace.
    Create,
    /// Workspaces visible to the caller.
    List,
    Info {
        #[arg(long)]
        owner: Option<String>,
    },
    /// Uploads a CSV file as a table.
    Upload {
        name: String,
        csv: PathBuf,
        #[arg(long)]
        owner: Option<String>,
    },
    Fetch {
        name: String,
        #[arg(long)]
        owner: Option<String>,
        #[arg(long, value_enum, default_value = "xml")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grants `user` read or write access to the caller's workspace.
    Grant { user: String, level: String },
    Drop {
        name: String,
        #[arg(long)]
        owner: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum RegistryCommand {
    /// Registers a node; the portal fetches its description.
    Register { name: String, endpoint: String },
    List,
    Find { name: String },
    Remove { name: String },
    Refresh { name: String },
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Times the query suite, in process or against the portal.
    Run {
        /// Suite file; the bundled suite when omitted.
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long)]
        bench_config: Option<PathBuf>,
        /// Objects in the generated edition; overrides the bench config.
        #[arg(long)]
        rows: Option<usize>,
        /// Runs the queries through the configured portal.
        #[arg(long)]
        remote: bool,
        /// Also times a full reload of generated data.
        #[arg(long)]
        reload: bool,
        /// Also compares indexed cone selection with a full scan.
        #[arg(long)]
        speedup: bool,
        #[arg(long, value_enum, default_value = "table")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Table,
}

/// Runs a parsed command. Output goes to `out` unless a command writes a
/// file; progress notes go to `err`.
pub fn run(cli: Cli, env: &dyn Fn(&str) -> Option<String>, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let overrides = config::Overrides {
        config: cli.config,
        portal: cli.portal,
        user: cli.user,
        secret: cli.secret,
        tier: cli.tier,
    };
    let cfg = config::resolve(&overrides, env)?;
    match cli.command {
        Command::Load { store, schema, inputs } => local::load(&store, schema.as_deref(), &inputs, out),
        Command::Synth { rows, seed, out: dir } => local::synth(rows, seed, &dir, out),
        Command::Pyramid { store, fractions, out: dir } => local::pyramid(&store, &fractions, &dir, out),
        Command::Capacity { params, out: path } => local::capacity(&params, path.as_deref(), out),
        Command::Bench(BenchCommand::Run { suite, bench_config, rows, remote, reload, speedup, format, out: path }) => {
            let opts = local::BenchOptions { suite, bench_config, rows, remote, reload, speedup, format, out: path };
            local::bench(&cfg, &opts, out, err)
        }
        command => service::run(&cfg, command, out, err),
    }
}

/// Parses `args` and runs them, returning the process exit code.
pub fn main_with(
    args: impl IntoIterator<Item = String>,
    env: &dyn Fn(&str) -> Option<String>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run(cli, env, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "skyfed: {e}");
            e.exit_code()
        }
    }
}

/// Writes `bytes` to `path`, or to `out` when no path is given.
pub(crate) fn emit(path: Option<&std::path::Path>, bytes: &[u8], out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::Local(format!("cannot write {}: {e}", p.display()))),
        None => out.write_all(bytes).map_err(|e| CliError::Local(format!("cannot write output: {e}"))),
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Local(format!("cannot read {}: {e}", path.display())))
}
