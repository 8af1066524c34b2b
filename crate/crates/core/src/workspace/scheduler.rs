use std::collections::{BTreeMap, HashMap, VecDeque};
use std::panic::AssertUnwindSafe;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::archive_node::wire::{self, Document};
use crate::archive_node::Tier;
use crate::clock::Clock;
use crate::durable::{write_atomic, Journal, JournalError};
use crate::query::{
    execute, parse, plan, ArchiveAccess, ExecContext, ExecError, ExecLimits, IntoTarget, QueryAst, RegistryView, TableResult,
};

use super::jobs::{JobQuota, JobRecord, JobState, MAX_DOUBLINGS};
use super::mydb::{validate_table_name, validate_user, Access, MyDbStore};
use super::WorkspaceError;

/// How a run ended, without its rows.
#[derive(Debug, Clone, PartialEq)]
pub enum JobOutcome {
    Succeeded { rows: u64, truncated: bool },
    Failed(String),
    QuotaExceeded(String),
}

/// One line of the job journal.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum Entry {
    Submit {
        job: JobRecord,
    },
    Start {
        id: u64,
        at: u64,
    },
    Finish {
        id: u64,
        state: JobState,
        at: u64,
        error: Option<String>,
        rows: Option<u64>,
        truncated: bool,
    },
    Cancel {
        id: u64,
        at: u64,
    },
}

/// Job records and the run queue. Every change is a journal entry, written
/// before it takes effect. Queued jobs start round-robin across owners and
/// in submission order within an owner.
pub struct JobBook {
    jobs: BTreeMap<u64, JobRecord>,
    queues: HashMap<String, VecDeque<u64>>,
    /// Owners with queued jobs, next to be served first.
    ring: VecDeque<String>,
    next_id: u64,
    max_doublings: u32,
    /// Base quotas that differ from the tier defaults.
    bases: HashMap<Tier, ExecLimits>,
    journal: Option<Journal>,
}

impl JobBook {
    pub fn in_memory(max_doublings: u32) -> JobBook {
        JobBook {
            jobs: BTreeMap::new(),
            queues: HashMap::new(),
            ring: VecDeque::new(),
            next_id: 1,
            max_doublings,
            bases: HashMap::new(),
            journal: None,
        }
    }

    /// Replaces the base quota of `tier` for jobs submitted from now on.
    pub fn set_base(&mut self, tier: Tier, limits: ExecLimits) {
        self.bases.insert(tier, limits);
    }

    pub fn base(&self, tier: Tier) -> ExecLimits {
        self.bases.get(&tier).copied().unwrap_or_else(|| tier.limits())
    }

    /// Replays the journal at `path`. Jobs that were running when the
    /// previous process stopped are failed; queued jobs stay queued.
    pub fn open(path: impl AsRef<Path>, max_doublings: u32, now: u64) -> Result<JobBook, WorkspaceError> {
        let (journal, entries) = Journal::open(path)?;
        let mut book = JobBook::in_memory(max_doublings);
        for (i, entry) in entries.into_iter().enumerate() {
            let rec = book
                .stage(&entry)
                .map_err(|e| WorkspaceError::Corrupt { line: i + 1, detail: e.to_string() })?;
            book.install(&entry, rec);
        }
        book.journal = Some(journal);
        let running: Vec<u64> = book.jobs.values().filter(|j| j.state == JobState::Running).map(|j| j.id).collect();
        for id in running {
            book.finish(id, JobOutcome::Failed("interrupted by service restart".into()), now)?;
        }
        Ok(book)
    }

    pub fn max_doublings(&self) -> u32 {
        self.max_doublings
    }

    /// The record an entry would produce, or why it is refused.
    fn stage(&self, entry: &Entry) -> Result<JobRecord, WorkspaceError> {
        match entry {
            Entry::Submit { job } => {
                if job.id < self.next_id || job.state != JobState::Queued {
                    return Err(WorkspaceError::Corrupt { line: 0, detail: format!("job {} out of order", job.id) });
                }
                Ok(job.clone())
            }
            Entry::Start { id, at } => self.moved(*id, JobState::Running, *at),
            Entry::Cancel { id, at } => self.moved(*id, JobState::Cancelled, *at),
            Entry::Finish { id, state, at, error, rows, truncated } => {
                if !matches!(state, JobState::Succeeded | JobState::Failed | JobState::QuotaExceeded) {
                    return Err(WorkspaceError::IllegalTransition {
                        id: *id,
                        from: self.get(*id)?.state,
                        to: *state,
                    });
                }
                let mut rec = self.moved(*id, *state, *at)?;
                rec.error = error.clone();
                rec.rows = *rows;
                rec.truncated = *truncated;
                Ok(rec)
            }
        }
    }

    fn moved(&self, id: u64, to: JobState, at: u64) -> Result<JobRecord, WorkspaceError> {
        let mut rec = self.get(id)?;
        rec.transition(to, at).map_err(|e| WorkspaceError::IllegalTransition { id, from: e.from, to: e.to })?;
        Ok(rec)
    }

    fn install(&mut self, entry: &Entry, rec: JobRecord) {
        let owner = rec.owner.clone();
        match entry {
            Entry::Submit { .. } => {
                self.next_id = rec.id + 1;
                let q = self.queues.entry(owner.clone()).or_default();
                q.push_back(rec.id);
                if q.len() == 1 {
                    self.ring.push_back(owner);
                }
            }
            Entry::Start { .. } | Entry::Cancel { .. } => {
                let served = matches!(entry, Entry::Start { .. });
                let q = self.queues.get_mut(&owner).expect("queued job has a queue");
                q.retain(|&j| j != rec.id);
                let empty = q.is_empty();
                let pos = self.ring.iter().position(|o| *o == owner).expect("queued owner is in the ring");
                self.ring.remove(pos);
                if empty {
                    self.queues.remove(&owner);
                } else if served {
                    self.ring.push_back(owner);
                } else {
                    self.ring.insert(pos, owner);
                }
            }
            Entry::Finish { .. } => {}
        }
        self.jobs.insert(rec.id, rec);
    }

    fn commit(&mut self, entry: Entry) -> Result<JobRecord, WorkspaceError> {
        let rec = self.stage(&entry)?;
        if let Some(j) = &self.journal {
            j.append(&entry)?;
        }
        self.install(&entry, rec.clone());
        Ok(rec)
    }

    /// Queues a job whose query text is already canonical.
    pub fn submit(
        &mut self,
        owner: &str,
        query: &str,
        tier: Tier,
        target: Option<IntoTarget>,
        now: u64,
    ) -> Result<JobRecord, WorkspaceError> {
        validate_user(owner)?;
        let job = JobRecord {
            id: self.next_id,
            owner: owner.to_string(),
            query: query.to_string(),
            tier,
            quota: JobQuota::scaled(self.base(tier), 0),
            doublings_used: 0,
            state: JobState::Queued,
            submitted: now,
            started: None,
            finished: None,
            target,
            error: None,
            rows: None,
            truncated: false,
            rerun_of: None,
        };
        self.commit(Entry::Submit { job })
    }

    /// Queues a copy of a quota-exceeded job with its quota doubled.
    pub fn rerun(&mut self, id: u64, now: u64) -> Result<JobRecord, WorkspaceError> {
        let prior = self.get(id)?;
        if prior.state != JobState::QuotaExceeded {
            return Err(WorkspaceError::NotQuotaExceeded { id, state: prior.state });
        }
        if prior.doublings_used >= self.max_doublings {
            return Err(WorkspaceError::DoublingLimit { id, max: self.max_doublings });
        }
        let doublings = prior.doublings_used + 1;
        let job = JobRecord {
            id: self.next_id,
            quota: JobQuota::scaled(self.base(prior.tier), doublings),
            doublings_used: doublings,
            state: JobState::Queued,
            submitted: now,
            started: None,
            finished: None,
            error: None,
            rows: None,
            truncated: false,
            rerun_of: Some(id),
            ..prior
        };
        self.commit(Entry::Submit { job })
    }

    pub fn cancel(&mut self, id: u64, now: u64) -> Result<JobRecord, WorkspaceError> {
        self.commit(Entry::Cancel { id, at: now })
    }

    /// Marks the next job in round-robin order running.
    pub fn start_next(&mut self, now: u64) -> Result<Option<JobRecord>, WorkspaceError> {
        let Some(owner) = self.ring.front() else { return Ok(None) };
        let id = self.queues[owner][0];
        self.commit(Entry::Start { id, at: now }).map(Some)
    }

    pub fn finish(&mut self, id: u64, outcome: JobOutcome, now: u64) -> Result<JobRecord, WorkspaceError> {
        let (state, error, rows, truncated) = match outcome {
            JobOutcome::Succeeded { rows, truncated } => (JobState::Succeeded, None, Some(rows), truncated),
            JobOutcome::Failed(m) => (JobState::Failed, Some(m), None, false),
            JobOutcome::QuotaExceeded(m) => (JobState::QuotaExceeded, Some(m), None, false),
        };
        self.commit(Entry::Finish { id, state, at: now, error, rows, truncated })
    }

    pub fn get(&self, id: u64) -> Result<JobRecord, WorkspaceError> {
        self.jobs.get(&id).cloned().ok_or(WorkspaceError::UnknownJob(id))
    }

    /// Jobs in id order, optionally narrowed to one owner and one state.
    pub fn list(&self, owner: Option<&str>, state: Option<JobState>) -> Vec<JobRecord> {
        self.jobs
            .values()
            .filter(|j| owner.is_none_or(|o| j.owner == o) && state.is_none_or(|s| j.state == s))
            .cloned()
            .collect()
    }

    pub fn queued(&self) -> usize {
        self.queues.values().map(VecDeque::len).sum()
    }

    pub fn running(&self) -> usize {
        self.jobs.values().filter(|j| j.state == JobState::Running).count()
    }
}

/// What a worker gets back from running a job.
#[derive(Debug, Clone, PartialEq)]
pub enum RunOutput {
    Succeeded(TableResult),
    Failed(String),
    QuotaExceeded(String),
}

/// Executes job queries on behalf of the scheduler.
pub trait JobRunner: Send + Sync {
    /// Checks a parsed submission before it is queued.
    fn admit(&self, owner: &str, query: &QueryAst) -> Result<(), WorkspaceError>;
    fn run(&self, job: &JobRecord) -> RunOutput;
}

/// Runs jobs with the query engine, depositing `INTO` results in the
/// owner's workspace.
pub struct QueryRunner {
    pub registry: Arc<dyn RegistryView + Send + Sync>,
    pub access: Arc<dyn ArchiveAccess>,
    pub clock: Arc<dyn Clock>,
    pub mydb: Arc<MyDbStore>,
}

impl JobRunner for QueryRunner {
    fn admit(&self, owner: &str, query: &QueryAst) -> Result<(), WorkspaceError> {
        if let Some(into) = &query.into {
            validate_table_name(&into.table)?;
            self.mydb.authorize(owner, into.db.as_deref().unwrap_or(owner), Access::Write)?;
        }
        Ok(())
    }

    fn run(&self, job: &JobRecord) -> RunOutput {
        let ast = match parse(&job.query) {
            Ok(a) => a,
            Err(e) => return RunOutput::Failed(e.to_string()),
        };
        let p = match plan(&ast, &*self.registry) {
            Ok(p) => p,
            Err(e) => return RunOutput::Failed(e.to_string()),
        };
        let ws = self.mydb.as_user(&job.owner);
        let ctx = ExecContext { access: &*self.access, clock: &*self.clock, workspace: Some(&ws) };
        match execute(&p, &job.limits(), &ctx) {
            Ok(r) => RunOutput::Succeeded(r),
            Err(ExecError::Quota(b)) => RunOutput::QuotaExceeded(b.to_string()),
            Err(e) => RunOutput::Failed(e.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SchedulerConfig {
    pub workers: usize,
    pub max_doublings: u32,
    /// Holds the job journal and stored results; in memory when absent.
    pub state_dir: Option<PathBuf>,
    pub start_paused: bool,
    /// Base quotas that differ from the tier defaults.
    pub bases: Vec<(Tier, ExecLimits)>,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig { workers: 2, max_doublings: MAX_DOUBLINGS, state_dir: None, start_paused: false, bases: Vec::new() }
    }
}

struct Inner {
    book: JobBook,
    paused: bool,
    shutdown: bool,
}

struct Shared {
    inner: Mutex<Inner>,
    changed: Condvar,
    runner: Arc<dyn JobRunner>,
    clock: Arc<dyn Clock>,
    results: Mutex<HashMap<u64, Arc<TableResult>>>,
    results_dir: Option<PathBuf>,
}

impl Shared {
    fn now(&self) -> u64 {
        self.clock.now().as_millis() as u64
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// Batch scheduler: a bounded pool of workers draining a [`JobBook`].
/// Status reads only take the book lock briefly; jobs run outside it.
pub struct Scheduler {
    shared: Arc<Shared>,
    workers: Vec<JoinHandle<()>>,
}

impl Scheduler {
    pub fn start(config: SchedulerConfig, runner: Arc<dyn JobRunner>, clock: Arc<dyn Clock>) -> Result<Scheduler, WorkspaceError> {
        let now = clock.now().as_millis() as u64;
        let (mut book, results_dir) = match &config.state_dir {
            Some(dir) => {
                let results = dir.join("results");
                std::fs::create_dir_all(&results).map_err(|e| WorkspaceError::Io(e.to_string()))?;
                (JobBook::open(dir.join("jobs.jsonl"), config.max_doublings, now)?, Some(results))
            }
            None => (JobBook::in_memory(config.max_doublings), None),
        };
        for (tier, limits) in &config.bases {
            book.set_base(*tier, *limits);
        }
        let shared = Arc::new(Shared {
            inner: Mutex::new(Inner { book, paused: config.start_paused, shutdown: false }),
            changed: Condvar::new(),
            runner,
            clock,
            results: Mutex::new(HashMap::new()),
            results_dir,
        });
        let workers = (0..config.workers.max(1))
            .map(|i| {
                let s = shared.clone();
                std::thread::Builder::new()
                    .name(format!("job-worker-{i}"))
                    .spawn(move || worker(&s))
                    .expect("spawn job worker")
            })
            .collect();
        Ok(Scheduler { shared, workers })
    }

    /// Parses, admits and queues a job. Unparseable queries are rejected
    /// without being queued.
    pub fn submit(&self, owner: &str, text: &str, tier: Tier) -> Result<JobRecord, WorkspaceError> {
        let ast = parse(text)?;
        self.shared.runner.admit(owner, &ast)?;
        let now = self.shared.now();
        let rec = self.shared.lock().book.submit(owner, &ast.canonical(), tier, ast.into.clone(), now)?;
        self.shared.changed.notify_all();
        Ok(rec)
    }

    pub fn rerun(&self, id: u64) -> Result<JobRecord, WorkspaceError> {
        let now = self.shared.now();
        let rec = self.shared.lock().book.rerun(id, now)?;
        self.shared.changed.notify_all();
        Ok(rec)
    }

    pub fn cancel(&self, id: u64) -> Result<JobRecord, WorkspaceError> {
        let now = self.shared.now();
        let rec = self.shared.lock().book.cancel(id, now)?;
        self.shared.changed.notify_all();
        Ok(rec)
    }

    pub fn status(&self, id: u64) -> Result<JobRecord, WorkspaceError> {
        self.shared.lock().book.get(id)
    }

    pub fn list(&self, owner: Option<&str>, state: Option<JobState>) -> Vec<JobRecord> {
        self.shared.lock().book.list(owner, state)
    }

    pub fn max_doublings(&self) -> u32 {
        self.shared.lock().book.max_doublings()
    }

    /// Rows of a succeeded job without an `INTO` target.
    pub fn result(&self, id: u64) -> Result<Arc<TableResult>, WorkspaceError> {
        let rec = self.status(id)?;
        let none = |reason: &str| WorkspaceError::NoResult { id, reason: reason.to_string() };
        if rec.state != JobState::Succeeded {
            return Err(none(&format!("job is {}", rec.state)));
        }
        if let Some(t) = &rec.target {
            return Err(none(&format!("result was deposited into {}", t.table)));
        }
        if let Some(r) = self.shared.results.lock().unwrap().get(&id) {
            return Ok(r.clone());
        }
        let path = self.shared.results_dir.as_ref().map(|d| d.join(format!("{id}.json")));
        let text = path.and_then(|p| std::fs::read_to_string(p).ok()).ok_or_else(|| none("result is no longer stored"))?;
        match wire::from_json(&text) {
            Ok(Document::Table(t)) => Ok(Arc::new(t)),
            _ => Err(none("stored result is unreadable")),
        }
    }

    pub fn pause(&self) {
        self.shared.lock().paused = true;
    }

    pub fn resume(&self) {
        self.shared.lock().paused = false;
        self.shared.changed.notify_all();
    }

    /// Blocks until the job is terminal or the timeout passes, returning
    /// the latest record either way.
    pub fn wait(&self, id: u64, timeout: Duration) -> Result<JobRecord, WorkspaceError> {
        let deadline = Instant::now() + timeout;
        let mut g = self.shared.lock();
        loop {
            let rec = g.book.get(id)?;
            let left = deadline.saturating_duration_since(Instant::now());
            if rec.state.is_terminal() || left.is_zero() {
                return Ok(rec);
            }
            g = self.shared.changed.wait_timeout(g, left).unwrap().0;
        }
    }

    /// Blocks until nothing is queued or running; false on timeout.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut g = self.shared.lock();
        loop {
            if g.book.queued() == 0 && g.book.running() == 0 {
                return true;
            }
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return false;
            }
            g = self.shared.changed.wait_timeout(g, left).unwrap().0;
        }
    }
}

impl Drop for Scheduler {
    fn drop(&mut self) {
        self.shared.lock().shutdown = true;
        self.shared.changed.notify_all();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

fn worker(s: &Shared) {
    loop {
        let job = {
            let mut g = s.lock();
            loop {
                if g.shutdown {
                    return;
                }
                if !g.paused {
                    let now = s.now();
                    match g.book.start_next(now) {
                        Ok(Some(job)) => break job,
                        Ok(None) => {}
                        // The journal refused the write; try again later.
                        Err(_) => {
                            g = s.changed.wait_timeout(g, Duration::from_millis(100)).unwrap().0;
                            continue;
                        }
                    }
                }
                g = s.changed.wait(g).unwrap();
            }
        };
        s.changed.notify_all();
        let output = std::panic::catch_unwind(AssertUnwindSafe(|| s.runner.run(&job)))
            .unwrap_or_else(|_| RunOutput::Failed("job runner panicked".into()));
        let outcome = match output {
            RunOutput::Succeeded(r) => {
                let outcome = JobOutcome::Succeeded { rows: r.rows.len() as u64, truncated: r.truncated };
                if job.target.is_none() {
                    store_result(s, job.id, r)
                } else {
                    outcome
                }
            }
            RunOutput::Failed(m) => JobOutcome::Failed(m),
            RunOutput::QuotaExceeded(m) => JobOutcome::QuotaExceeded(m),
        };
        let now = s.now();
        // A failed journal write leaves the job running; replay fails it.
        let _ = s.lock().book.finish(job.id, outcome, now);
        s.changed.notify_all();
    }
}

fn store_result(s: &Shared, id: u64, r: TableResult) -> JobOutcome {
    let outcome = JobOutcome::Succeeded { rows: r.rows.len() as u64, truncated: r.truncated };
    if let Some(dir) = &s.results_dir {
        let text = wire::to_json(&Document::Table(r.clone()));
        if let Err(e) = write_atomic(&dir.join(format!("{id}.json")), text.as_bytes()) {
            return JobOutcome::Failed(format!("storing result: {e}"));
        }
    }
    s.results.lock().unwrap().insert(id, Arc::new(r));
    outcome
}

impl From<JournalError> for WorkspaceError {
    fn from(e: JournalError) -> WorkspaceError {
        match e {
            JournalError::Corrupt { line, detail } => WorkspaceError::Corrupt { line, detail },
            JournalError::Io(m) => WorkspaceError::Io(m),
        }
    }
}
