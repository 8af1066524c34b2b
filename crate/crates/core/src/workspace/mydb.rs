use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::archive_node::wire::{self, Document};
use crate::catalog::ColumnMeta;
use crate::durable::{remove_durable, write_atomic};
use crate::query::{DepositError, DepositTarget, IntoTarget, TableResult};

use super::WorkspaceError;

/// Desk-scale default; production workspaces were limited to 1 GB.
pub const DEFAULT_QUOTA_BYTES: u64 = 64 << 20;
pub const MAX_NAME_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    Read,
    Write,
}

impl Access {
    pub fn parse(s: &str) -> Option<Access> {
        match s {
            "read" => Some(Access::Read),
            "write" => Some(Access::Write),
            _ => None,
        }
    }
}

impl std::fmt::Display for Access {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Access::Read => "read",
            Access::Write => "write",
        })
    }
}

/// A user's personal database.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonalDb {
    pub owner: String,
    pub quota_bytes: u64,
    pub tables: BTreeMap<String, TableResult>,
    /// Grants to users other than the owner.
    pub acl: BTreeMap<String, Access>,
}

impl PersonalDb {
    pub fn new(owner: &str, quota_bytes: u64) -> PersonalDb {
        PersonalDb { owner: owner.to_string(), quota_bytes, tables: BTreeMap::new(), acl: BTreeMap::new() }
    }

    pub fn used_bytes(&self) -> u64 {
        self.tables.values().map(TableResult::text_bytes).sum()
    }

    pub fn access_of(&self, user: &str) -> Option<Access> {
        if user == self.owner {
            Some(Access::Write)
        } else {
            self.acl.get(user).copied()
        }
    }

    pub fn allows(&self, user: &str, need: Access) -> bool {
        self.access_of(user).is_some_and(|a| a >= need)
    }

    pub fn info(&self) -> DbInfo {
        let mut acl: BTreeMap<String, Access> = self.acl.clone();
        acl.insert(self.owner.clone(), Access::Write);
        DbInfo {
            owner: self.owner.clone(),
            quota_bytes: self.quota_bytes,
            used_bytes: self.used_bytes(),
            tables: self
                .tables
                .iter()
                .map(|(name, t)| TableSummary {
                    name: name.clone(),
                    rows: t.rows.len() as u64,
                    bytes: t.text_bytes(),
                    columns: t.columns.clone(),
                })
                .collect(),
            acl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSummary {
    pub name: String,
    pub rows: u64,
    pub bytes: u64,
    pub columns: Vec<ColumnMeta>,
}

/// Snapshot of a database's metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbInfo {
    pub owner: String,
    pub quota_bytes: u64,
    pub used_bytes: u64,
    pub tables: Vec<TableSummary>,
    /// Everyone with access, the owner included.
    pub acl: BTreeMap<String, Access>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    owner: String,
    quota_bytes: u64,
    acl: BTreeMap<String, Access>,
}

/// Identifiers usable as table names in `INTO`.
pub fn validate_table_name(name: &str) -> Result<(), WorkspaceError> {
    let mut chars = name.chars();
    let ok = chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && name.len() <= MAX_NAME_LEN;
    if ok {
        Ok(())
    } else {
        Err(WorkspaceError::BadName(name.to_string()))
    }
}

pub fn validate_user(name: &str) -> Result<(), WorkspaceError> {
    let ok = !name.is_empty()
        && name.len() <= MAX_NAME_LEN
        && !name.starts_with('.')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(WorkspaceError::BadName(name.to_string()))
    }
}

/// All personal databases. Each database has one writer at a time and any
/// number of concurrent readers. When rooted in a directory, every table is
/// a file replaced atomically, so a crash leaves each table whole or absent.
pub struct MyDbStore {
    dbs: RwLock<BTreeMap<String, Arc<RwLock<PersonalDb>>>>,
    root: Option<PathBuf>,
    default_quota: u64,
}

impl MyDbStore {
    pub fn in_memory(default_quota: u64) -> MyDbStore {
        MyDbStore { dbs: RwLock::new(BTreeMap::new()), root: None, default_quota }
    }

    /// Opens (or creates) a directory of databases. Leftover temporary files
    /// from interrupted writes are removed.
    pub fn open(root: impl AsRef<Path>, default_quota: u64) -> Result<MyDbStore, WorkspaceError> {
        let root = root.as_ref().to_path_buf();
        std::fs::create_dir_all(&root).map_err(io)?;
        let mut dbs = BTreeMap::new();
        for entry in std::fs::read_dir(&root).map_err(io)? {
            let dir = entry.map_err(io)?.path();
            let meta_path = dir.join("db.json");
            if !meta_path.is_file() {
                continue;
            }
            let meta: Meta = serde_json::from_slice(&std::fs::read(&meta_path).map_err(io)?)
                .map_err(|e| WorkspaceError::Io(format!("{}: {e}", meta_path.display())))?;
            let mut db = PersonalDb::new(&meta.owner, meta.quota_bytes);
            db.acl = meta.acl;
            let tables = dir.join("tables");
            for t in std::fs::read_dir(&tables).map_err(io)? {
                let path = t.map_err(io)?.path();
                let Some(file) = path.file_name().and_then(|n| n.to_str()) else { continue };
                if file.starts_with('.') {
                    std::fs::remove_file(&path).map_err(io)?;
                    continue;
                }
                let Some(name) = file.strip_suffix(".json") else { continue };
                let text = std::fs::read_to_string(&path).map_err(io)?;
                match wire::from_json(&text) {
                    Ok(Document::Table(t)) => {
                        db.tables.insert(name.to_string(), t);
                    }
                    Ok(Document::Error(_)) | Err(_) => {
                        return Err(WorkspaceError::Io(format!("{}: unreadable table", path.display())))
                    }
                }
            }
            dbs.insert(db.owner.clone(), Arc::new(RwLock::new(db)));
        }
        Ok(MyDbStore { dbs: RwLock::new(dbs), root: Some(root), default_quota })
    }

    pub fn default_quota(&self) -> u64 {
        self.default_quota
    }

    fn db(&self, owner: &str) -> Result<Arc<RwLock<PersonalDb>>, WorkspaceError> {
        self.dbs.read().unwrap().get(owner).cloned().ok_or_else(|| WorkspaceError::NoSuchDb(owner.to_string()))
    }

    fn db_dir(&self, owner: &str) -> Option<PathBuf> {
        self.root.as_ref().map(|r| r.join(owner))
    }

    fn save_meta(&self, db: &PersonalDb) -> Result<(), WorkspaceError> {
        if let Some(dir) = self.db_dir(&db.owner) {
            let meta = Meta { owner: db.owner.clone(), quota_bytes: db.quota_bytes, acl: db.acl.clone() };
            write_atomic(&dir.join("db.json"), &serde_json::to_vec_pretty(&meta).unwrap()).map_err(io)?;
        }
        Ok(())
    }

    fn save_table(&self, owner: &str, name: &str, table: &TableResult) -> Result<(), WorkspaceError> {
        if let Some(dir) = self.db_dir(owner) {
            let text = wire::to_json(&Document::Table(table.clone()));
            write_atomic(&dir.join("tables").join(format!("{name}.json")), text.as_bytes()).map_err(io)?;
        }
        Ok(())
    }

    pub fn create(&self, owner: &str) -> Result<DbInfo, WorkspaceError> {
        self.create_with_quota(owner, self.default_quota)
    }

    pub fn create_with_quota(&self, owner: &str, quota_bytes: u64) -> Result<DbInfo, WorkspaceError> {
        validate_user(owner)?;
        let mut dbs = self.dbs.write().unwrap();
        if dbs.contains_key(owner) {
            return Err(WorkspaceError::AlreadyExists(owner.to_string()));
        }
        let db = PersonalDb::new(owner, quota_bytes);
        if let Some(dir) = self.db_dir(owner) {
            std::fs::create_dir_all(dir.join("tables")).map_err(io)?;
        }
        self.save_meta(&db)?;
        let info = db.info();
        dbs.insert(owner.to_string(), Arc::new(RwLock::new(db)));
        Ok(info)
    }

    pub fn exists(&self, owner: &str) -> bool {
        self.dbs.read().unwrap().contains_key(owner)
    }

    /// Owners of every database `user` can at least read.
    pub fn visible_to(&self, user: &str) -> Vec<String> {
        let dbs = self.dbs.read().unwrap();
        dbs.iter().filter(|(_, db)| db.read().unwrap().allows(user, Access::Read)).map(|(o, _)| o.clone()).collect()
    }

    /// Fails unless `user` holds at least `need` on `owner`'s database.
    pub fn authorize(&self, user: &str, owner: &str, need: Access) -> Result<(), WorkspaceError> {
        let db = self.db(owner)?;
        let g = db.read().unwrap();
        check(&g, user, need)
    }

    pub fn info(&self, user: &str, owner: &str) -> Result<DbInfo, WorkspaceError> {
        let db = self.db(owner)?;
        let g = db.read().unwrap();
        check(&g, user, Access::Read)?;
        Ok(g.info())
    }

    pub fn fetch(&self, user: &str, owner: &str, table: &str) -> Result<TableResult, WorkspaceError> {
        let db = self.db(owner)?;
        let g = db.read().unwrap();
        check(&g, user, Access::Read)?;
        g.tables.get(table).cloned().ok_or_else(|| no_table(owner, table))
    }

    /// Stores a new table; fails if the name is taken.
    pub fn upload(&self, user: &str, owner: &str, name: &str, table: TableResult) -> Result<TableSummary, WorkspaceError> {
        self.put(user, owner, name, table, false)
    }

    /// Stores a table, replacing any existing one of that name in one step.
    pub fn deposit(&self, user: &str, owner: &str, name: &str, table: TableResult) -> Result<TableSummary, WorkspaceError> {
        self.put(user, owner, name, table, true)
    }

    fn put(&self, user: &str, owner: &str, name: &str, table: TableResult, replace: bool) -> Result<TableSummary, WorkspaceError> {
        validate_table_name(name)?;
        let db = self.db(owner)?;
        let mut g = db.write().unwrap();
        check(&g, user, Access::Write)?;
        let old = match g.tables.get(name) {
            Some(_) if !replace => return Err(WorkspaceError::DuplicateTable { db: owner.into(), table: name.into() }),
            Some(t) => t.text_bytes(),
            None => 0,
        };
        let bytes = table.text_bytes();
        let used = g.used_bytes() - old;
        if used.saturating_add(bytes) > g.quota_bytes {
            return Err(WorkspaceError::Quota { db: owner.into(), used, needed: bytes, quota: g.quota_bytes });
        }
        self.save_table(owner, name, &table)?;
        let summary =
            TableSummary { name: name.to_string(), rows: table.rows.len() as u64, bytes, columns: table.columns.clone() };
        g.tables.insert(name.to_string(), table);
        Ok(summary)
    }

    pub fn drop_table(&self, user: &str, owner: &str, name: &str) -> Result<(), WorkspaceError> {
        let db = self.db(owner)?;
        let mut g = db.write().unwrap();
        check(&g, user, Access::Write)?;
        if !g.tables.contains_key(name) {
            return Err(no_table(owner, name));
        }
        if let Some(dir) = self.db_dir(owner) {
            remove_durable(&dir.join("tables").join(format!("{name}.json"))).map_err(io)?;
        }
        g.tables.remove(name);
        Ok(())
    }

    /// Gives `user` access to `owner`'s database. Only the owner may grant;
    /// a grant never lowers an existing level.
    pub fn grant(&self, caller: &str, owner: &str, user: &str, level: Access) -> Result<(), WorkspaceError> {
        validate_user(user)?;
        let db = self.db(owner)?;
        let mut g = db.write().unwrap();
        if caller != g.owner {
            return Err(WorkspaceError::NotOwner { user: caller.into(), db: owner.into() });
        }
        if user == g.owner {
            return Ok(());
        }
        let mut next = g.clone();
        let e = next.acl.entry(user.to_string()).or_insert(level);
        *e = (*e).max(level);
        self.save_meta(&next)?;
        *g = next;
        Ok(())
    }

    /// A deposit target acting as `user`.
    pub fn as_user<'a>(&'a self, user: &'a str) -> UserWorkspace<'a> {
        UserWorkspace { store: self, user }
    }
}

fn check(db: &PersonalDb, user: &str, need: Access) -> Result<(), WorkspaceError> {
    if db.allows(user, need) {
        Ok(())
    } else {
        Err(WorkspaceError::Denied { user: user.into(), db: db.owner.clone(), need })
    }
}

fn no_table(db: &str, table: &str) -> WorkspaceError {
    WorkspaceError::NoSuchTable { db: db.into(), table: table.into() }
}

fn io(e: std::io::Error) -> WorkspaceError {
    WorkspaceError::Io(e.to_string())
}

/// Routes `INTO` deposits to the store on behalf of one user. `INTO t`
/// targets the user's own database, `INTO owner.t` someone else's.
pub struct UserWorkspace<'a> {
    store: &'a MyDbStore,
    user: &'a str,
}

impl DepositTarget for UserWorkspace<'_> {
    fn deposit(&self, target: &IntoTarget, result: &TableResult) -> Result<(), DepositError> {
        let owner = target.db.as_deref().unwrap_or(self.user);
        self.store.deposit(self.user, owner, &target.table, result.clone()).map(|_| ()).map_err(|e| match e {
            WorkspaceError::Quota { used, needed, quota, .. } => DepositError::Quota { used: used + needed, quota },
            WorkspaceError::Denied { .. } => DepositError::Denied(format!("{owner}.{}", target.table)),
            other => DepositError::Failed(other.to_string()),
        })
    }
}
