use std::collections::BTreeMap;
use std::path::Path;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::archive_node::ServiceDescription;
use crate::durable::{Journal, JournalError};
use crate::query::{PlanError, RegistryView, TableInfo};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceRecord {
    pub name: String,
    /// Base URL of the archive's service endpoints.
    pub endpoint: String,
    pub description: ServiceDescription,
    /// Milliseconds since the Unix epoch.
    pub registered_at: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistryError {
    #[error("archive {0} is already registered")]
    Duplicate(String),
    #[error("unknown archive {0}")]
    Unknown(String),
    #[error("invalid endpoint {endpoint}: {reason}")]
    InvalidEndpoint { endpoint: String, reason: String },
    #[error("registry journal line {line} is corrupt: {detail}")]
    Corrupt { line: usize, detail: String },
    #[error("registry journal: {0}")]
    Io(String),
}

/// One journal line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum Entry {
    Register { record: ServiceRecord },
    Refresh { name: String, description: ServiceDescription },
    Unregister { name: String },
}

impl From<JournalError> for RegistryError {
    fn from(e: JournalError) -> RegistryError {
        match e {
            JournalError::Corrupt { line, detail } => RegistryError::Corrupt { line, detail },
            JournalError::Io(m) => RegistryError::Io(m),
        }
    }
}

pub fn validate_endpoint(endpoint: &str) -> Result<(), RegistryError> {
    let invalid = |reason: &str| RegistryError::InvalidEndpoint { endpoint: endpoint.to_string(), reason: reason.into() };
    let u = url::Url::parse(endpoint).map_err(|e| invalid(&e.to_string()))?;
    if !matches!(u.scheme(), "http" | "https") {
        return Err(invalid("scheme must be http or https"));
    }
    if u.host_str().is_none_or(str::is_empty) {
        return Err(invalid("missing host"));
    }
    if u.query().is_some() || u.fragment().is_some() {
        return Err(invalid("endpoint must not carry a query or fragment"));
    }
    Ok(())
}

/// Archive services known to the portal. Mutations are serialized and, when
/// backed by a file, appended to a journal before they take effect.
pub struct Registry {
    records: RwLock<BTreeMap<String, ServiceRecord>>,
    journal: Option<Journal>,
}

impl Registry {
    pub fn in_memory() -> Registry {
        Registry { records: RwLock::new(BTreeMap::new()), journal: None }
    }

    /// Opens (or creates) a journal-backed registry, replaying the journal.
    /// A torn final line, as left by a crash mid-append, is discarded.
    pub fn open(path: impl AsRef<Path>) -> Result<Registry, RegistryError> {
        let (journal, entries) = Journal::open(path)?;
        let mut records = BTreeMap::new();
        for entry in entries {
            apply(&mut records, entry);
        }
        Ok(Registry { records: RwLock::new(records), journal: Some(journal) })
    }

    pub fn journal_path(&self) -> Option<&Path> {
        self.journal.as_ref().map(Journal::path)
    }

    fn commit(&self, records: &mut BTreeMap<String, ServiceRecord>, entry: Entry) -> Result<(), RegistryError> {
        if let Some(j) = &self.journal {
            j.append(&entry)?;
        }
        apply(records, entry);
        Ok(())
    }

    pub fn register(&self, record: ServiceRecord) -> Result<(), RegistryError> {
        validate_endpoint(&record.endpoint)?;
        let mut records = self.records.write().unwrap();
        if records.contains_key(&record.name) {
            return Err(RegistryError::Duplicate(record.name));
        }
        self.commit(&mut records, Entry::Register { record })
    }

    /// Replaces the stored description snapshot of a registered archive.
    pub fn refresh(&self, name: &str, description: ServiceDescription) -> Result<(), RegistryError> {
        let mut records = self.records.write().unwrap();
        if !records.contains_key(name) {
            return Err(RegistryError::Unknown(name.to_string()));
        }
        self.commit(&mut records, Entry::Refresh { name: name.to_string(), description })
    }

    pub fn unregister(&self, name: &str) -> Result<(), RegistryError> {
        let mut records = self.records.write().unwrap();
        if !records.contains_key(name) {
            return Err(RegistryError::Unknown(name.to_string()));
        }
        self.commit(&mut records, Entry::Unregister { name: name.to_string() })
    }

    /// All records, sorted by name.
    pub fn list(&self) -> Vec<ServiceRecord> {
        self.records.read().unwrap().values().cloned().collect()
    }

    pub fn find(&self, name: &str) -> Result<ServiceRecord, RegistryError> {
        self.records.read().unwrap().get(name).cloned().ok_or_else(|| RegistryError::Unknown(name.to_string()))
    }
}

fn apply(records: &mut BTreeMap<String, ServiceRecord>, entry: Entry) {
    match entry {
        Entry::Register { record } => {
            records.insert(record.name.clone(), record);
        }
        Entry::Refresh { name, description } => {
            if let Some(r) = records.get_mut(&name) {
                r.description = description;
            }
        }
        Entry::Unregister { name } => {
            records.remove(&name);
        }
    }
}

impl RegistryView for Registry {
    fn table_info(&self, archive: &str, table: &str) -> Result<TableInfo, PlanError> {
        let records = self.records.read().unwrap();
        let rec = records.get(archive).ok_or_else(|| PlanError::UnknownArchive(archive.to_string()))?;
        rec.description
            .table(table)
            .cloned()
            .ok_or_else(|| PlanError::UnknownTable { archive: archive.to_string(), table: table.to_string() })
    }
}
