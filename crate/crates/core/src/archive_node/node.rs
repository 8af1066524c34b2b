use std::sync::{Arc, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::cutout::{cutout, CutoutRequest, Image};
use super::error::{ServiceError, UNKNOWN_ARCHIVE, UNSUPPORTED};
use crate::catalog::{CatalogStore, Edition};
use crate::clock::{Budget, Clock, SystemClock};
use crate::query::{
    execute, fetch_local, parse, plan, AccessError, ArchiveAccess, ExecContext, ExecLimits, FetchRequest, PlanError,
    RegistryView, TableInfo, TableResult,
};
use crate::sphere::{Cone, SkyCoord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Public,
    Collaboration,
}

impl Tier {
    pub fn limits(self) -> ExecLimits {
        match self {
            Tier::Public => ExecLimits { elapsed: Duration::from_secs(90), row_cap: 1_000 },
            Tier::Collaboration => ExecLimits { elapsed: Duration::from_secs(5_400), row_cap: 500_000 },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tier::Public => "public",
            Tier::Collaboration => "collaboration",
        }
    }

    pub fn parse(s: &str) -> Option<Tier> {
        match s {
            "public" => Some(Tier::Public),
            "collaboration" => Some(Tier::Collaboration),
            _ => None,
        }
    }
}

pub const CAPABILITIES: &[&str] = &["cone", "cutout", "query", "describe"];

/// What a node publishes about itself for the registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceDescription {
    pub archive: String,
    pub schema_version: String,
    pub edition: u64,
    pub checksum: String,
    pub capabilities: Vec<String>,
    pub tables: Vec<TableInfo>,
    /// Path prefix of the service endpoints.
    #[serde(default = "root_path")]
    pub base_path: String,
}

fn root_path() -> String {
    "/".to_string()
}

impl ServiceDescription {
    pub fn table(&self, name: &str) -> Option<&TableInfo> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// One archive served from an edition. Editions can be swapped while
/// queries run; each request sees the edition current when it started.
pub struct ArchiveNode {
    name: String,
    edition: RwLock<Arc<Edition>>,
    store: Option<CatalogStore>,
    clock: Arc<dyn Clock>,
    public: ExecLimits,
    collaboration: ExecLimits,
}

impl ArchiveNode {
    pub fn new(name: &str, edition: Edition) -> ArchiveNode {
        ArchiveNode {
            name: name.to_string(),
            edition: RwLock::new(Arc::new(edition)),
            store: None,
            clock: Arc::new(SystemClock),
            public: Tier::Public.limits(),
            collaboration: Tier::Collaboration.limits(),
        }
    }

    /// Serves the store's current edition, named after its schema.
    pub fn from_store(store: CatalogStore) -> Result<ArchiveNode, crate::catalog::CatalogError> {
        let ed = store.open_current()?;
        let mut node = ArchiveNode::new(&ed.schema().archive.clone(), ed);
        node.store = Some(store);
        Ok(node)
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> ArchiveNode {
        self.clock = clock;
        self
    }

    /// Overrides the default limits of one tier.
    pub fn with_tier_limits(mut self, tier: Tier, limits: ExecLimits) -> ArchiveNode {
        match tier {
            Tier::Public => self.public = limits,
            Tier::Collaboration => self.collaboration = limits,
        }
        self
    }

    pub fn tier_limits(&self, tier: Tier) -> ExecLimits {
        match tier {
            Tier::Public => self.public,
            Tier::Collaboration => self.collaboration,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn edition(&self) -> Arc<Edition> {
        self.edition.read().unwrap().clone()
    }

    pub fn install(&self, edition: Edition) {
        *self.edition.write().unwrap() = Arc::new(edition);
    }

    /// Picks up the store's current edition if it changed.
    pub fn reload(&self) -> Result<u64, crate::catalog::CatalogError> {
        let Some(store) = &self.store else {
            return Ok(self.edition().number());
        };
        let current = store.current()?;
        if current != Some(self.edition().number()) {
            self.install(store.open_current()?);
        }
        Ok(self.edition().number())
    }

    pub fn describe(&self) -> ServiceDescription {
        let ed = self.edition();
        ServiceDescription {
            archive: self.name.clone(),
            schema_version: ed.schema().version.clone(),
            edition: ed.number(),
            checksum: ed.checksum().to_string(),
            capabilities: CAPABILITIES.iter().map(|s| s.to_string()).collect(),
            tables: ed.tables().map(TableInfo::from_table).collect(),
            base_path: root_path(),
        }
    }

    /// Objects of `table` (the first spatial table by default) within the
    /// cone, in primary-key order, capped by the tier.
    pub fn cone_search(
        &self,
        ra: f64,
        dec: f64,
        radius: f64,
        table: Option<&str>,
        tier: Tier,
    ) -> Result<TableResult, ServiceError> {
        let center = SkyCoord::new(ra, dec).map_err(|e| ServiceError::bad_request(e.to_string()))?;
        let cone = Cone::new(center, radius).map_err(|e| ServiceError::bad_request(e.to_string()))?;
        let ed = self.edition();
        let table = match table {
            Some(t) => t.to_string(),
            None => ed
                .tables()
                .find(|t| t.is_spatial())
                .map(|t| t.name().to_string())
                .ok_or_else(|| ServiceError::bad_request("archive has no spatial table"))?,
        };
        let limits = self.tier_limits(tier);
        let budget = Budget::new(self.clock.as_ref(), limits.elapsed);
        let req = FetchRequest { table, cone: Some(cone), filters: Vec::new(), max_rows: Some(limits.row_cap) };
        Ok(fetch_local(&self.name, &ed, &req, &budget)?)
    }

    pub fn cutout(&self, req: &CutoutRequest) -> Result<Image, ServiceError> {
        Ok(cutout(&self.edition(), req)?)
    }

    /// Runs a query against this archive alone. `INTO` needs a personal
    /// workspace and is refused here.
    pub fn query(&self, text: &str, tier: Tier) -> Result<TableResult, ServiceError> {
        let ast = parse(text)?;
        if ast.into.is_some() {
            return Err(ServiceError::new(UNSUPPORTED, "INTO is only available through the portal"));
        }
        let view = SingleArchive { name: &self.name, edition: self.edition() };
        let p = plan(&ast, &view)?;
        let ctx = ExecContext { access: &view, clock: self.clock.as_ref(), workspace: None };
        Ok(execute(&p, &self.tier_limits(tier), &ctx)?)
    }
}

struct SingleArchive<'a> {
    name: &'a str,
    edition: Arc<Edition>,
}

impl RegistryView for SingleArchive<'_> {
    fn table_info(&self, archive: &str, table: &str) -> Result<TableInfo, PlanError> {
        if archive != self.name {
            return Err(PlanError::UnknownArchive(archive.to_string()));
        }
        let t = self
            .edition
            .table(table)
            .map_err(|_| PlanError::UnknownTable { archive: archive.to_string(), table: table.to_string() })?;
        Ok(TableInfo::from_table(t))
    }
}

impl ArchiveAccess for SingleArchive<'_> {
    fn fetch(&self, archive: &str, req: &FetchRequest, budget: &Budget<'_>) -> Result<TableResult, AccessError> {
        if archive != self.name {
            return Err(AccessError::UnknownArchive(archive.to_string()));
        }
        fetch_local(archive, &self.edition, req, budget)
    }
}

impl ArchiveAccess for ArchiveNode {
    fn fetch(&self, archive: &str, req: &FetchRequest, budget: &Budget<'_>) -> Result<TableResult, AccessError> {
        SingleArchive { name: &self.name, edition: self.edition() }.fetch(archive, req, budget)
    }
}

impl RegistryView for ArchiveNode {
    fn table_info(&self, archive: &str, table: &str) -> Result<TableInfo, PlanError> {
        SingleArchive { name: &self.name, edition: self.edition() }.table_info(archive, table)
    }
}

impl ServiceError {
    pub fn unknown_archive(name: &str) -> ServiceError {
        ServiceError::new(UNKNOWN_ARCHIVE, format!("unknown archive {name}"))
    }
}
