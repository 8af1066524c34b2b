use std::sync::Arc;
use std::time::Duration;

use skyfed_core::archive_node::{Document, Tier};
use skyfed_core::clock::{Budget, BudgetExceeded};
use skyfed_core::federation::{Registry, ServiceRecord};
use skyfed_core::query::{AccessError, ArchiveAccess, FetchRequest, TableResult};

use crate::client::{join, Client, Method, TransportError};

/// Remote budgets longer than this are sent without a timeout.
const NO_TIMEOUT_ABOVE: Duration = Duration::from_secs(365 * 24 * 3600);

/// URL of one endpoint of a registered archive.
pub fn endpoint_url(rec: &ServiceRecord, path: &str) -> String {
    join(&join(&rec.endpoint, &rec.description.base_path), path)
}

/// Reaches registered archives through their `/query` endpoint.
pub struct HttpArchiveAccess {
    registry: Arc<Registry>,
    client: Client,
    tier: Tier,
}

impl HttpArchiveAccess {
    /// Requests are sent at `tier`; the caller's own limits are enforced by
    /// the executor's budget and row caps.
    pub fn new(registry: Arc<Registry>, client: Client, tier: Tier) -> HttpArchiveAccess {
        HttpArchiveAccess { registry, client, tier }
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    pub fn client(&self) -> &Client {
        &self.client
    }
}

impl ArchiveAccess for HttpArchiveAccess {
    fn fetch(&self, archive: &str, req: &FetchRequest, budget: &Budget<'_>) -> Result<TableResult, AccessError> {
        let rec = self.registry.find(archive).map_err(|_| AccessError::UnknownArchive(archive.to_string()))?;
        budget.check()?;
        let remaining = budget.remaining();
        let timeout = (remaining < NO_TIMEOUT_ABOVE).then(|| remaining.max(Duration::from_millis(1)));
        // The node knows itself by its own name, which may differ from the
        // registered one.
        let text = req.to_query(&rec.description.archive);
        let params = [("format", "json".to_string()), ("tier", self.tier.name().to_string())];
        let resp = self
            .client
            .request(Method::Post, &endpoint_url(&rec, "query"), &params, Some((text.as_bytes(), "text/plain")), timeout)
            .map_err(|e| match e {
                TransportError::Timeout if timeout.is_some() => AccessError::Budget(BudgetExceeded { limit: budget.limit() }),
                e => AccessError::Unreachable { archive: archive.to_string(), detail: e.to_string() },
            })?;
        match resp.document() {
            Document::Table(mut t) => {
                if let Some(n) = req.max_rows {
                    if t.rows.len() as u64 > n {
                        t.rows.truncate(n as usize);
                        t.truncated = true;
                    }
                }
                budget.check()?;
                Ok(t)
            }
            Document::Error(e) => Err(AccessError::Remote { archive: archive.to_string(), code: e.code, message: e.message }),
        }
    }
}
