//! HTTP services for skyfed: archive nodes and the federation portal, plus
//! the blocking client both the portal and the command-line tool use.

pub mod archive;
pub mod client;
pub mod config;
pub mod http;
pub mod portal;
pub mod remote;

use std::sync::Arc;

use axum::Router;
use skyfed_core::archive_node::{ArchiveNode, ServiceError, Tier, UNAVAILABLE};
use skyfed_core::catalog::CatalogStore;

use crate::config::{NodeConfig, PortalConfig};
use crate::http::{with_cors, Users};

/// Opens the node's catalog store and builds its router.
pub fn node_router(config: &NodeConfig) -> Result<Router, ServiceError> {
    let unavailable = |e: skyfed_core::catalog::CatalogError| ServiceError::new(UNAVAILABLE, e.to_string());
    let store = CatalogStore::open(&config.store).map_err(unavailable)?;
    let node = ArchiveNode::from_store(store)
        .map_err(unavailable)?
        .with_tier_limits(Tier::Public, config.limits.get(Tier::Public))
        .with_tier_limits(Tier::Collaboration, config.limits.get(Tier::Collaboration));
    Ok(node_router_for(node, Users::new(config.users.clone())))
}

pub fn node_router_for(node: ArchiveNode, users: Users) -> Router {
    with_cors(archive::router(Arc::new(archive::NodeState { node, users })))
}

/// Opens the portal's state and builds its router.
pub fn portal_router(config: &PortalConfig) -> Result<(Router, Arc<portal::Portal>), ServiceError> {
    let p = Arc::new(portal::Portal::open(config)?);
    Ok((with_cors(portal::router(p.clone())), p))
}
