//! HTTP face of one archive node: /describe, /cone, /cutout, /query and
//! an authenticated /reload.

use std::collections::HashMap;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, HeaderMap};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::Router;
use skyfed_core::archive_node::{ArchiveNode, CutoutRequest, ServiceError, Tier, WireFormat};
use skyfed_core::sphere::SkyCoord;

use crate::http::{blocking, json_response, negotiate, table_response, ApiResult, Users, WithFormat};

pub struct NodeState {
    pub node: ArchiveNode,
    pub users: Users,
}

pub fn router(state: Arc<NodeState>) -> Router {
    Router::new()
        .route("/describe", get(describe))
        .route("/cone", get(cone))
        .route("/cutout", get(cutout_handler))
        .route("/query", get(query).post(query))
        .route("/reload", post(reload))
        .with_state(state)
}

pub type Params = HashMap<String, String>;

/// A parameter by name; upper-case spellings are accepted too.
pub fn param<'a>(p: &'a Params, name: &str) -> Option<&'a str> {
    p.get(name).or_else(|| p.get(&name.to_ascii_uppercase())).map(String::as_str)
}

pub fn real_param(p: &Params, name: &str) -> Result<f64, ServiceError> {
    let v = param(p, name).ok_or_else(|| ServiceError::bad_request(format!("missing parameter {name}")))?;
    v.trim().parse().map_err(|_| ServiceError::bad_request(format!("parameter {name} is not a number: {v}")))
}

fn opt_param<T: std::str::FromStr>(p: &Params, name: &str, default: T) -> Result<T, ServiceError> {
    match param(p, name) {
        None => Ok(default),
        Some(v) => v.trim().parse().map_err(|_| ServiceError::bad_request(format!("invalid parameter {name}: {v}"))),
    }
}

/// The requested tier; collaboration needs credentials.
pub fn tier_of(p: &Params, headers: &HeaderMap, users: &Users) -> Result<Tier, ServiceError> {
    let tier = match param(p, "tier") {
        None => Tier::Public,
        Some(t) => Tier::parse(t).ok_or_else(|| ServiceError::bad_request(format!("unknown tier {t}")))?,
    };
    let user = users.identify(headers)?;
    if tier == Tier::Collaboration && user.is_none() {
        return Err(ServiceError::new(skyfed_core::archive_node::DENIED, "collaboration tier requires authentication"));
    }
    Ok(tier)
}

/// Query text from `q` or, failing that, the request body.
pub fn query_text(p: &Params, body: &str) -> Result<String, ServiceError> {
    match param(p, "q").or_else(|| param(p, "query")) {
        Some(q) => Ok(q.to_string()),
        None if !body.trim().is_empty() => Ok(body.to_string()),
        None => Err(ServiceError::bad_request("missing query text")),
    }
}

pub fn cutout_request(p: &Params) -> Result<CutoutRequest, ServiceError> {
    let center = SkyCoord::new(real_param(p, "ra")?, real_param(p, "dec")?)
        .map_err(|e| ServiceError::bad_request(e.to_string()))?;
    Ok(CutoutRequest {
        center,
        width: opt_param(p, "width", 128)?,
        height: opt_param(p, "height", 128)?,
        scale: opt_param(p, "scale", 1.0 / 3600.0)?,
        table: param(p, "table").map(str::to_string),
        band: param(p, "band").map(str::to_string),
    })
}

pub fn pgm_response(bytes: Vec<u8>) -> axum::response::Response {
    ([(header::CONTENT_TYPE, "image/x-portable-graymap")], bytes).into_response()
}

async fn describe(State(s): State<Arc<NodeState>>) -> ApiResult {
    Ok(json_response(&s.node.describe()))
}

async fn cone(State(s): State<Arc<NodeState>>, Query(p): Query<Params>, headers: HeaderMap) -> ApiResult {
    let format = negotiate(param(&p, "format"), &headers);
    let tier = tier_of(&p, &headers, &s.users).in_format(format)?;
    let (ra, dec, sr) =
        (real_param(&p, "ra").in_format(format)?, real_param(&p, "dec").in_format(format)?, real_param(&p, "sr").in_format(format)?);
    let table = param(&p, "table").map(str::to_string);
    let t = blocking(move || s.node.cone_search(ra, dec, sr, table.as_deref(), tier).in_format(format)).await?;
    Ok(table_response(&t, format))
}

async fn cutout_handler(State(s): State<Arc<NodeState>>, Query(p): Query<Params>) -> ApiResult {
    let req = cutout_request(&p).in_format(WireFormat::Json)?;
    let img = blocking(move || s.node.cutout(&req).in_format(WireFormat::Json)).await?;
    Ok(pgm_response(img.to_pgm()))
}

async fn query(State(s): State<Arc<NodeState>>, Query(p): Query<Params>, headers: HeaderMap, body: String) -> ApiResult {
    let format = negotiate(param(&p, "format"), &headers);
    let tier = tier_of(&p, &headers, &s.users).in_format(format)?;
    let text = query_text(&p, &body).in_format(format)?;
    let t = blocking(move || s.node.query(&text, tier).in_format(format)).await?;
    Ok(table_response(&t, format))
}

async fn reload(State(s): State<Arc<NodeState>>, headers: HeaderMap) -> ApiResult {
    s.users.require(&headers)?;
    let edition = blocking(move || {
        s.node.reload().map_err(|e| ServiceError::new(skyfed_core::archive_node::UNAVAILABLE, e.to_string()).into())
    })
    .await?;
    Ok(json_response(&serde_json::json!({ "edition": edition })))
}
