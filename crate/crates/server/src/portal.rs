//! The federation portal: registry, federated cone/cutout/query, the
//! cross-match endpoint, batch jobs and personal databases.

use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use skyfed_core::archive_node::{ServiceError, Tier, DENIED, UNAVAILABLE};
use skyfed_core::clock::{Budget, Clock, SystemClock};
use skyfed_core::federation::{tuples_table, xmatch, Registry, ServiceRecord, XMatchSpec};
use skyfed_core::query::{
    execute, parse, plan, ArchiveAccess, ExecContext, FetchRequest, SourceRef, TableResult, DEFAULT_TOLERANCE_ARCSEC,
};
use skyfed_core::sphere::{Cone, SkyCoord};
use skyfed_core::workspace::{
    parse_delimited, Access, JobState, MyDbStore, QueryRunner, Scheduler, SchedulerConfig,
};

use crate::archive::{param, query_text, real_param, tier_of, Params};
use crate::client::{Client, Credentials};
use crate::config::{LimitsConfig, PortalConfig};
use crate::http::{blocking, header_value, json_response, negotiate, table_response, ApiError, ApiResult, Users, WithFormat};
use crate::remote::{endpoint_url, HttpArchiveAccess};

pub struct Portal {
    pub registry: Arc<Registry>,
    pub access: Arc<HttpArchiveAccess>,
    pub mydb: Arc<MyDbStore>,
    pub scheduler: Scheduler,
    pub users: Users,
    pub limits: LimitsConfig,
    pub clock: Arc<dyn Clock>,
}

impl Portal {
    /// Opens the portal's state under `state_dir`, replaying the registry
    /// and job journals.
    pub fn open(config: &PortalConfig) -> Result<Portal, ServiceError> {
        Portal::open_with(config, false)
    }

    /// As [`Portal::open`], optionally with the job workers paused.
    pub fn open_with(config: &PortalConfig, paused: bool) -> Result<Portal, ServiceError> {
        let dir = &config.state_dir;
        let registry = Arc::new(Registry::open(dir.join("registry.jsonl"))?);
        let creds = match (&config.node_user, &config.node_secret) {
            (Some(u), Some(s)) => Some(Credentials::new(u, s)),
            _ => None,
        };
        let tier = if creds.is_some() { Tier::Collaboration } else { Tier::Public };
        let access = Arc::new(HttpArchiveAccess::new(registry.clone(), Client::new(creds), tier));
        let mydb = Arc::new(MyDbStore::open(dir.join("mydb"), config.mydb_quota_bytes)?);
        let clock: Arc<dyn Clock> = Arc::new(SystemClock);
        let runner =
            QueryRunner { registry: registry.clone(), access: access.clone(), clock: clock.clone(), mydb: mydb.clone() };
        let jobs = SchedulerConfig {
            workers: config.workers,
            max_doublings: config.max_doublings,
            state_dir: Some(dir.join("jobs")),
            start_paused: paused,
            bases: vec![
                (Tier::Public, config.limits.get(Tier::Public)),
                (Tier::Collaboration, config.limits.get(Tier::Collaboration)),
            ],
        };
        let scheduler = Scheduler::start(jobs, Arc::new(runner), clock.clone())?;
        Ok(Portal {
            registry,
            access,
            mydb,
            scheduler,
            users: Users::new(config.users.clone()),
            limits: config.limits.clone(),
            clock,
        })
    }
}

pub fn router(portal: Arc<Portal>) -> Router {
    Router::new()
        .route("/registry/list", get(registry_list))
        .route("/registry/find", get(registry_find))
        .route("/registry/register", post(registry_register))
        .route("/registry/{name}", get(registry_get).delete(registry_delete))
        .route("/registry/{name}/refresh", post(registry_refresh))
        .route("/cone", get(cone))
        .route("/cutout", get(cutout))
        .route("/query", get(query).post(query))
        .route("/xmatch", post(xmatch_handler))
        .route("/jobs", get(jobs_list))
        .route("/jobs/submit", post(jobs_submit))
        .route("/jobs/{id}", get(jobs_status))
        .route("/jobs/{id}/rerun", post(jobs_rerun))
        .route("/jobs/{id}/cancel", post(jobs_cancel))
        .route("/jobs/{id}/result", get(jobs_result))
        .route("/mydb", get(mydb_list))
        .route("/mydb/create", post(mydb_create))
        .route("/mydb/{owner}", get(mydb_info))
        .route("/mydb/{owner}/grant", post(mydb_grant))
        .route("/mydb/{owner}/tables/{name}", get(mydb_fetch).post(mydb_upload).delete(mydb_drop))
        .with_state(portal)
}

type S = State<Arc<Portal>>;

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

async fn registry_list(State(p): S) -> ApiResult {
    Ok(json_response(&p.registry.list()))
}

async fn registry_find(State(p): S, Query(q): Query<Params>) -> ApiResult {
    let name = param(&q, "name").ok_or_else(|| ServiceError::bad_request("missing parameter name"))?;
    Ok(json_response(&p.registry.find(name)?))
}

async fn registry_get(State(p): S, Path(name): Path<String>) -> ApiResult {
    Ok(json_response(&p.registry.find(&name)?))
}

#[derive(Deserialize)]
struct RegisterBody {
    name: String,
    endpoint: String,
}

fn bad_json(e: axum::extract::rejection::JsonRejection) -> ApiError {
    ApiError::json(ServiceError::bad_request(e.body_text()))
}

async fn registry_register(
    State(p): S,
    headers: HeaderMap,
    body: Result<Json<RegisterBody>, axum::extract::rejection::JsonRejection>,
) -> ApiResult {
    p.users.require(&headers)?;
    let Json(body) = body.map_err(bad_json)?;
    let rec = blocking(move || {
        skyfed_core::federation::validate_endpoint(&body.endpoint)?;
        let description = p.access.client().describe(&body.endpoint)?;
        let rec = ServiceRecord { name: body.name, endpoint: body.endpoint, description, registered_at: now_ms() };
        p.registry.register(rec.clone())?;
        Ok(rec)
    })
    .await?;
    Ok((StatusCode::CREATED, json_response(&rec)).into_response())
}

async fn registry_delete(State(p): S, headers: HeaderMap, Path(name): Path<String>) -> ApiResult {
    p.users.require(&headers)?;
    p.registry.unregister(&name)?;
    Ok(json_response(&serde_json::json!({ "unregistered": name })))
}

async fn registry_refresh(State(p): S, headers: HeaderMap, Path(name): Path<String>) -> ApiResult {
    p.users.require(&headers)?;
    let rec = blocking(move || {
        let rec = p.registry.find(&name)?;
        let description = p.access.client().describe(&rec.endpoint)?;
        p.registry.refresh(&name, description)?;
        Ok(p.registry.find(&name)?)
    })
    .await?;
    Ok(json_response(&rec))
}

fn cap(mut t: TableResult, row_cap: u64) -> TableResult {
    if t.rows.len() as u64 > row_cap {
        t.rows.truncate(row_cap as usize);
        t.truncated = true;
    }
    t
}

impl Portal {
    fn tier(&self, q: &Params, headers: &HeaderMap) -> Result<Tier, ServiceError> {
        tier_of(q, headers, &self.users)
    }

    fn record(&self, q: &Params) -> Result<ServiceRecord, ServiceError> {
        let name = param(q, "archive").ok_or_else(|| ServiceError::bad_request("missing parameter archive"))?;
        Ok(self.registry.find(name)?)
    }

    /// Cone search of one registered archive under the portal's limits.
    pub fn cone_search(
        &self,
        archive: &str,
        cone: Cone,
        table: Option<&str>,
        tier: Tier,
    ) -> Result<TableResult, ServiceError> {
        let rec = self.registry.find(archive)?;
        let table = match table {
            Some(t) => t.to_string(),
            None => rec
                .description
                .tables
                .iter()
                .find(|t| t.spatial_indices().is_some())
                .map(|t| t.name.clone())
                .ok_or_else(|| ServiceError::bad_request(format!("archive {archive} has no spatial table")))?,
        };
        let limits = self.limits.get(tier);
        let budget = Budget::new(self.clock.as_ref(), limits.elapsed);
        let req = FetchRequest { table, cone: Some(cone), filters: Vec::new(), max_rows: Some(limits.row_cap) };
        Ok(self.access.fetch(archive, &req, &budget)?)
    }

    /// Runs a query synchronously. `INTO` deposits into `user`'s workspace.
    pub fn run_query(&self, text: &str, tier: Tier, user: Option<&str>) -> Result<TableResult, ServiceError> {
        let ast = parse(text)?;
        if ast.into.is_some() && user.is_none() {
            return Err(ServiceError::new(DENIED, "INTO requires authentication"));
        }
        let p = plan(&ast, self.registry.as_ref())?;
        let ws = user.map(|u| self.mydb.as_user(u));
        let ctx = ExecContext {
            access: self.access.as_ref(),
            clock: self.clock.as_ref(),
            workspace: ws.as_ref().map(|w| w as &dyn skyfed_core::query::DepositTarget),
        };
        Ok(execute(&p, &self.limits.get(tier), &ctx)?)
    }

    pub fn run_xmatch(&self, spec: &XMatchSpec, region: Option<&Cone>, tier: Tier) -> Result<TableResult, ServiceError> {
        let limits = self.limits.get(tier);
        let budget = Budget::new(self.clock.as_ref(), limits.elapsed);
        let tuples = xmatch(spec, region, self.registry.as_ref(), self.access.as_ref(), &budget)?;
        Ok(cap(tuples_table(spec, &tuples), limits.row_cap))
    }
}

fn cone_of(q: &Params) -> Result<Cone, ServiceError> {
    let center = SkyCoord::new(real_param(q, "ra")?, real_param(q, "dec")?)
        .map_err(|e| ServiceError::bad_request(e.to_string()))?;
    Cone::new(center, real_param(q, "sr")?).map_err(|e| ServiceError::bad_request(e.to_string()))
}

async fn cone(State(p): S, Query(q): Query<Params>, headers: HeaderMap) -> ApiResult {
    let format = negotiate(param(&q, "format"), &headers);
    let tier = p.tier(&q, &headers).in_format(format)?;
    let rec = p.record(&q).in_format(format)?;
    let cone = cone_of(&q).in_format(format)?;
    let table = param(&q, "table").map(str::to_string);
    let t = blocking(move || p.cone_search(&rec.name, cone, table.as_deref(), tier).in_format(format)).await?;
    Ok(table_response(&t, format))
}

async fn cutout(State(p): S, Query(q): Query<Params>) -> ApiResult {
    let rec = p.record(&q)?;
    let forward: Vec<(String, String)> =
        q.iter().filter(|(k, _)| !k.eq_ignore_ascii_case("archive")).map(|(k, v)| (k.clone(), v.clone())).collect();
    let resp = blocking(move || {
        let params: Vec<(&str, String)> = forward.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
        p.access
            .client()
            .get(&endpoint_url(&rec, "cutout"), &params)
            .map_err(|e| ServiceError::new(UNAVAILABLE, format!("archive {}: {e}", rec.name)).into())
    })
    .await?;
    let status = StatusCode::from_u16(resp.status).unwrap_or(StatusCode::BAD_GATEWAY);
    let content_type = header_value(resp.content_type.as_deref().unwrap_or("application/octet-stream"));
    Ok((status, [(axum::http::header::CONTENT_TYPE, content_type)], resp.body).into_response())
}

async fn query(State(p): S, Query(q): Query<Params>, headers: HeaderMap, body: String) -> ApiResult {
    let format = negotiate(param(&q, "format"), &headers);
    let tier = p.tier(&q, &headers).in_format(format)?;
    let user = p.users.identify(&headers).in_format(format)?;
    let text = query_text(&q, &body).in_format(format)?;
    let t = blocking(move || p.run_query(&text, tier, user.as_deref()).in_format(format)).await?;
    Ok(table_response(&t, format))
}

#[derive(Deserialize)]
struct RegionBody {
    ra: f64,
    dec: f64,
    sr: f64,
}

#[derive(Deserialize)]
struct XMatchBody {
    /// `archive.table` names; the first is the anchor.
    sources: Vec<String>,
    tolerance_arcsec: Option<f64>,
    region: Option<RegionBody>,
}

fn source_ref(s: &str) -> Result<SourceRef, ServiceError> {
    match s.split_once('.') {
        Some((a, t)) if !a.is_empty() && !t.is_empty() => Ok(SourceRef::new(a, t)),
        _ => Err(ServiceError::bad_request(format!("source {s} is not archive.table"))),
    }
}

async fn xmatch_handler(
    State(p): S,
    Query(q): Query<Params>,
    headers: HeaderMap,
    body: Result<Json<XMatchBody>, axum::extract::rejection::JsonRejection>,
) -> ApiResult {
    let format = negotiate(param(&q, "format"), &headers);
    let tier = p.tier(&q, &headers).in_format(format)?;
    let Json(body) = body.map_err(bad_json)?;
    let sources = body.sources.iter().map(|s| source_ref(s)).collect::<Result<Vec<_>, _>>().in_format(format)?;
    let spec = XMatchSpec { sources, tolerance_arcsec: body.tolerance_arcsec.unwrap_or(DEFAULT_TOLERANCE_ARCSEC) };
    let region = match body.region {
        Some(r) => Some(
            SkyCoord::new(r.ra, r.dec)
                .and_then(|c| Cone::new(c, r.sr))
                .map_err(|e| ServiceError::bad_request(e.to_string()))
                .in_format(format)?,
        ),
        None => None,
    };
    let t = blocking(move || p.run_xmatch(&spec, region.as_ref(), tier).in_format(format)).await?;
    Ok(table_response(&t, format))
}

#[derive(Deserialize)]
struct SubmitBody {
    query: String,
    tier: Option<String>,
}

async fn jobs_submit(
    State(p): S,
    headers: HeaderMap,
    body: Result<Json<SubmitBody>, axum::extract::rejection::JsonRejection>,
) -> ApiResult {
    let user = p.users.require(&headers)?;
    let Json(body) = body.map_err(bad_json)?;
    let tier = match body.tier.as_deref() {
        None => Tier::Public,
        Some(t) => Tier::parse(t).ok_or_else(|| ServiceError::bad_request(format!("unknown tier {t}")))?,
    };
    let rec = blocking(move || Ok(p.scheduler.submit(&user, &body.query, tier)?)).await?;
    Ok((StatusCode::CREATED, json_response(&rec)).into_response())
}

/// The job, if `user` owns it.
fn owned_job(p: &Portal, user: &str, id: u64) -> Result<skyfed_core::workspace::JobRecord, ServiceError> {
    let rec = p.scheduler.status(id)?;
    if rec.owner != user {
        return Err(ServiceError::new(DENIED, format!("job {id} belongs to another user")));
    }
    Ok(rec)
}

async fn jobs_status(State(p): S, headers: HeaderMap, Path(id): Path<u64>) -> ApiResult {
    let user = p.users.require(&headers)?;
    Ok(json_response(&owned_job(&p, &user, id)?))
}

async fn jobs_rerun(State(p): S, headers: HeaderMap, Path(id): Path<u64>) -> ApiResult {
    let user = p.users.require(&headers)?;
    owned_job(&p, &user, id)?;
    let rec = p.scheduler.rerun(id)?;
    Ok((StatusCode::CREATED, json_response(&rec)).into_response())
}

async fn jobs_cancel(State(p): S, headers: HeaderMap, Path(id): Path<u64>) -> ApiResult {
    let user = p.users.require(&headers)?;
    owned_job(&p, &user, id)?;
    Ok(json_response(&p.scheduler.cancel(id)?))
}

async fn jobs_result(State(p): S, headers: HeaderMap, Path(id): Path<u64>, Query(q): Query<Params>) -> ApiResult {
    let format = negotiate(param(&q, "format"), &headers);
    let user = p.users.require(&headers).in_format(format)?;
    let rec = owned_job(&p, &user, id).in_format(format)?;
    let t = blocking(move || {
        match (&rec.target, rec.state) {
            (Some(target), JobState::Succeeded) => {
                let db = target.db.clone().unwrap_or_else(|| rec.owner.clone());
                p.mydb.fetch(&user, &db, &target.table)
            }
            _ => p.scheduler.result(id).map(|r| (*r).clone()),
        }
        .in_format(format)
    })
    .await?;
    Ok(table_response(&t, format))
}

async fn jobs_list(State(p): S, headers: HeaderMap, Query(q): Query<Params>) -> ApiResult {
    let user = p.users.require(&headers)?;
    let owner = param(&q, "owner").unwrap_or(&user).to_string();
    if owner != user {
        return Err(ServiceError::new(DENIED, "jobs of other users are not visible").into());
    }
    let state = match param(&q, "state") {
        None => None,
        Some(s) => Some(JobState::parse(s).ok_or_else(|| ServiceError::bad_request(format!("unknown job state {s}")))?),
    };
    Ok(json_response(&p.scheduler.list(Some(&owner), state)))
}

async fn mydb_list(State(p): S, headers: HeaderMap) -> ApiResult {
    let user = p.users.require(&headers)?;
    Ok(json_response(&serde_json::json!({ "user": user, "databases": p.mydb.visible_to(&user) })))
}

async fn mydb_create(State(p): S, headers: HeaderMap) -> ApiResult {
    let user = p.users.require(&headers)?;
    let info = blocking(move || Ok(p.mydb.create(&user)?)).await?;
    Ok((StatusCode::CREATED, json_response(&info)).into_response())
}

async fn mydb_info(State(p): S, headers: HeaderMap, Path(owner): Path<String>) -> ApiResult {
    let user = p.users.require(&headers)?;
    Ok(json_response(&p.mydb.info(&user, &owner)?))
}

async fn mydb_upload(State(p): S, headers: HeaderMap, Path((owner, name)): Path<(String, String)>, body: String) -> ApiResult {
    let user = p.users.require(&headers)?;
    let summary = blocking(move || {
        let table = parse_delimited(&body)?;
        Ok(p.mydb.upload(&user, &owner, &name, table)?)
    })
    .await?;
    Ok((StatusCode::CREATED, json_response(&summary)).into_response())
}

async fn mydb_fetch(
    State(p): S,
    headers: HeaderMap,
    Path((owner, name)): Path<(String, String)>,
    Query(q): Query<Params>,
) -> ApiResult {
    let format = negotiate(param(&q, "format"), &headers);
    let user = p.users.require(&headers).in_format(format)?;
    let t = blocking(move || p.mydb.fetch(&user, &owner, &name).in_format(format)).await?;
    Ok(table_response(&t, format))
}

async fn mydb_drop(State(p): S, headers: HeaderMap, Path((owner, name)): Path<(String, String)>) -> ApiResult {
    let user = p.users.require(&headers)?;
    let dropped = name.clone();
    blocking(move || Ok(p.mydb.drop_table(&user, &owner, &name)?)).await?;
    Ok(json_response(&serde_json::json!({ "dropped": dropped })))
}

#[derive(Deserialize)]
struct GrantBody {
    user: String,
    level: String,
}

async fn mydb_grant(
    State(p): S,
    headers: HeaderMap,
    Path(owner): Path<String>,
    body: Result<Json<GrantBody>, axum::extract::rejection::JsonRejection>,
) -> ApiResult {
    let caller = p.users.require(&headers)?;
    let Json(body) = body.map_err(bad_json)?;
    let level = Access::parse(&body.level)
        .ok_or_else(|| ServiceError::bad_request(format!("unknown access level {}", body.level)))?;
    let info = blocking(move || {
        p.mydb.grant(&caller, &owner, &body.user, level)?;
        Ok(p.mydb.info(&caller, &owner)?)
    })
    .await?;
    Ok(json_response(&info))
}
