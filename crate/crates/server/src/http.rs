//! Pieces shared by the archive and portal routers.

use std::collections::BTreeMap;
use std::net::SocketAddr;

use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Router;
use base64::Engine as _;
use serde::Serialize;
use skyfed_core::archive_node::{wire, Document, ServiceError, WireFormat, DENIED};
use skyfed_core::query::TableResult;

/// An error with the wire format it should be reported in.
pub struct ApiError {
    pub error: ServiceError,
    pub format: WireFormat,
}

impl ApiError {
    pub fn json(error: ServiceError) -> ApiError {
        ApiError { error, format: WireFormat::Json }
    }
}

macro_rules! api_error_from {
    ($($t:ty),*) => {
        $(impl From<$t> for ApiError {
            fn from(e: $t) -> ApiError {
                ApiError::json(e.into())
            }
        })*
    };
}

api_error_from!(
    ServiceError,
    skyfed_core::workspace::WorkspaceError,
    skyfed_core::federation::RegistryError,
    skyfed_core::federation::XMatchError,
    skyfed_core::query::ParseError,
    skyfed_core::query::PlanError,
    skyfed_core::query::ExecError,
    skyfed_core::query::AccessError
);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.error.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = wire::encode(&self.error.to_document(), self.format);
        (status, [(header::CONTENT_TYPE, self.format.content_type())], body).into_response()
    }
}

pub type ApiResult = Result<Response, ApiError>;

pub trait WithFormat<T> {
    fn in_format(self, format: WireFormat) -> Result<T, ApiError>;
}

impl<T, E: Into<ServiceError>> WithFormat<T> for Result<T, E> {
    fn in_format(self, format: WireFormat) -> Result<T, ApiError> {
        self.map_err(|e| ApiError { error: e.into(), format })
    }
}

pub fn table_response(t: &TableResult, format: WireFormat) -> Response {
    let body = wire::encode(&Document::Table(t.clone()), format);
    ([(header::CONTENT_TYPE, format.content_type())], body).into_response()
}

pub fn json_response<T: Serialize>(value: &T) -> Response {
    let body = serde_json::to_string(value).expect("serializable");
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

pub fn negotiate(format: Option<&str>, headers: &HeaderMap) -> WireFormat {
    WireFormat::negotiate(format, headers.get(header::ACCEPT).and_then(|v| v.to_str().ok()))
}

/// Runs blocking core work off the async executor.
pub async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r,
        Err(e) => Err(ApiError::json(ServiceError::new("internal", format!("request handler failed: {e}")))),
    }
}

/// User names and shared secrets checked against HTTP Basic credentials.
#[derive(Debug, Clone, Default)]
pub struct Users(BTreeMap<String, String>);

fn eq_constant_time(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

impl Users {
    pub fn new(users: BTreeMap<String, String>) -> Users {
        Users(users)
    }

    /// The authenticated user, if credentials were sent. Wrong credentials
    /// are an error rather than anonymous access.
    pub fn identify(&self, headers: &HeaderMap) -> Result<Option<String>, ServiceError> {
        let Some(value) = headers.get(header::AUTHORIZATION) else {
            return Ok(None);
        };
        let denied = || ServiceError::new(DENIED, "invalid credentials");
        let value = value.to_str().map_err(|_| denied())?;
        let token = value.strip_prefix("Basic ").ok_or_else(denied)?;
        let decoded = base64::engine::general_purpose::STANDARD.decode(token.trim()).map_err(|_| denied())?;
        let decoded = String::from_utf8(decoded).map_err(|_| denied())?;
        let (user, secret) = decoded.split_once(':').ok_or_else(denied)?;
        match self.0.get(user) {
            Some(s) if eq_constant_time(s.as_bytes(), secret.as_bytes()) => Ok(Some(user.to_string())),
            _ => Err(denied()),
        }
    }

    pub fn require(&self, headers: &HeaderMap) -> Result<String, ServiceError> {
        self.identify(headers)?.ok_or_else(|| ServiceError::new(DENIED, "authentication required"))
    }
}

/// Adds permissive CORS so a browser client served elsewhere can call the
/// API.
pub fn with_cors(router: Router) -> Router {
    router.layer(tower_http::cors::CorsLayer::permissive())
}

pub fn header_value(s: &str) -> HeaderValue {
    HeaderValue::from_str(s).unwrap_or_else(|_| HeaderValue::from_static("application/octet-stream"))
}

/// A server running on its own runtime thread, stopped on drop.
pub struct RunningServer {
    addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl RunningServer {
    /// Binds `bind` (port 0 picks a free port) and serves `router`.
    pub fn start(bind: &str, router: Router) -> std::io::Result<RunningServer> {
        let listener = std::net::TcpListener::bind(bind)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
        let thread = std::thread::Builder::new().name(format!("http-{addr}")).spawn(move || {
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("tokio listener");
                let _ = axum::serve(listener, router)
                    .with_graceful_shutdown(async {
                        let _ = stopped.await;
                    })
                    .await;
            });
        })?;
        Ok(RunningServer { addr, stop: Some(stop), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
