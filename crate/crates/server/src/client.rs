//! Blocking HTTP client for the skyfed services, shared by the portal and
//! the command-line tool.

use std::time::Duration;

use base64::Engine as _;
use skyfed_core::archive_node::{wire, Document, ServiceDescription, ServiceError, UNAVAILABLE};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Credentials {
    pub user: String,
    pub secret: String,
}

impl Credentials {
    pub fn new(user: &str, secret: &str) -> Credentials {
        Credentials { user: user.to_string(), secret: secret.to_string() }
    }

    pub fn header_value(&self) -> String {
        let token = base64::engine::general_purpose::STANDARD.encode(format!("{}:{}", self.user, self.secret));
        format!("Basic {token}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("{0}")]
    Failed(String),
}

impl From<ureq::Error> for TransportError {
    fn from(e: ureq::Error) -> TransportError {
        match e {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            e => TransportError::Failed(e.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }

    /// The body as a wire document. A body that is not one becomes an
    /// `unavailable` error naming the status.
    pub fn document(&self) -> Document {
        match wire::decode(&self.text()) {
            Ok(d) => d,
            Err(e) => Document::error(UNAVAILABLE, format!("HTTP {}: {e}", self.status)),
        }
    }

    /// Error responses carry a wire error document; anything else is
    /// reported by status.
    pub fn service_error(&self) -> ServiceError {
        match self.document() {
            Document::Error(e) => e.into(),
            Document::Table(_) => ServiceError::new(UNAVAILABLE, format!("unexpected HTTP status {}", self.status)),
        }
    }

    pub fn json<T: serde::de::DeserializeOwned>(&self) -> Result<T, ServiceError> {
        if !self.is_success() {
            return Err(self.service_error());
        }
        serde_json::from_slice(&self.body)
            .map_err(|e| ServiceError::new(UNAVAILABLE, format!("malformed response: {e}")))
    }
}

pub enum Method {
    Get,
    Post,
    Delete,
}

/// Joins a service base URL and an endpoint path.
pub fn join(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}

#[derive(Clone)]
pub struct Client {
    agent: ureq::Agent,
    credentials: Option<Credentials>,
}

impl Client {
    pub fn new(credentials: Option<Credentials>) -> Client {
        let agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Client { agent, credentials }
    }

    pub fn credentials(&self) -> Option<&Credentials> {
        self.credentials.as_ref()
    }

    pub fn request(
        &self,
        method: Method,
        url: &str,
        params: &[(&str, String)],
        body: Option<(&[u8], &str)>,
        timeout: Option<Duration>,
    ) -> Result<HttpResponse, TransportError> {
        let auth = self.credentials.as_ref().map(Credentials::header_value);
        let mut resp = match method {
            Method::Get | Method::Delete => {
                let mut r = match method {
                    Method::Get => self.agent.get(url),
                    _ => self.agent.delete(url),
                };
                for (k, v) in params {
                    r = r.query(*k, v);
                }
                if let Some(a) = &auth {
                    r = r.header("Authorization", a);
                }
                r.config().timeout_global(timeout).build().call()?
            }
            Method::Post => {
                let mut r = self.agent.post(url);
                for (k, v) in params {
                    r = r.query(*k, v);
                }
                if let Some(a) = &auth {
                    r = r.header("Authorization", a);
                }
                let (bytes, content_type) = body.unwrap_or((b"", "text/plain"));
                r = r.header("Content-Type", content_type);
                r.config().timeout_global(timeout).build().send(bytes)?
            }
        };
        let status = resp.status().as_u16();
        let content_type = resp.headers().get("content-type").and_then(|v| v.to_str().ok()).map(str::to_string);
        let body = resp.body_mut().with_config().limit(u64::MAX).read_to_vec()?;
        Ok(HttpResponse { status, content_type, body })
    }

    pub fn get(&self, url: &str, params: &[(&str, String)]) -> Result<HttpResponse, TransportError> {
        self.request(Method::Get, url, params, None, None)
    }

    pub fn post(&self, url: &str, params: &[(&str, String)], body: &[u8], content_type: &str) -> Result<HttpResponse, TransportError> {
        self.request(Method::Post, url, params, Some((body, content_type)), None)
    }

    pub fn delete(&self, url: &str) -> Result<HttpResponse, TransportError> {
        self.request(Method::Delete, url, &[], None, None)
    }

    /// Fetches an archive node's self-description.
    pub fn describe(&self, endpoint: &str) -> Result<ServiceDescription, ServiceError> {
        let resp = self
            .get(&join(endpoint, "describe"), &[])
            .map_err(|e| ServiceError::new(UNAVAILABLE, format!("{endpoint}: {e}")))?;
        resp.json()
    }
}
