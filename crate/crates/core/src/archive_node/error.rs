use crate::federation::{RegistryError, XMatchError};
use crate::query::{AccessError, DepositError, ExecError, ParseError, PlanError};

use super::cutout::CutoutError;
use super::wire::{Document, ErrorDocument};

pub const SYNTAX: &str = "syntax";
pub const QUOTA: &str = "quota";
pub const UNKNOWN_ARCHIVE: &str = "unknown_archive";
pub const UNKNOWN_TABLE: &str = "unknown_table";
pub const UNKNOWN_COLUMN: &str = "unknown_column";
pub const UNSUPPORTED: &str = "unsupported";
pub const BAD_REQUEST: &str = "bad_request";
pub const UNAVAILABLE: &str = "unavailable";
pub const DENIED: &str = "denied";
pub const NOT_FOUND: &str = "not_found";
pub const CONFLICT: &str = "conflict";

/// An error as reported to service clients: a stable code plus a message.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ServiceError {
    pub code: String,
    pub message: String,
}

impl ServiceError {
    pub fn new(code: &str, message: impl Into<String>) -> ServiceError {
        ServiceError { code: code.to_string(), message: message.into() }
    }

    pub fn bad_request(message: impl Into<String>) -> ServiceError {
        ServiceError::new(BAD_REQUEST, message)
    }

    pub fn to_document(&self) -> Document {
        Document::Error(ErrorDocument { code: self.code.clone(), message: self.message.clone() })
    }

    /// HTTP status for this code.
    pub fn http_status(&self) -> u16 {
        match self.code.as_str() {
            SYNTAX | BAD_REQUEST | UNKNOWN_COLUMN => 400,
            DENIED => 403,
            UNKNOWN_ARCHIVE | UNKNOWN_TABLE | NOT_FOUND => 404,
            CONFLICT => 409,
            QUOTA => 429,
            UNSUPPORTED => 501,
            UNAVAILABLE => 502,
            _ => 500,
        }
    }
}

impl From<ErrorDocument> for ServiceError {
    fn from(e: ErrorDocument) -> ServiceError {
        ServiceError { code: e.code, message: e.message }
    }
}

impl From<ParseError> for ServiceError {
    fn from(e: ParseError) -> ServiceError {
        ServiceError::new(SYNTAX, e.to_string())
    }
}

impl From<PlanError> for ServiceError {
    fn from(e: PlanError) -> ServiceError {
        let code = match &e {
            PlanError::UnknownArchive(_) => UNKNOWN_ARCHIVE,
            PlanError::UnknownTable { .. } => UNKNOWN_TABLE,
            PlanError::UnknownColumn(_) | PlanError::AmbiguousColumn(_) => UNKNOWN_COLUMN,
            _ => BAD_REQUEST,
        };
        ServiceError::new(code, e.to_string())
    }
}

impl From<AccessError> for ServiceError {
    fn from(e: AccessError) -> ServiceError {
        match e {
            AccessError::UnknownArchive(_) => ServiceError::new(UNKNOWN_ARCHIVE, e.to_string()),
            AccessError::UnknownTable { .. } => ServiceError::new(UNKNOWN_TABLE, e.to_string()),
            AccessError::UnknownColumn(_) => ServiceError::new(UNKNOWN_COLUMN, e.to_string()),
            AccessError::NotSpatial(_) => ServiceError::new(BAD_REQUEST, e.to_string()),
            AccessError::Unreachable { .. } => ServiceError::new(UNAVAILABLE, e.to_string()),
            AccessError::Remote { code, message, archive } => {
                ServiceError { code, message: format!("archive {archive}: {message}") }
            }
            AccessError::Budget(b) => ServiceError::new(QUOTA, b.to_string()),
        }
    }
}

impl From<DepositError> for ServiceError {
    fn from(e: DepositError) -> ServiceError {
        let code = match e {
            DepositError::Quota { .. } => QUOTA,
            DepositError::Denied(_) => DENIED,
            DepositError::Failed(_) => "internal",
        };
        ServiceError::new(code, e.to_string())
    }
}

impl From<ExecError> for ServiceError {
    fn from(e: ExecError) -> ServiceError {
        match e {
            ExecError::Quota(b) => ServiceError::new(QUOTA, b.to_string()),
            ExecError::Access(a) => a.into(),
            ExecError::Deposit(d) => d.into(),
            ExecError::NoWorkspace => ServiceError::new(UNSUPPORTED, e.to_string()),
        }
    }
}

impl From<XMatchError> for ServiceError {
    fn from(e: XMatchError) -> ServiceError {
        match e {
            XMatchError::TooFewSources => ServiceError::bad_request(e.to_string()),
            XMatchError::Plan(p) => p.into(),
            XMatchError::Access(a) => a.into(),
        }
    }
}

impl From<CutoutError> for ServiceError {
    fn from(e: CutoutError) -> ServiceError {
        match e {
            CutoutError::UnknownTable(_) => ServiceError::new(UNKNOWN_TABLE, e.to_string()),
            CutoutError::BadRequest(m) => ServiceError::bad_request(m),
        }
    }
}

impl From<RegistryError> for ServiceError {
    fn from(e: RegistryError) -> ServiceError {
        let code = match e {
            RegistryError::Duplicate(_) => CONFLICT,
            RegistryError::Unknown(_) => UNKNOWN_ARCHIVE,
            RegistryError::InvalidEndpoint { .. } => BAD_REQUEST,
            RegistryError::Corrupt { .. } | RegistryError::Io(_) => UNAVAILABLE,
        };
        ServiceError::new(code, e.to_string())
    }
}
