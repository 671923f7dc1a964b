//! The JSON error envelope and its mapping to and from module errors.

use std::fmt;

use dsukit_core::anchoring::AnchorError;
use dsukit_core::brickstore::{BrickError, BrickHash};
use dsukit_core::messaging::MessagingError;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    /// Structured extras, e.g. both sides of an anchoring conflict.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl fmt::Display for ErrorBody {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)?;
        if let Some(field) = &self.field {
            write!(f, " (field {field})")?;
        }
        Ok(())
    }
}

/// An error envelope plus the HTTP status it travels with.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: u16,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: u16, code: &str, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_owned(),
                message: message.into(),
                field: None,
                detail: None,
            },
        }
    }

    pub fn with_field(mut self, field: &str) -> ApiError {
        self.body.field = Some(field.to_owned());
        self
    }

    pub fn bad_param(field: &str, message: impl Into<String>) -> ApiError {
        ApiError::new(400, "bad_request", message).with_field(field)
    }

    pub fn unknown_domain(domain: &str) -> ApiError {
        ApiError::new(404, "unknown_domain", format!("domain {domain} is not served here"))
            .with_field("domain")
    }
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HTTP {} {}", self.status, self.body)
    }
}

impl From<AnchorError> for ApiError {
    fn from(e: AnchorError) -> Self {
        let message = e.to_string();
        match e {
            AnchorError::NotFound(_) => ApiError::new(404, "not_found", message),
            AnchorError::AlreadyExists(_) => ApiError::new(409, "already_exists", message),
            AnchorError::Validation(_) => ApiError::new(400, "validation", message),
            AnchorError::Auth(_) => ApiError::new(401, "auth", message),
            AnchorError::Conflict { expected, actual } => {
                let mut err = ApiError::new(409, "conflict", message);
                err.body.detail = Some(serde_json::json!({ "expected": expected, "actual": actual }));
                err
            }
            AnchorError::Unavailable(_) => ApiError::new(503, "unavailable", message),
            AnchorError::Io(_) => ApiError::new(500, "io", message),
            AnchorError::Corrupt(_) => ApiError::new(500, "corrupt", message),
        }
    }
}

impl From<BrickError> for ApiError {
    fn from(e: BrickError) -> Self {
        let message = e.to_string();
        match e {
            BrickError::Empty | BrickError::TooLarge(_) => {
                ApiError::new(400, "bad_request", message).with_field("body")
            }
            BrickError::MalformedHash(_) => ApiError::bad_param("hash", message),
            BrickError::NotFound(_) => ApiError::new(404, "not_found", message),
            BrickError::Corrupted(_) => ApiError::new(409, "corrupted", message),
            BrickError::Domain(_) => ApiError::bad_param("domain", message),
            BrickError::Io(_) => ApiError::new(500, "io", message),
            BrickError::Unavailable(_) => ApiError::new(503, "unavailable", message),
        }
    }
}

impl From<MessagingError> for ApiError {
    fn from(e: MessagingError) -> Self {
        let message = e.to_string();
        match e {
            MessagingError::NotFound(_) => ApiError::new(404, "not_found", message),
            MessagingError::Backpressure { .. } => ApiError::new(429, "backpressure", message),
            MessagingError::Auth(_) => ApiError::new(401, "auth", message),
            MessagingError::UnknownCursor(_) => ApiError::bad_param("after", message),
            MessagingError::Key(_) | MessagingError::Decrypt => ApiError::new(400, "bad_request", message),
            MessagingError::Anchor(a) => a.into(),
        }
    }
}

fn strip_prefix<'a>(message: &'a str, prefix: &str) -> String {
    message.strip_prefix(prefix).unwrap_or(message).to_owned()
}

impl ApiError {
    /// Rebuilds the anchoring error a server reported.
    pub fn into_anchor_error(self) -> AnchorError {
        let m = self.body.message;
        match self.body.code.as_str() {
            "not_found" | "unknown_domain" => AnchorError::NotFound(m),
            "already_exists" => AnchorError::AlreadyExists(m),
            "validation" | "bad_request" => AnchorError::Validation(strip_prefix(&m, "validation failed: ")),
            "auth" => AnchorError::Auth(strip_prefix(&m, "authentication failed: ")),
            "conflict" => {
                let side = |k: &str| {
                    self.body
                        .detail
                        .as_ref()
                        .and_then(|d| d.get(k))
                        .and_then(Value::as_str)
                        .map(str::to_owned)
                };
                AnchorError::Conflict {
                    expected: side("expected"),
                    actual: side("actual"),
                }
            }
            "corrupt" => AnchorError::Corrupt(m),
            "io" => AnchorError::Io(m),
            _ => AnchorError::Unavailable(format!("HTTP {}: {m}", self.status)),
        }
    }

    pub fn into_brick_error(self, hash: Option<BrickHash>) -> BrickError {
        let m = self.body.message;
        match (self.body.code.as_str(), hash) {
            ("not_found", Some(h)) => BrickError::NotFound(h),
            ("corrupted", Some(h)) => BrickError::Corrupted(h),
            ("bad_request", _) if self.body.field.as_deref() == Some("hash") => BrickError::MalformedHash(m),
            ("bad_request", _) if self.body.field.as_deref() == Some("domain") => BrickError::Domain(m),
            ("unknown_domain", _) => BrickError::Domain(m),
            _ => BrickError::Unavailable(format!("HTTP {}: {m}", self.status)),
        }
    }

    pub fn into_messaging_error(self) -> MessagingError {
        let m = self.body.message;
        match self.body.code.as_str() {
            "not_found" | "unknown_domain" => MessagingError::NotFound(m),
            "backpressure" => MessagingError::Backpressure {
                channel: m,
                capacity: 0,
            },
            "auth" => MessagingError::Auth(strip_prefix(&m, "authorization failed: ")),
            "bad_request" if self.body.field.as_deref() == Some("after") => MessagingError::UnknownCursor(m),
            _ => MessagingError::Anchor(AnchorError::Unavailable(format!("HTTP {}: {m}", self.status))),
        }
    }
}
