use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use formgate_core::view::WriteError;
use formgate_core::{AuthError, GateError, PolicyError, StoreError};
use serde_json::json;

/// Every failure the service reports, rendered as `{"error": code, "message": text}`.
#[derive(Debug)]
pub enum ApiError {
    Unauthorized,
    Forbidden,
    Auth(AuthError),
    Gate(GateError),
    Store(StoreError),
    Policy(PolicyError),
    BadRequest(String),
}

impl ApiError {
    fn parts(&self) -> (StatusCode, &'static str, String) {
        match self {
            ApiError::Unauthorized => (
                StatusCode::UNAUTHORIZED,
                "unauthorized",
                "missing, unknown or expired session".into(),
            ),
            ApiError::Forbidden => (
                StatusCode::FORBIDDEN,
                "forbidden",
                "administrator role required".into(),
            ),
            ApiError::Auth(e @ AuthError::Failed) => {
                (StatusCode::UNAUTHORIZED, "auth_failed", e.to_string())
            }
            ApiError::Auth(e @ AuthError::ZeroRoles) => {
                (StatusCode::FORBIDDEN, "zero_roles", e.to_string())
            }
            ApiError::Gate(e) => {
                let status = match e {
                    GateError::UnknownObject(_)
                    | GateError::NoAccessibleFields(_)
                    | GateError::RowNotFound => StatusCode::NOT_FOUND,
                    GateError::PermissionDenied(_) => StatusCode::FORBIDDEN,
                    GateError::PolicySchemaConflict(_) | GateError::DuplicateKey => {
                        StatusCode::CONFLICT
                    }
                    GateError::UnknownField(_)
                    | GateError::MissingRequired(_)
                    | GateError::InvalidValue { .. }
                    | GateError::EmptyPatch => StatusCode::BAD_REQUEST,
                };
                (status, e.code(), e.to_string())
            }
            ApiError::Store(e) => match e {
                StoreError::Conflict { .. } => {
                    (StatusCode::CONFLICT, "version_conflict", e.to_string())
                }
                StoreError::UnknownObject(_) => {
                    (StatusCode::NOT_FOUND, "unknown_object", e.to_string())
                }
                StoreError::Parse { .. } | StoreError::Validation { .. } => {
                    (StatusCode::BAD_REQUEST, "invalid", e.to_string())
                }
                StoreError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string()),
            },
            ApiError::Policy(e) => match e {
                PolicyError::UnknownUser(_) => {
                    (StatusCode::NOT_FOUND, "unknown_user", e.to_string())
                }
                PolicyError::UnknownObject(_) => {
                    (StatusCode::NOT_FOUND, "unknown_object", e.to_string())
                }
                PolicyError::FieldScopedDelete(_) | PolicyError::Malformed(_) => {
                    (StatusCode::BAD_REQUEST, "invalid", e.to_string())
                }
            },
            ApiError::BadRequest(msg) => (StatusCode::BAD_REQUEST, "bad_request", msg.clone()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, message) = self.parts();
        if status.is_server_error() {
            tracing::error!(%message, "request failed");
        }
        (status, Json(json!({ "error": code, "message": message }))).into_response()
    }
}

impl From<GateError> for ApiError {
    fn from(e: GateError) -> Self {
        ApiError::Gate(e)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::Store(e)
    }
}

impl From<PolicyError> for ApiError {
    fn from(e: PolicyError) -> Self {
        ApiError::Policy(e)
    }
}

impl From<WriteError> for ApiError {
    fn from(e: WriteError) -> Self {
        match e {
            WriteError::Gate(g) => ApiError::Gate(g),
            WriteError::Store(s) => ApiError::Store(s),
            // The session outlived the user; treat it like any dead session.
            WriteError::Policy(PolicyError::UnknownUser(_)) => ApiError::Unauthorized,
            WriteError::Policy(p) => ApiError::Policy(p),
        }
    }
}
