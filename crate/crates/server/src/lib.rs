//! HTTP service for formgate.
//!
//! Every request re-reads the current store snapshot and recomputes the caller's
//! effective matrix, so a policy change is visible on the very next request. Data
//! routes answer only in terms of what the caller may see; administrative routes
//! require the [`ADMIN_ROLE`] role.
//!
//! ```text
//! POST   /login                               {"username","password"} -> {"token"}
//! POST   /logout
//! GET    /tables
//! GET    /tables/{table}/grid | /form
//! GET    /tables/{table}/rows?page=N
//! POST   /tables/{table}/rows                 {field: value, ...}
//! PATCH  /tables/{table}/rows/{key}           {field: value, ...}
//! DELETE /tables/{table}/rows/{key}
//! GET    /admin/permissions | /assignments | /catalog
//! POST   /admin/permissions | /assignments | /users | /roles
//! DELETE /admin/permissions | /assignments
//! PUT    /admin/catalog
//! GET    /admin/effective/{user}
//! GET    /admin/explain/{user}?action=&table=&field=
//! GET    /admin/preview/{user}/tables/{table}/{grid|form}
//! ```
//!
//! Mutating admin bodies accept an optional `expectedVersion`; a stale value is
//! answered with 409 and nothing is written.

mod admin;
mod data;
mod error;
mod session;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::FromRequestParts;
use axum::http::header::AUTHORIZATION;
use axum::http::request::Parts;
use axum::routing::{get, post};
use axum::Router;
use formgate_core::SharedStore;

pub use error::ApiError;
pub use session::{SessionTable, DEFAULT_TTL};

/// Holders of this role may use the `/admin` routes.
pub const ADMIN_ROLE: &str = "__admin__";

#[derive(Debug)]
pub struct AppState {
    pub store: SharedStore,
    pub sessions: SessionTable,
}

impl AppState {
    pub fn new(store: SharedStore, session_ttl: Duration) -> Arc<Self> {
        Arc::new(AppState {
            store,
            sessions: SessionTable::new(session_ttl),
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/login", post(data::login))
        .route("/logout", post(data::logout))
        .route("/tables", get(data::tables))
        .route("/tables/{table}/grid", get(data::grid))
        .route("/tables/{table}/form", get(data::form))
        .route("/tables/{table}/rows", get(data::rows).post(data::insert))
        .route(
            "/tables/{table}/rows/{key}",
            axum::routing::patch(data::update).delete(data::delete),
        )
        .route(
            "/admin/permissions",
            get(admin::permissions)
                .post(admin::add_permission)
                .delete(admin::remove_permission),
        )
        .route(
            "/admin/assignments",
            get(admin::assignments)
                .post(admin::add_assignment)
                .delete(admin::remove_assignment),
        )
        .route("/admin/users", post(admin::add_user))
        .route("/admin/roles", post(admin::add_role))
        .route(
            "/admin/catalog",
            get(admin::catalog).put(admin::update_catalog),
        )
        .route("/admin/effective/{user}", get(admin::effective))
        .route("/admin/explain/{user}", get(admin::explain))
        .route(
            "/admin/preview/{user}/tables/{table}/{kind}",
            get(admin::preview),
        )
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// The user behind the request's bearer token.
#[derive(Debug, Clone)]
pub struct Caller {
    pub username: String,
    pub token: String,
}

impl FromRequestParts<Arc<AppState>> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(
        parts: &mut Parts,
        state: &Arc<AppState>,
    ) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or(ApiError::Unauthorized)?
            .trim()
            .to_string();
        let username = state
            .sessions
            .resolve(&token)
            .ok_or(ApiError::Unauthorized)?;
        Ok(Caller { username, token })
    }
}
