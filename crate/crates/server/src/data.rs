use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use formgate_core::gate::{self, format_key, RowPatch};
use formgate_core::view::{delete_as, insert_as, update_as};
use formgate_core::{AuthError, DescriptorKind, PolicyError, UserView};
use serde::Deserialize;
use serde_json::{json, Value as J};

use crate::{ApiError, AppState, Caller};

pub(crate) fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::BadRequest(e.body_text()))
}

/// Maps a failure to build a caller's view. A user deleted after login is treated
/// like an expired session.
pub(crate) fn view_error(e: PolicyError) -> ApiError {
    match e {
        PolicyError::UnknownUser(_) => ApiError::Unauthorized,
        other => ApiError::Policy(other),
    }
}

pub(crate) fn json_text(text: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], text).into_response()
}

#[derive(Deserialize)]
pub(crate) struct Credentials {
    username: String,
    password: String,
}

pub(crate) async fn login(
    State(state): State<Arc<AppState>>,
    payload: Result<Json<Credentials>, JsonRejection>,
) -> Result<Json<J>, ApiError> {
    let creds = body(payload)?;
    let store = state.store.snapshot();
    let username = creds.username.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        store
            .authenticate(&creds.username, &creds.password)
            .map(|_| ())
    })
    .await
    .unwrap_or(Err(AuthError::Failed));
    outcome.map_err(ApiError::Auth)?;
    let token = state.sessions.issue(&username);
    Ok(Json(json!({
        "token": token,
        "expiresIn": state.sessions.ttl().as_secs(),
    })))
}

pub(crate) async fn logout(State(state): State<Arc<AppState>>, caller: Caller) -> StatusCode {
    state.sessions.revoke(&caller.token);
    StatusCode::NO_CONTENT
}

pub(crate) async fn tables(
    State(state): State<Arc<AppState>>,
    caller: Caller,
) -> Result<Json<J>, ApiError> {
    let store = state.store.snapshot();
    let view = UserView::new(&store, &caller.username).map_err(view_error)?;
    Ok(Json(json!({
        "policyVersion": view.policy_version(),
        "tables": view.tables(),
    })))
}

fn descriptor(
    state: &AppState,
    caller: &Caller,
    table: &str,
    kind: DescriptorKind,
) -> Result<Response, ApiError> {
    let store = state.store.snapshot();
    let view = UserView::new(&store, &caller.username).map_err(view_error)?;
    Ok(json_text(view.descriptor_text(table, kind)?))
}

pub(crate) async fn grid(
    State(state): State<Arc<AppState>>,
    caller: Caller,
    Path(table): Path<String>,
) -> Result<Response, ApiError> {
    descriptor(&state, &caller, &table, DescriptorKind::Grid)
}

pub(crate) async fn form(
    State(state): State<Arc<AppState>>,
    caller: Caller,
    Path(table): Path<String>,
) -> Result<Response, ApiError> {
    descriptor(&state, &caller, &table, DescriptorKind::Form)
}

#[derive(Deserialize)]
pub(crate) struct PageQuery {
    #[serde(default)]
    page: usize,
}

/// One page of rows. Rows are arrays aligned with `columns`, which lists exactly
/// the fields the caller may select, in schema order.
pub(crate) async fn rows(
    State(state): State<Arc<AppState>>,
    caller: Caller,
    Path(table): Path<String>,
    Query(query): Query<PageQuery>,
) -> Result<Json<J>, ApiError> {
    let store = state.store.snapshot();
    let view = UserView::new(&store, &caller.username).map_err(view_error)?;
    let projection = gate::rewrite_select(view.matrix(), &store, &table)?;
    let rows: Vec<Vec<J>> = view
        .rows(&table, query.page)?
        .into_iter()
        .map(|row| row.into_iter().map(|(_, v)| v.to_json()).collect())
        .collect();
    Ok(Json(json!({
        "table": table,
        "policyVersion": view.policy_version(),
        "page": query.page,
        "pageSize": store.catalog().page_size(&table),
        "columns": projection.columns,
        "rows": rows,
    })))
}

pub(crate) async fn insert(
    State(state): State<Arc<AppState>>,
    caller: Caller,
    Path(table): Path<String>,
    payload: Result<Json<BTreeMap<String, J>>, JsonRejection>,
) -> Result<(StatusCode, Json<J>), ApiError> {
    let values = body(payload)?;
    let key = state
        .store
        .write(|s| insert_as(s, &caller.username, &table, &values))?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "key": format_key(&key) })),
    ))
}

pub(crate) async fn update(
    State(state): State<Arc<AppState>>,
    caller: Caller,
    Path((table, key)): Path<(String, String)>,
    payload: Result<Json<BTreeMap<String, J>>, JsonRejection>,
) -> Result<Json<J>, ApiError> {
    let patch = RowPatch {
        table,
        key,
        assignments: body(payload)?,
    };
    let n = state
        .store
        .write(|s| update_as(s, &caller.username, &patch))?;
    Ok(Json(json!({ "updated": n })))
}

pub(crate) async fn delete(
    State(state): State<Arc<AppState>>,
    caller: Caller,
    Path((table, key)): Path<(String, String)>,
) -> Result<Json<J>, ApiError> {
    let n = state
        .store
        .write(|s| delete_as(s, &caller.username, &table, &key))?;
    Ok(Json(json!({ "deleted": n })))
}
