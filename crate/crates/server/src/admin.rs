use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::response::Response;
use axum::Json;
use formgate_core::{
    Action, CatalogMutation, DescriptorKind, Permission, PolicyMutation, UserAssignment, UserView,
};
use serde::Deserialize;
use serde_json::{json, Value as J};

use crate::data::{body, json_text};
use crate::{ApiError, AppState, Caller, ADMIN_ROLE};

/// A caller holding the administrator role in the current snapshot.
pub(crate) struct Admin;

impl FromRequestParts<Arc<AppState>> for Admin {
    type Rejection = ApiError;

    async fn from_request_parts(
        parts: &mut Parts,
        state: &Arc<AppState>,
    ) -> Result<Self, Self::Rejection> {
        let caller = Caller::from_request_parts(parts, state).await?;
        let roles = state
            .store
            .snapshot()
            .roles_of_user(&caller.username)
            .map_err(|_| ApiError::Unauthorized)?;
        if roles.contains(ADMIN_ROLE) {
            Ok(Admin)
        } else {
            Err(ApiError::Forbidden)
        }
    }
}

/// A mutation body plus an optional optimistic-concurrency check.
#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
pub(crate) struct Versioned<T> {
    #[serde(flatten)]
    item: T,
    #[serde(default)]
    expected_version: Option<u64>,
}

fn apply(
    state: &AppState,
    mutation: PolicyMutation,
    expected: Option<u64>,
) -> Result<Json<J>, ApiError> {
    let version = state.store.upsert_policy(mutation, expected)?;
    Ok(Json(json!({ "policyVersion": version })))
}

pub(crate) async fn permissions(State(state): State<Arc<AppState>>, _: Admin) -> Json<J> {
    let store = state.store.snapshot();
    let list: Vec<&Permission> = store.permissions().collect();
    Json(json!({ "policyVersion": store.policy_version(), "permissions": list }))
}

pub(crate) async fn add_permission(
    State(state): State<Arc<AppState>>,
    _: Admin,
    payload: Result<Json<Versioned<Permission>>, JsonRejection>,
) -> Result<Json<J>, ApiError> {
    let v = body(payload)?;
    apply(
        &state,
        PolicyMutation::AddPermission(v.item),
        v.expected_version,
    )
}

pub(crate) async fn remove_permission(
    State(state): State<Arc<AppState>>,
    _: Admin,
    payload: Result<Json<Versioned<Permission>>, JsonRejection>,
) -> Result<Json<J>, ApiError> {
    let v = body(payload)?;
    apply(
        &state,
        PolicyMutation::RemovePermission(v.item),
        v.expected_version,
    )
}

pub(crate) async fn assignments(State(state): State<Arc<AppState>>, _: Admin) -> Json<J> {
    let store = state.store.snapshot();
    let list: Vec<&UserAssignment> = store.assignments().collect();
    Json(json!({ "policyVersion": store.policy_version(), "assignments": list }))
}

pub(crate) async fn add_assignment(
    State(state): State<Arc<AppState>>,
    _: Admin,
    payload: Result<Json<Versioned<UserAssignment>>, JsonRejection>,
) -> Result<Json<J>, ApiError> {
    let v = body(payload)?;
    apply(
        &state,
        PolicyMutation::AddAssignment(v.item),
        v.expected_version,
    )
}

pub(crate) async fn remove_assignment(
    State(state): State<Arc<AppState>>,
    _: Admin,
    payload: Result<Json<Versioned<UserAssignment>>, JsonRejection>,
) -> Result<Json<J>, ApiError> {
    let v = body(payload)?;
    apply(
        &state,
        PolicyMutation::RemoveAssignment(v.item),
        v.expected_version,
    )
}

#[derive(Deserialize)]
pub(crate) struct NewUser {
    username: String,
    password: String,
}

pub(crate) async fn add_user(
    State(state): State<Arc<AppState>>,
    _: Admin,
    payload: Result<Json<Versioned<NewUser>>, JsonRejection>,
) -> Result<Json<J>, ApiError> {
    let v = body(payload)?;
    let mutation = PolicyMutation::AddUser {
        username: v.item.username,
        password: v.item.password,
    };
    apply(&state, mutation, v.expected_version)
}

#[derive(Deserialize)]
pub(crate) struct NewRole {
    name: String,
}

pub(crate) async fn add_role(
    State(state): State<Arc<AppState>>,
    _: Admin,
    payload: Result<Json<Versioned<NewRole>>, JsonRejection>,
) -> Result<Json<J>, ApiError> {
    let v = body(payload)?;
    apply(
        &state,
        PolicyMutation::AddRole { name: v.item.name },
        v.expected_version,
    )
}

pub(crate) async fn catalog(State(state): State<Arc<AppState>>, _: Admin) -> Json<J> {
    let store = state.store.snapshot();
    Json(json!({ "policyVersion": store.policy_version(), "catalog": store.catalog() }))
}

pub(crate) async fn update_catalog(
    State(state): State<Arc<AppState>>,
    _: Admin,
    payload: Result<Json<Versioned<CatalogMutation>>, JsonRejection>,
) -> Result<Json<J>, ApiError> {
    let v = body(payload)?;
    apply(&state, PolicyMutation::Catalog(v.item), v.expected_version)
}

pub(crate) async fn effective(
    State(state): State<Arc<AppState>>,
    _: Admin,
    Path(user): Path<String>,
) -> Result<Json<J>, ApiError> {
    let store = state.store.snapshot();
    let view = UserView::new(&store, &user)?;
    Ok(Json(json!(view.report())))
}

#[derive(Deserialize)]
pub(crate) struct ExplainQuery {
    action: String,
    table: String,
    field: Option<String>,
}

pub(crate) async fn explain(
    State(state): State<Arc<AppState>>,
    _: Admin,
    Path(user): Path<String>,
    Query(q): Query<ExplainQuery>,
) -> Result<Json<J>, ApiError> {
    let action: Action = q.action.parse()?;
    let store = state.store.snapshot();
    let trace = store.explain(&user, action, &q.table, q.field.as_deref())?;
    let contributions: Vec<J> = trace
        .contributions
        .iter()
        .map(|c| json!({ "role": c.role, "permission": c.permission }))
        .collect();
    Ok(Json(json!({
        "action": trace.action,
        "table": trace.table,
        "field": trace.field,
        "roles": trace.roles,
        "contributions": contributions,
        "result": trace.result,
        "lines": trace.to_lines(),
    })))
}

/// A descriptor exactly as `user` would receive it.
pub(crate) async fn preview(
    State(state): State<Arc<AppState>>,
    _: Admin,
    Path((user, table, kind)): Path<(String, String, String)>,
) -> Result<Response, ApiError> {
    let kind: DescriptorKind = kind.parse().map_err(ApiError::BadRequest)?;
    let store = state.store.snapshot();
    let view = UserView::new(&store, &user)?;
    Ok(json_text(view.descriptor_text(&table, kind)?))
}
