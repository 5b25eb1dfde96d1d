//! The self-contained store: users, roles, assignments, permissions, schema, rows and
//! interface catalogues, plus the policy version counter.
//!
//! A [`Store`] value is an immutable snapshot as far as readers are concerned.
//! [`SharedStore`] serialises writers: each write clones the current snapshot,
//! applies and validates the change, persists it, then swaps it in. Readers holding
//! an older `Arc<Store>` never see a half-applied mutation.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::auth::{self, User};
use crate::catalog::{CatalogMutation, UiCatalog};
use crate::policy::{
    self, Action, DecisionTrace, EffectiveMatrix, Permission, PolicyError, UserAssignment,
};
use crate::schema::{is_identifier, SchemaModel, TableDef, Value};

/// Rows of one table keyed by primary-key values.
pub(crate) type TableRows = BTreeMap<Vec<Value>, Vec<Value>>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid {entity}: {reason}")]
    Validation { entity: String, reason: String },
    #[error("policy version conflict: expected {expected}, store is at {actual}")]
    Conflict { expected: u64, actual: u64 },
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("store file: {0}")]
    Io(String),
}

impl StoreError {
    pub(crate) fn validation(entity: impl Into<String>, reason: impl Into<String>) -> Self {
        StoreError::Validation {
            entity: entity.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AuthError {
    #[error("authentication failed")]
    Failed,
    #[error("user has no roles")]
    ZeroRoles,
}

/// One administrative change. Passwords are digested when applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicyMutation {
    AddUser { username: String, password: String },
    AddRole { name: String },
    AddAssignment(UserAssignment),
    RemoveAssignment(UserAssignment),
    AddPermission(Permission),
    RemovePermission(Permission),
    Catalog(CatalogMutation),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Store {
    pub(crate) version: u64,
    pub(crate) users: BTreeMap<String, User>,
    pub(crate) roles: BTreeSet<String>,
    pub(crate) assignments: BTreeSet<UserAssignment>,
    pub(crate) permissions: BTreeSet<Permission>,
    pub(crate) schema: SchemaModel,
    #[serde(with = "rows_serde")]
    pub(crate) rows: BTreeMap<String, TableRows>,
    pub(crate) catalog: UiCatalog,
}

impl Store {
    pub fn policy_version(&self) -> u64 {
        self.version
    }

    pub fn schema(&self) -> &SchemaModel {
        &self.schema
    }

    pub fn catalog(&self) -> &UiCatalog {
        &self.catalog
    }

    pub fn users(&self) -> impl Iterator<Item = &User> {
        self.users.values()
    }

    pub fn user(&self, username: &str) -> Option<&User> {
        self.users.get(username)
    }

    pub fn roles(&self) -> impl Iterator<Item = &str> {
        self.roles.iter().map(String::as_str)
    }

    pub fn assignments(&self) -> impl Iterator<Item = &UserAssignment> {
        self.assignments.iter()
    }

    /// Permission records in canonical order.
    pub fn permissions(&self) -> impl Iterator<Item = &Permission> {
        self.permissions.iter()
    }

    pub fn row_count(&self, table: &str) -> usize {
        self.rows.get(table).map_or(0, BTreeMap::len)
    }

    /// Every row of `table` in key order, all fields. Only for trusted, local callers.
    pub(crate) fn all_rows(&self, table: &str) -> impl Iterator<Item = &Vec<Value>> {
        self.rows.get(table).into_iter().flat_map(|r| r.values())
    }

    pub fn roles_of_user(&self, username: &str) -> Result<BTreeSet<String>, PolicyError> {
        if !self.users.contains_key(username) {
            return Err(PolicyError::UnknownUser(username.to_string()));
        }
        Ok(self
            .assignments
            .iter()
            .filter(|a| a.username == username)
            .map(|a| a.role.clone())
            .collect())
    }

    pub fn effective_matrix(&self, username: &str) -> Result<EffectiveMatrix, PolicyError> {
        let roles = self.roles_of_user(username)?;
        Ok(policy::resolve_matrix(
            username,
            &roles,
            &self.permissions,
            &self.schema,
            self.version,
        ))
    }

    pub fn accessible_tables(&self, username: &str) -> Result<Vec<String>, PolicyError> {
        let matrix = self.effective_matrix(username)?;
        Ok(policy::accessible_tables(&matrix, &self.schema))
    }

    pub fn explain(
        &self,
        username: &str,
        action: Action,
        table: &str,
        field: Option<&str>,
    ) -> Result<DecisionTrace, PolicyError> {
        let roles = self.roles_of_user(username)?;
        policy::explain_decision(
            &roles,
            &self.permissions,
            &self.schema,
            action,
            table,
            field,
        )
    }

    /// Verifies credentials. Unknown users and wrong passwords fail identically.
    pub fn authenticate(&self, username: &str, password: &str) -> Result<&User, AuthError> {
        let Some(user) = self.users.get(username) else {
            auth::verify_against_nothing(password);
            return Err(AuthError::Failed);
        };
        if !user.password.verify(password) {
            return Err(AuthError::Failed);
        }
        if !self.assignments.iter().any(|a| a.username == username) {
            return Err(AuthError::ZeroRoles);
        }
        Ok(user)
    }

    /// Applies one mutation atomically. A mutation that changes nothing (adding an
    /// existing record, removing a missing one) leaves the version untouched.
    ///
    /// With `expected_version` set, the call fails with [`StoreError::Conflict`] unless
    /// the store is still at that version.
    pub fn upsert_policy(
        &mut self,
        mutation: PolicyMutation,
        expected_version: Option<u64>,
    ) -> Result<u64, StoreError> {
        if let Some(expected) = expected_version {
            if expected != self.version {
                return Err(StoreError::Conflict {
                    expected,
                    actual: self.version,
                });
            }
        }
        if let PolicyMutation::AddPermission(p) = &mutation {
            p.validate(&self.schema)
                .map_err(|e| StoreError::validation(format!("permission `{p}`"), e.to_string()))?;
        }
        let mut next = self.clone();
        if !next.apply(mutation)? {
            return Ok(self.version);
        }
        next.validate()?;
        next.version += 1;
        *self = next;
        Ok(self.version)
    }

    fn apply(&mut self, mutation: PolicyMutation) -> Result<bool, StoreError> {
        Ok(match mutation {
            PolicyMutation::AddUser { username, password } => {
                if self.users.contains_key(&username) {
                    return Err(StoreError::validation(
                        format!("user `{username}`"),
                        "already exists",
                    ));
                }
                self.users
                    .insert(username.clone(), User::new(username, &password));
                true
            }
            PolicyMutation::AddRole { name } => self.roles.insert(name),
            PolicyMutation::AddAssignment(a) => self.assignments.insert(a),
            PolicyMutation::RemoveAssignment(a) => self.assignments.remove(&a),
            PolicyMutation::AddPermission(p) => self.permissions.insert(p),
            PolicyMutation::RemovePermission(p) => self.permissions.remove(&p),
            PolicyMutation::Catalog(m) => self.catalog.apply(m),
        })
    }

    /// Full integrity check: names, references, row shapes, catalogue.
    pub fn validate(&self) -> Result<(), StoreError> {
        for name in self.users.keys() {
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(StoreError::validation(
                    format!("user `{name}`"),
                    "bad username",
                ));
            }
        }
        for role in &self.roles {
            if !is_identifier(role) {
                return Err(StoreError::validation(
                    format!("role `{role}`"),
                    "bad role name",
                ));
            }
        }
        for a in &self.assignments {
            if !self.users.contains_key(&a.username) {
                return Err(StoreError::validation(
                    format!("assignment `{} -> {}`", a.username, a.role),
                    "unknown user",
                ));
            }
            if !self.roles.contains(&a.role) {
                return Err(StoreError::validation(
                    format!("assignment `{} -> {}`", a.username, a.role),
                    "unknown role",
                ));
            }
        }
        for p in &self.permissions {
            if !self.roles.contains(&p.role) {
                return Err(StoreError::validation(
                    format!("permission `{p}`"),
                    "unknown role",
                ));
            }
            p.validate(&self.schema)
                .map_err(|e| StoreError::validation(format!("permission `{p}`"), e.to_string()))?;
        }
        for (table, rows) in &self.rows {
            let def = self.schema.table(table).ok_or_else(|| {
                StoreError::validation(format!("rows of `{table}`"), "unknown table")
            })?;
            for (key, row) in rows {
                check_row(def, row)
                    .map_err(|r| StoreError::validation(format!("row of `{table}`"), r))?;
                if &row_key(def, row) != key {
                    return Err(StoreError::validation(
                        format!("row of `{table}`"),
                        "key mismatch",
                    ));
                }
            }
        }
        self.catalog
            .validate(&self.schema)
            .map_err(|r| StoreError::validation("catalog", r))?;
        Ok(())
    }

    /// Page `page` of `table` in primary-key order, every field included.
    pub(crate) fn fetch_rows_raw(
        &self,
        table: &str,
        page: usize,
        page_size: usize,
    ) -> Result<Vec<&Vec<Value>>, StoreError> {
        if self.schema.table(table).is_none() {
            return Err(StoreError::UnknownObject(table.to_string()));
        }
        Ok(self
            .all_rows(table)
            .skip(page.saturating_mul(page_size))
            .take(page_size)
            .collect())
    }

    pub(crate) fn table_rows_mut(&mut self, table: &str) -> &mut TableRows {
        self.rows.entry(table.to_string()).or_default()
    }

    pub fn load_file(path: &Path) -> Result<Store, StoreError> {
        let text = fs::read_to_string(path)
            .map_err(|e| StoreError::Io(format!("{}: {e}", path.display())))?;
        let store: Store = serde_json::from_str(&text)
            .map_err(|e| StoreError::Io(format!("{}: {e}", path.display())))?;
        store.validate()?;
        Ok(store)
    }

    /// Writes the store to `path` via a temporary file and rename.
    pub fn save_file(&self, path: &Path) -> Result<(), StoreError> {
        let io = |e: std::io::Error| StoreError::Io(format!("{}: {e}", path.display()));
        let json = serde_json::to_vec(self).map_err(|e| StoreError::Io(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(&json).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }
}

pub(crate) fn row_key(def: &TableDef, row: &[Value]) -> Vec<Value> {
    def.key_positions()
        .into_iter()
        .map(|i| row[i].clone())
        .collect()
}

/// Arity, per-field type and nullability.
pub(crate) fn check_row(def: &TableDef, row: &[Value]) -> Result<(), String> {
    if row.len() != def.fields.len() {
        return Err(format!(
            "expected {} values, got {}",
            def.fields.len(),
            row.len()
        ));
    }
    for (f, v) in def.fields.iter().zip(row) {
        match v.data_type() {
            None if !f.nullable => return Err(format!("`{}` is not nullable", f.name)),
            Some(t) if t != f.data_type => {
                return Err(format!("`{}` expects {}, got {t}", f.name, f.data_type))
            }
            _ => {}
        }
    }
    Ok(())
}

mod rows_serde {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::TableRows;
    use crate::schema::Value;

    type Pairs = BTreeMap<String, Vec<(Vec<Value>, Vec<Value>)>>;

    pub fn serialize<S: Serializer>(
        rows: &BTreeMap<String, TableRows>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let pairs: Pairs = rows
            .iter()
            .map(|(t, r)| {
                (
                    t.clone(),
                    r.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
                )
            })
            .collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<String, TableRows>, D::Error> {
        let pairs = Pairs::deserialize(d)?;
        Ok(pairs
            .into_iter()
            .map(|(t, r)| (t, r.into_iter().collect()))
            .collect())
    }
}

/// Single-writer, multi-reader handle over the current snapshot, optionally backed by
/// a file that is rewritten after every successful mutation.
#[derive(Debug)]
pub struct SharedStore {
    current: RwLock<Arc<Store>>,
    writer: Mutex<()>,
    path: Option<PathBuf>,
}

impl SharedStore {
    pub fn new(store: Store) -> Self {
        SharedStore {
            current: RwLock::new(Arc::new(store)),
            writer: Mutex::new(()),
            path: None,
        }
    }

    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let store = Store::load_file(&path)?;
        Ok(SharedStore {
            path: Some(path),
            ..SharedStore::new(store)
        })
    }

    pub fn snapshot(&self) -> Arc<Store> {
        self.current.read().clone()
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Runs `f` on a private copy of the current snapshot; on success the copy is
    /// persisted and published. On error nothing changes.
    pub fn write<T, E>(&self, f: impl FnOnce(&mut Store) -> Result<T, E>) -> Result<T, E>
    where
        E: From<StoreError>,
    {
        let _guard = self.writer.lock();
        let mut next = Store::clone(&self.snapshot());
        let out = f(&mut next)?;
        if let Some(path) = &self.path {
            next.save_file(path)?;
        }
        *self.current.write() = Arc::new(next);
        Ok(out)
    }

    pub fn upsert_policy(
        &self,
        mutation: PolicyMutation,
        expected_version: Option<u64>,
    ) -> Result<u64, StoreError> {
        self.write(|s| s.upsert_policy(mutation, expected_version))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Sign;

    const SEED: &str = "\
[users]
alice pw-a
bob pw-b
[roles]
Staff
Advisor
[assignments]
alice -> Staff
alice -> Advisor
[permissions]
Advisor, +, Select, Customers.*
Staff, +, Select, Customers.City
Staff, -, Select, Customers.CustomerID
[schema]
table Customers (CustomerID:integer:pk, CompanyName:text:null, Address:text:null, City:text:null)
[rows]
Customers: 1, \"Acme\", \"1 Main St\", \"Kent\"
Customers: 2, \"Birch\", null, \"Akron\"
Customers: 3, \"Cobalt\", null, null
";

    fn store() -> Store {
        Store::from_seed(SEED).unwrap()
    }

    #[test]
    fn roles_of_user() {
        let s = store();
        let roles: Vec<_> = s.roles_of_user("alice").unwrap().into_iter().collect();
        assert_eq!(roles, ["Advisor", "Staff"]);
        assert!(s.roles_of_user("bob").unwrap().is_empty());
        assert_eq!(
            s.roles_of_user("mallory"),
            Err(PolicyError::UnknownUser("mallory".into()))
        );
    }

    #[test]
    fn authentication_outcomes() {
        let s = store();
        assert_eq!(s.authenticate("alice", "pw-a").unwrap().username, "alice");
        assert_eq!(
            s.authenticate("alice", "nope").unwrap_err(),
            AuthError::Failed
        );
        assert_eq!(
            s.authenticate("nobody", "pw-a").unwrap_err(),
            AuthError::Failed
        );
        assert_eq!(
            s.authenticate("bob", "pw-b").unwrap_err(),
            AuthError::ZeroRoles
        );
    }

    #[test]
    fn raw_pagination() {
        let s = store();
        let page0 = s.fetch_rows_raw("Customers", 0, 2).unwrap();
        assert_eq!(page0.len(), 2);
        assert_eq!(page0[0][0], Value::Integer(1));
        assert_eq!(page0[0].len(), 4);
        assert_eq!(s.fetch_rows_raw("Customers", 1, 2).unwrap().len(), 1);
        assert!(s.fetch_rows_raw("Customers", 5, 2).unwrap().is_empty());
        assert_eq!(
            s.fetch_rows_raw("Nope", 0, 2),
            Err(StoreError::UnknownObject("Nope".into()))
        );
    }

    #[test]
    fn mutation_bumps_version_and_flips_decision() {
        let mut s = store();
        assert_eq!(s.policy_version(), 1);
        assert!(s.effective_matrix("alice").unwrap().is_granted(
            Action::Select,
            "Customers",
            "City"
        ));
        let deny = Permission::on_field("Staff", Sign::Deny, Action::Select, "Customers", "City");
        assert_eq!(
            s.upsert_policy(PolicyMutation::AddPermission(deny.clone()), None),
            Ok(2)
        );
        assert!(!s.effective_matrix("alice").unwrap().is_granted(
            Action::Select,
            "Customers",
            "City"
        ));
        // Re-adding is a no-op.
        assert_eq!(
            s.upsert_policy(PolicyMutation::AddPermission(deny.clone()), None),
            Ok(2)
        );
        assert_eq!(
            s.upsert_policy(PolicyMutation::RemovePermission(deny.clone()), None),
            Ok(3)
        );
        assert_eq!(
            s.upsert_policy(PolicyMutation::RemovePermission(deny), None),
            Ok(3)
        );
    }

    #[test]
    fn invalid_mutations_leave_store_untouched() {
        let mut s = store();
        let before = s.clone();
        let field_delete =
            Permission::on_field("Staff", Sign::Grant, Action::Delete, "Customers", "City");
        assert!(matches!(
            s.upsert_policy(PolicyMutation::AddPermission(field_delete), None),
            Err(StoreError::Validation { .. })
        ));
        let unknown_role = Permission::on_table("Ghost", Sign::Grant, Action::Select, "Customers");
        assert!(s
            .upsert_policy(PolicyMutation::AddPermission(unknown_role), None)
            .is_err());
        assert!(s
            .upsert_policy(
                PolicyMutation::AddAssignment(UserAssignment::new("zed", "Staff")),
                None
            )
            .is_err());
        assert!(s
            .upsert_policy(
                PolicyMutation::AddUser {
                    username: "alice".into(),
                    password: "x".into()
                },
                None
            )
            .is_err());
        assert_eq!(s, before);
    }

    #[test]
    fn expected_version_conflict() {
        let mut s = store();
        let m = PolicyMutation::AddRole {
            name: "Clerk".into(),
        };
        assert_eq!(
            s.upsert_policy(m.clone(), Some(7)),
            Err(StoreError::Conflict {
                expected: 7,
                actual: 1
            })
        );
        assert_eq!(s.upsert_policy(m, Some(1)), Ok(2));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.json");
        let s = store();
        s.save_file(&path).unwrap();
        assert_eq!(Store::load_file(&path).unwrap(), s);
    }

    #[test]
    fn shared_store_persists_and_publishes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.json");
        store().save_file(&path).unwrap();
        let shared = SharedStore::open(&path).unwrap();
        let old = shared.snapshot();
        let v = shared
            .upsert_policy(
                PolicyMutation::AddRole {
                    name: "Clerk".into(),
                },
                None,
            )
            .unwrap();
        assert_eq!(v, 2);
        assert_eq!(old.policy_version(), 1);
        assert_eq!(shared.snapshot().policy_version(), 2);
        assert_eq!(Store::load_file(&path).unwrap().policy_version(), 2);

        let err = shared.upsert_policy(
            PolicyMutation::AddRole {
                name: "bad name".into(),
            },
            None,
        );
        assert!(err.is_err());
        assert_eq!(shared.snapshot().policy_version(), 2);
    }

    #[test]
    fn concurrent_writers_serialize() {
        let shared = Arc::new(SharedStore::new(store()));
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let shared = shared.clone();
                std::thread::spawn(move || {
                    for j in 0..10 {
                        shared
                            .upsert_policy(
                                PolicyMutation::AddRole {
                                    name: format!("R{i}_{j}"),
                                },
                                None,
                            )
                            .unwrap();
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(shared.snapshot().policy_version(), 1 + 80);
    }
}
