//! Flat RBAC model and the role/permission extractor.
//!
//! Permissions are signed (grant or deny) rights on one action, scoped either to a
//! whole table or to a single field. A user's effective decision on an object is
//! obtained by collecting every sign contributed by every role the user holds and
//! folding them with [`resolve_signs`]: any deny wins, otherwise any grant wins,
//! otherwise the answer is deny. "Unspecified" is never stored; it is simply the
//! absence of a record.
//!
//! Table-scoped permissions are expanded against the schema at evaluation time, so
//! a field added to a table later inherits whatever the table-level records say.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::schema::SchemaModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    Select,
    Insert,
    Update,
    Delete,
}

impl Action {
    pub const ALL: [Action; 4] = [
        Action::Select,
        Action::Insert,
        Action::Update,
        Action::Delete,
    ];

    /// Actions decided per field. Delete is decided per table.
    pub const FIELD_ACTIONS: [Action; 3] = [Action::Select, Action::Insert, Action::Update];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Select => "Select",
            Action::Insert => "Insert",
            Action::Update => "Update",
            Action::Delete => "Delete",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| PolicyError::Malformed(format!("unknown action `{s}`")))
    }
}

/// Deny sorts after Grant: the lattice is Unspecified < Grant < Deny.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sign {
    Grant,
    Deny,
}

impl Sign {
    pub fn symbol(self) -> char {
        match self {
            Sign::Grant => '+',
            Sign::Deny => '-',
        }
    }

    pub fn is_grant(self) -> bool {
        self == Sign::Grant
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Grant => "Grant",
            Sign::Deny => "Deny",
        })
    }
}

impl FromStr for Sign {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "+" => Ok(Sign::Grant),
            "-" => Ok(Sign::Deny),
            _ if s.eq_ignore_ascii_case("grant") => Ok(Sign::Grant),
            _ if s.eq_ignore_ascii_case("deny") => Ok(Sign::Deny),
            _ => Err(PolicyError::Malformed(format!("unknown sign `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObjectScope {
    Table(String),
    Field(String, String),
}

impl ObjectScope {
    pub fn table(&self) -> &str {
        match self {
            ObjectScope::Table(t) | ObjectScope::Field(t, _) => t,
        }
    }

    pub fn field(&self) -> Option<&str> {
        match self {
            ObjectScope::Table(_) => None,
            ObjectScope::Field(_, f) => Some(f),
        }
    }
}

impl fmt::Display for ObjectScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectScope::Table(t) => write!(f, "{t}.*"),
            ObjectScope::Field(t, fld) => write!(f, "{t}.{fld}"),
        }
    }
}

impl FromStr for ObjectScope {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (table, field) = s.split_once('.').ok_or_else(|| {
            PolicyError::Malformed(format!("scope `{s}` is not <table>.<field|*>"))
        })?;
        if table.is_empty() || field.is_empty() {
            return Err(PolicyError::Malformed(format!(
                "scope `{s}` has an empty part"
            )));
        }
        Ok(if field == "*" {
            ObjectScope::Table(table.to_string())
        } else {
            ObjectScope::Field(table.to_string(), field.to_string())
        })
    }
}

/// `(role, sign, action, scope)`. Field order drives the canonical ordering of stored records.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "WirePermission", try_from = "WirePermission")]
pub struct Permission {
    pub role: String,
    pub scope: ObjectScope,
    pub action: Action,
    pub sign: Sign,
}

impl Permission {
    pub fn new(role: impl Into<String>, sign: Sign, action: Action, scope: ObjectScope) -> Self {
        Permission {
            role: role.into(),
            scope,
            action,
            sign,
        }
    }

    pub fn on_table(role: &str, sign: Sign, action: Action, table: &str) -> Self {
        Self::new(role, sign, action, ObjectScope::Table(table.into()))
    }

    pub fn on_field(role: &str, sign: Sign, action: Action, table: &str, field: &str) -> Self {
        Self::new(
            role,
            sign,
            action,
            ObjectScope::Field(table.into(), field.into()),
        )
    }

    /// Checks the row-granular Delete rule and that the scope names real objects.
    pub fn validate(&self, schema: &SchemaModel) -> Result<(), PolicyError> {
        if self.action == Action::Delete && self.scope.field().is_some() {
            return Err(PolicyError::FieldScopedDelete(self.scope.to_string()));
        }
        check_scope(&self.scope, schema)
    }
}

impl fmt::Display for Permission {
    /// Tuple syntax, e.g. `Staff, +, Select, Customers.email`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}, {}, {}, {}",
            self.role,
            self.sign.symbol(),
            self.action,
            self.scope
        )
    }
}

impl FromStr for Permission {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [role, sign, action, scope] = parts[..] else {
            return Err(PolicyError::Malformed(format!(
                "expected `<role>, <+|->, <action>, <table>.<field|*>`, got `{s}`"
            )));
        };
        if role.is_empty() {
            return Err(PolicyError::Malformed("empty role name".into()));
        }
        Ok(Permission::new(
            role,
            sign.parse()?,
            action.parse()?,
            scope.parse()?,
        ))
    }
}

/// Flat JSON shape used on the wire: `{role, sign, action, table, field}` with `field: null`
/// for table scope.
#[derive(Serialize, Deserialize)]
struct WirePermission {
    role: String,
    sign: Sign,
    action: Action,
    table: String,
    #[serde(default)]
    field: Option<String>,
}

impl From<Permission> for WirePermission {
    fn from(p: Permission) -> Self {
        let (table, field) = match p.scope {
            ObjectScope::Table(t) => (t, None),
            ObjectScope::Field(t, f) => (t, Some(f)),
        };
        WirePermission {
            role: p.role,
            sign: p.sign,
            action: p.action,
            table,
            field,
        }
    }
}

impl TryFrom<WirePermission> for Permission {
    type Error = PolicyError;

    fn try_from(w: WirePermission) -> Result<Self, Self::Error> {
        if w.role.is_empty() || w.table.is_empty() {
            return Err(PolicyError::Malformed("empty role or table".into()));
        }
        let scope = match w.field {
            None => ObjectScope::Table(w.table),
            Some(f) if f == "*" => ObjectScope::Table(w.table),
            Some(f) => ObjectScope::Field(w.table, f),
        };
        Ok(Permission::new(w.role, w.sign, w.action, scope))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UserAssignment {
    pub username: String,
    pub role: String,
}

impl UserAssignment {
    pub fn new(username: impl Into<String>, role: impl Into<String>) -> Self {
        UserAssignment {
            username: username.into(),
            role: role.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("Delete permissions must be table-scoped, got `{0}`")]
    FieldScopedDelete(String),
    #[error("{0}")]
    Malformed(String),
}

fn check_scope(scope: &ObjectScope, schema: &SchemaModel) -> Result<(), PolicyError> {
    let table = schema
        .table(scope.table())
        .ok_or_else(|| PolicyError::UnknownObject(scope.to_string()))?;
    if let Some(f) = scope.field() {
        if table.field(f).is_none() {
            return Err(PolicyError::UnknownObject(scope.to_string()));
        }
    }
    Ok(())
}

/// Folds a multiset of signs: any Deny wins, else any Grant wins, else Deny.
pub fn resolve_signs<I>(signs: I) -> Sign
where
    I: IntoIterator<Item = Sign>,
{
    let mut result = Sign::Deny;
    for sign in signs {
        match sign {
            Sign::Deny => return Sign::Deny,
            Sign::Grant => result = Sign::Grant,
        }
    }
    result
}

/// A permission applied to one concrete field.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldDecision {
    pub role: String,
    pub sign: Sign,
    pub action: Action,
    pub table: String,
    pub field: String,
}

/// Expands a permission to one tuple per field it covers, using the fields the
/// table has right now.
pub fn expand_permission(
    perm: &Permission,
    schema: &SchemaModel,
) -> Result<Vec<FieldDecision>, PolicyError> {
    check_scope(&perm.scope, schema)?;
    let table = schema.table(perm.scope.table()).expect("checked above");
    let tuple = |field: &str| FieldDecision {
        role: perm.role.clone(),
        sign: perm.sign,
        action: perm.action,
        table: table.name.clone(),
        field: field.to_string(),
    };
    Ok(match perm.scope.field() {
        Some(f) => vec![tuple(f)],
        None => table.field_names().map(tuple).collect(),
    })
}

/// Fully resolved decisions for one user at one policy version.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EffectiveMatrix {
    pub username: String,
    pub policy_version: u64,
    field_decisions: BTreeMap<(Action, String, String), Sign>,
    delete_decisions: BTreeMap<String, Sign>,
}

impl EffectiveMatrix {
    /// Decision for a field-level action. Anything not in the matrix is Deny.
    pub fn field(&self, action: Action, table: &str, field: &str) -> Sign {
        if action == Action::Delete {
            return self.delete(table);
        }
        self.field_decisions
            .get(&(action, table.to_string(), field.to_string()))
            .copied()
            .unwrap_or(Sign::Deny)
    }

    pub fn delete(&self, table: &str) -> Sign {
        self.delete_decisions
            .get(table)
            .copied()
            .unwrap_or(Sign::Deny)
    }

    pub fn is_granted(&self, action: Action, table: &str, field: &str) -> bool {
        self.field(action, table, field).is_grant()
    }

    /// `((action, table, field), sign)` in (action, table, field) order.
    pub fn field_decisions(&self) -> impl Iterator<Item = (&(Action, String, String), Sign)> {
        self.field_decisions.iter().map(|(k, v)| (k, *v))
    }

    pub fn delete_decisions(&self) -> impl Iterator<Item = (&str, Sign)> {
        self.delete_decisions.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// True if any field of `table` has `action` granted.
    pub fn any_granted(&self, action: Action, table: &str) -> bool {
        if action == Action::Delete {
            return self.delete(table).is_grant();
        }
        self.field_decisions
            .iter()
            .any(|((a, t, _), s)| *a == action && t == table && s.is_grant())
    }
}

/// Builds the effective matrix for a user holding `roles`.
///
/// Records whose scope no longer matches the schema contribute nothing; a validated
/// store never holds such records.
pub fn resolve_matrix<'a, I>(
    username: &str,
    roles: &BTreeSet<String>,
    permissions: I,
    schema: &SchemaModel,
    policy_version: u64,
) -> EffectiveMatrix
where
    I: IntoIterator<Item = &'a Permission>,
{
    let mut field_signs: HashMap<(Action, String, String), Vec<Sign>> = HashMap::new();
    let mut delete_signs: HashMap<String, Vec<Sign>> = HashMap::new();

    for perm in permissions.into_iter().filter(|p| roles.contains(&p.role)) {
        if perm.action == Action::Delete {
            if let ObjectScope::Table(t) = &perm.scope {
                if schema.table(t).is_some() {
                    delete_signs.entry(t.clone()).or_default().push(perm.sign);
                }
            }
            continue;
        }
        let Ok(tuples) = expand_permission(perm, schema) else {
            continue;
        };
        for d in tuples {
            field_signs
                .entry((d.action, d.table, d.field))
                .or_default()
                .push(d.sign);
        }
    }

    let mut field_decisions = BTreeMap::new();
    let mut delete_decisions = BTreeMap::new();
    for table in schema.tables() {
        for field in table.field_names() {
            for action in Action::FIELD_ACTIONS {
                let key = (action, table.name.clone(), field.to_string());
                let sign = resolve_signs(field_signs.get(&key).into_iter().flatten().copied());
                field_decisions.insert(key, sign);
            }
        }
        let sign = resolve_signs(delete_signs.get(&table.name).into_iter().flatten().copied());
        delete_decisions.insert(table.name.clone(), sign);
    }

    EffectiveMatrix {
        username: username.to_string(),
        policy_version,
        field_decisions,
        delete_decisions,
    }
}

/// Tables with at least one Select-granted field, in lexicographic order.
pub fn accessible_tables(matrix: &EffectiveMatrix, schema: &SchemaModel) -> Vec<String> {
    schema
        .tables()
        .filter(|t| matrix.any_granted(Action::Select, &t.name))
        .map(|t| t.name.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contribution {
    pub role: String,
    pub permission: Permission,
}

/// Replay of the resolution for one decision: every role considered, every record
/// that contributed a sign, and the final outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionTrace {
    pub action: Action,
    pub table: String,
    pub field: Option<String>,
    pub roles: Vec<String>,
    pub contributions: Vec<Contribution>,
    pub result: Sign,
}

pub fn explain_decision<'a, I>(
    roles: &BTreeSet<String>,
    permissions: I,
    schema: &SchemaModel,
    action: Action,
    table: &str,
    field: Option<&str>,
) -> Result<DecisionTrace, PolicyError>
where
    I: IntoIterator<Item = &'a Permission>,
{
    let scope = match (action, field) {
        (Action::Delete, _) => ObjectScope::Table(table.to_string()),
        (_, Some(f)) => ObjectScope::Field(table.to_string(), f.to_string()),
        (_, None) => {
            return Err(PolicyError::Malformed(format!(
                "{action} is decided per field"
            )));
        }
    };
    check_scope(&scope, schema)?;

    let mut contributions: Vec<Contribution> = permissions
        .into_iter()
        .filter(|p| roles.contains(&p.role) && p.action == action)
        .filter(|p| match (&p.scope, &scope) {
            (ObjectScope::Table(t), _) => t == table,
            (ObjectScope::Field(t, f), ObjectScope::Field(_, want)) => t == table && f == want,
            (ObjectScope::Field(..), ObjectScope::Table(_)) => false,
        })
        .map(|p| Contribution {
            role: p.role.clone(),
            permission: p.clone(),
        })
        .collect();
    contributions.sort_by(|a, b| a.permission.cmp(&b.permission));
    contributions.dedup();

    let result = resolve_signs(contributions.iter().map(|c| c.permission.sign));
    Ok(DecisionTrace {
        action,
        table: table.to_string(),
        field: scope.field().map(str::to_string),
        roles: roles.iter().cloned().collect(),
        contributions,
        result,
    })
}

impl DecisionTrace {
    /// One `role<TAB>record` line per contribution, then `result<TAB>sign`.
    pub fn to_lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .contributions
            .iter()
            .map(|c| format!("{}\t{}", c.role, c.permission))
            .collect();
        if out.is_empty() {
            out.push("no permissions; default deny".to_string());
        }
        out.push(format!("result\t{}", self.result));
        out
    }
}
