//! Enforcement of an [`EffectiveMatrix`] on every data operation.
//!
//! Reads are rewritten to the Select-granted columns, and denied columns are
//! omitted entirely rather than nulled. Writes are checked per field (Insert, Update)
//! or per table (Delete). When a write names a field the caller cannot see, the error
//! is the same [`GateError::UnknownField`] a nonexistent field produces. Only fields
//! the caller can see produce [`GateError::PermissionDenied`]. Tables the caller has no
//! grant on at all answer exactly like tables that do not exist.

use std::collections::BTreeMap;

use crate::policy::{Action, EffectiveMatrix};
use crate::schema::{DataType, TableDef, Value, ValueError};
use crate::store::{check_row, row_key, Store};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GateError {
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    /// Rendered exactly like `UnknownObject` so probing reveals nothing.
    #[error("unknown object `{0}`")]
    NoAccessibleFields(String),
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("permission denied on `{0}`")]
    PermissionDenied(String),
    #[error("missing required field `{0}`")]
    MissingRequired(String),
    #[error("no row of `{0}` can be written under the current policy")]
    PolicySchemaConflict(String),
    #[error("invalid value for `{field}`: {reason}")]
    InvalidValue { field: String, reason: String },
    #[error("empty patch")]
    EmptyPatch,
    #[error("row not found")]
    RowNotFound,
    #[error("duplicate primary key")]
    DuplicateKey,
}

impl GateError {
    /// Stable machine-readable code. Hidden and nonexistent objects share one code.
    pub fn code(&self) -> &'static str {
        match self {
            GateError::UnknownObject(_) | GateError::NoAccessibleFields(_) => "unknown_object",
            GateError::UnknownField(_) => "unknown_field",
            GateError::PermissionDenied(_) => "permission_denied",
            GateError::MissingRequired(_) => "missing_required",
            GateError::PolicySchemaConflict(_) => "policy_schema_conflict",
            GateError::InvalidValue { .. } => "invalid_value",
            GateError::EmptyPatch => "empty_patch",
            GateError::RowNotFound => "row_not_found",
            GateError::DuplicateKey => "duplicate_key",
        }
    }
}

/// A write input that can be coerced into a typed cell once the target field is known.
pub trait CellInput {
    fn to_cell(&self, ty: DataType) -> Result<Value, ValueError>;
}

impl CellInput for Value {
    fn to_cell(&self, ty: DataType) -> Result<Value, ValueError> {
        match self.data_type() {
            None => Ok(Value::Null),
            Some(t) if t == ty => Ok(self.clone()),
            Some(_) => Err(ValueError {
                expected: ty,
                got: self.to_string(),
            }),
        }
    }
}

impl CellInput for serde_json::Value {
    fn to_cell(&self, ty: DataType) -> Result<Value, ValueError> {
        Value::from_json(self, ty)
    }
}

/// The Select-granted columns of one table, in schema ordinal order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Projection {
    pub table: String,
    pub columns: Vec<String>,
}

/// One row restricted to a projection: `(field, value)` in projection order.
pub type ProjectedRow = Vec<(String, Value)>;

#[derive(Debug, Clone, PartialEq)]
pub struct RowPatch<V> {
    pub table: String,
    /// Primary-key values rendered as text, comma-separated for composite keys.
    pub key: String,
    pub assignments: BTreeMap<String, V>,
}

/// Renders a primary key for use in paths and responses.
pub fn format_key(key: &[Value]) -> String {
    key.iter()
        .map(Value::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// Parses a rendered key back into typed values. `None` if it cannot match any row.
pub fn parse_key(table: &TableDef, raw: &str) -> Option<Vec<Value>> {
    let key_fields: Vec<_> = table
        .key_positions()
        .into_iter()
        .map(|i| &table.fields[i])
        .collect();
    let parts: Vec<&str> = if key_fields.len() == 1 {
        vec![raw]
    } else {
        raw.split(',').collect()
    };
    if parts.len() != key_fields.len() {
        return None;
    }
    key_fields
        .iter()
        .zip(parts)
        .map(|(f, p)| Value::parse_literal(p, f.data_type).ok())
        .collect()
}

/// Resolves `table` for a caller. A table is addressable when the caller can see at
/// least one of its fields or holds a grant for `action` on it.
fn reachable_table<'s>(
    matrix: &EffectiveMatrix,
    store: &'s Store,
    table: &str,
    action: Action,
) -> Result<&'s TableDef, GateError> {
    let def = store
        .schema()
        .table(table)
        .ok_or_else(|| GateError::UnknownObject(table.to_string()))?;
    if matrix.any_granted(Action::Select, table) || matrix.any_granted(action, table) {
        Ok(def)
    } else {
        Err(GateError::UnknownObject(table.to_string()))
    }
}

/// Three-tier write check for one named field.
fn check_write_field(
    matrix: &EffectiveMatrix,
    table: &TableDef,
    field: &str,
    action: Action,
) -> Result<(), GateError> {
    if table.field(field).is_none() || !matrix.is_granted(Action::Select, &table.name, field) {
        if table.field(field).is_some() && matrix.is_granted(action, &table.name, field) {
            return Ok(());
        }
        return Err(GateError::UnknownField(field.to_string()));
    }
    if matrix.is_granted(action, &table.name, field) {
        Ok(())
    } else {
        Err(GateError::PermissionDenied(field.to_string()))
    }
}

pub fn rewrite_select(
    matrix: &EffectiveMatrix,
    store: &Store,
    table: &str,
) -> Result<Projection, GateError> {
    let def = store
        .schema()
        .table(table)
        .ok_or_else(|| GateError::UnknownObject(table.to_string()))?;
    let columns: Vec<String> = def
        .field_names()
        .filter(|f| matrix.is_granted(Action::Select, table, f))
        .map(str::to_string)
        .collect();
    if columns.is_empty() {
        return Err(GateError::NoAccessibleFields(table.to_string()));
    }
    Ok(Projection {
        table: table.to_string(),
        columns,
    })
}

/// Page `page` of `table`, each row holding exactly the projected columns. Page size
/// comes from the grid catalogue.
pub fn fetch_rows(
    matrix: &EffectiveMatrix,
    store: &Store,
    table: &str,
    page: usize,
) -> Result<Vec<ProjectedRow>, GateError> {
    let projection = rewrite_select(matrix, store, table)?;
    let def = store
        .schema()
        .table(table)
        .expect("projection implies table");
    let positions: Vec<usize> = projection
        .columns
        .iter()
        .map(|c| {
            def.fields
                .iter()
                .position(|f| &f.name == c)
                .expect("projected field exists")
        })
        .collect();
    let page_size = store.catalog().page_size(table) as usize;
    let rows = store
        .fetch_rows_raw(table, page, page_size)
        .map_err(|_| GateError::UnknownObject(table.to_string()))?;
    Ok(rows
        .into_iter()
        .map(|row| {
            projection
                .columns
                .iter()
                .zip(&positions)
                .map(|(c, &i)| (c.clone(), row[i].clone()))
                .collect()
        })
        .collect())
}

fn coerce<V: CellInput>(table: &TableDef, field: &str, input: &V) -> Result<Value, GateError> {
    let def = table.field(field).expect("field checked before coercion");
    let value = input
        .to_cell(def.data_type)
        .map_err(|e| GateError::InvalidValue {
            field: field.to_string(),
            reason: e.to_string(),
        })?;
    if value.is_null() && !def.nullable {
        return Err(GateError::InvalidValue {
            field: field.to_string(),
            reason: "not nullable".into(),
        });
    }
    Ok(value)
}

/// Inserts one row. Unnamed fields take their default, else null. Returns the new
/// row's primary key.
pub fn check_and_insert<V: CellInput>(
    matrix: &EffectiveMatrix,
    store: &mut Store,
    table: &str,
    values: &BTreeMap<String, V>,
) -> Result<Vec<Value>, GateError> {
    let def = reachable_table(matrix, store, table, Action::Insert)?.clone();
    for field in values.keys() {
        check_write_field(matrix, &def, field, Action::Insert)?;
    }

    let conflict = def.fields.iter().filter(|f| f.is_required()).any(|f| {
        let insertable = matrix.is_granted(Action::Insert, table, &f.name);
        let visible = matrix.is_granted(Action::Select, table, &f.name);
        !insertable || (!visible && !values.contains_key(&f.name))
    });
    if conflict {
        return Err(GateError::PolicySchemaConflict(table.to_string()));
    }
    if let Some(missing) = def
        .fields
        .iter()
        .find(|f| f.is_required() && !values.contains_key(&f.name))
    {
        return Err(GateError::MissingRequired(missing.name.clone()));
    }

    let mut row = Vec::with_capacity(def.fields.len());
    for f in &def.fields {
        row.push(match values.get(&f.name) {
            Some(input) => coerce(&def, &f.name, input)?,
            None => f.default.clone().unwrap_or(Value::Null),
        });
    }
    debug_assert!(check_row(&def, &row).is_ok());
    let key = row_key(&def, &row);
    let rows = store.table_rows_mut(table);
    if rows.contains_key(&key) {
        return Err(GateError::DuplicateKey);
    }
    rows.insert(key.clone(), row);
    Ok(key)
}

/// Applies a patch to the row with the given key. Returns the number of rows updated.
pub fn check_and_update<V: CellInput>(
    matrix: &EffectiveMatrix,
    store: &mut Store,
    patch: &RowPatch<V>,
) -> Result<usize, GateError> {
    let def = reachable_table(matrix, store, &patch.table, Action::Update)?.clone();
    if patch.assignments.is_empty() {
        return Err(GateError::EmptyPatch);
    }
    for field in patch.assignments.keys() {
        check_write_field(matrix, &def, field, Action::Update)?;
    }
    let mut updates = Vec::with_capacity(patch.assignments.len());
    for (field, input) in &patch.assignments {
        let pos = def
            .fields
            .iter()
            .position(|f| &f.name == field)
            .expect("checked");
        updates.push((pos, coerce(&def, field, input)?));
    }

    let key = parse_key(&def, &patch.key).ok_or(GateError::RowNotFound)?;
    let rows = store.table_rows_mut(&patch.table);
    let mut row = rows.get(&key).cloned().ok_or(GateError::RowNotFound)?;
    for (pos, value) in updates {
        row[pos] = value;
    }
    let new_key = row_key(&def, &row);
    if new_key != key && rows.contains_key(&new_key) {
        return Err(GateError::DuplicateKey);
    }
    rows.remove(&key);
    rows.insert(new_key, row);
    Ok(1)
}

/// Deletes the row with the given key. Returns the number of rows deleted.
pub fn check_and_delete(
    matrix: &EffectiveMatrix,
    store: &mut Store,
    table: &str,
    key: &str,
) -> Result<usize, GateError> {
    let def = reachable_table(matrix, store, table, Action::Delete)?.clone();
    if !matrix.delete(table).is_grant() {
        return Err(GateError::PermissionDenied(table.to_string()));
    }
    let key = parse_key(&def, key).ok_or(GateError::RowNotFound)?;
    match store.table_rows_mut(table).remove(&key) {
        Some(_) => Ok(1),
        None => Err(GateError::RowNotFound),
    }
}
