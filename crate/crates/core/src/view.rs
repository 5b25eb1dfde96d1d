//! A user's resolved view of one store snapshot.
//!
//! Every read and write made on behalf of a user goes through a [`UserView`]: it
//! binds the snapshot, resolves the user's roles and effective matrix once, and
//! routes all data access through the gate. The HTTP service and the offline CLI
//! both use it, which is what keeps their outputs byte-identical.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::descriptor::{build_descriptor, serialize_descriptor, Descriptor, DescriptorKind};
use crate::gate::{self, CellInput, GateError, ProjectedRow, RowPatch};
use crate::policy::{self, Action, EffectiveMatrix, PolicyError, Sign};
use crate::schema::Value;
use crate::store::Store;

pub struct UserView<'s> {
    store: &'s Store,
    matrix: EffectiveMatrix,
}

impl<'s> UserView<'s> {
    pub fn new(store: &'s Store, username: &str) -> Result<Self, PolicyError> {
        let matrix = store.effective_matrix(username)?;
        Ok(UserView { store, matrix })
    }

    pub fn matrix(&self) -> &EffectiveMatrix {
        &self.matrix
    }

    pub fn policy_version(&self) -> u64 {
        self.matrix.policy_version
    }

    pub fn tables(&self) -> Vec<String> {
        policy::accessible_tables(&self.matrix, self.store.schema())
    }

    pub fn descriptor(&self, table: &str, kind: DescriptorKind) -> Result<Descriptor, GateError> {
        build_descriptor(&self.matrix, self.store, table, kind)
    }

    /// Canonical descriptor text, as served and exported.
    pub fn descriptor_text(&self, table: &str, kind: DescriptorKind) -> Result<String, GateError> {
        self.descriptor(table, kind)
            .map(|d| serialize_descriptor(&d))
    }

    pub fn rows(&self, table: &str, page: usize) -> Result<Vec<ProjectedRow>, GateError> {
        gate::fetch_rows(&self.matrix, self.store, table, page)
    }

    pub fn report(&self) -> EffectiveReport {
        EffectiveReport::new(self.store, &self.matrix)
    }
}

/// Gated writes against a mutable store, checked with a matrix computed from that
/// same store.
pub fn insert_as<V: CellInput>(
    store: &mut Store,
    username: &str,
    table: &str,
    values: &BTreeMap<String, V>,
) -> Result<Vec<Value>, WriteError> {
    let matrix = store.effective_matrix(username)?;
    Ok(gate::check_and_insert(&matrix, store, table, values)?)
}

pub fn update_as<V: CellInput>(
    store: &mut Store,
    username: &str,
    patch: &RowPatch<V>,
) -> Result<usize, WriteError> {
    let matrix = store.effective_matrix(username)?;
    Ok(gate::check_and_update(&matrix, store, patch)?)
}

pub fn delete_as(
    store: &mut Store,
    username: &str,
    table: &str,
    key: &str,
) -> Result<usize, WriteError> {
    let matrix = store.effective_matrix(username)?;
    Ok(gate::check_and_delete(&matrix, store, table, key)?)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WriteError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FieldDecisionRow {
    pub table: String,
    pub field: String,
    pub action: Action,
    pub decision: Sign,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DeleteDecisionRow {
    pub table: String,
    pub decision: Sign,
}

/// The whole matrix as rows, ordered by table, then field ordinal, then action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EffectiveReport {
    pub username: String,
    pub policy_version: u64,
    pub fields: Vec<FieldDecisionRow>,
    pub deletes: Vec<DeleteDecisionRow>,
}

impl EffectiveReport {
    pub fn new(store: &Store, matrix: &EffectiveMatrix) -> Self {
        let mut fields = Vec::new();
        let mut deletes = Vec::new();
        for table in store.schema().tables() {
            for field in table.field_names() {
                for action in Action::FIELD_ACTIONS {
                    fields.push(FieldDecisionRow {
                        table: table.name.clone(),
                        field: field.to_string(),
                        action,
                        decision: matrix.field(action, &table.name, field),
                    });
                }
            }
            deletes.push(DeleteDecisionRow {
                table: table.name.clone(),
                decision: matrix.delete(&table.name),
            });
        }
        EffectiveReport {
            username: matrix.username.clone(),
            policy_version: matrix.policy_version,
            fields,
            deletes,
        }
    }

    /// Tab-separated lines `table field action decision`; Delete rows use `*` as the
    /// field and follow their table's field rows.
    pub fn to_lines(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.fields.len() + self.deletes.len());
        for d in &self.deletes {
            for f in self.fields.iter().filter(|f| f.table == d.table) {
                out.push(format!(
                    "{}\t{}\t{}\t{}",
                    f.table, f.field, f.action, f.decision
                ));
            }
            out.push(format!(
                "{}\t*\t{}\t{}",
                d.table,
                Action::Delete,
                d.decision
            ));
        }
        out
    }
}
