//! Permission-filtered interface descriptors.
//!
//! A grid descriptor drives the Select/Update/Delete surface and a form descriptor
//! the Insert surface. Both are rebuilt from the current snapshot on every request
//! and carry the policy version they were built at. A field the caller cannot Select
//! never appears in either, not even as a lookup target.

use serde::{Deserialize, Serialize};

use crate::catalog::{control_for_field, ControlKind, DEFAULT_COLUMN_WIDTH};
use crate::gate::{rewrite_select, GateError};
use crate::policy::{Action, EffectiveMatrix};
use crate::schema::TableDef;
use crate::store::Store;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Descriptor {
    Grid(GridDescriptor),
    Form(FormDescriptor),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescriptorKind {
    Grid,
    Form,
}

impl std::str::FromStr for DescriptorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grid" => Ok(DescriptorKind::Grid),
            "form" => Ok(DescriptorKind::Form),
            _ => Err(format!("descriptor kind must be grid or form, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GridDescriptor {
    pub table: String,
    pub title: String,
    pub policy_version: u64,
    pub can_delete: bool,
    pub page_size: u32,
    pub columns: Vec<ColumnSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ColumnSpec {
    pub field: String,
    pub header: String,
    pub width: u32,
    pub ordinal: u32,
    pub editable: bool,
    pub control_kind: ControlKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FormDescriptor {
    pub table: String,
    pub title: String,
    pub policy_version: u64,
    pub layout_columns: u32,
    pub controls: Vec<ControlSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ControlSpec {
    pub field: String,
    pub label: String,
    pub control_kind: ControlKind,
    pub row: u32,
    pub col: u32,
    pub tab_order: u32,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lookup: Option<LookupSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LookupSpec {
    pub table: String,
    pub key_field: String,
    pub display_field: String,
    pub options: Vec<LookupOption>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LookupOption {
    pub key: serde_json::Value,
    pub display: serde_json::Value,
}

impl Descriptor {
    pub fn table(&self) -> &str {
        match self {
            Descriptor::Grid(g) => &g.table,
            Descriptor::Form(f) => &f.table,
        }
    }

    pub fn policy_version(&self) -> u64 {
        match self {
            Descriptor::Grid(g) => g.policy_version,
            Descriptor::Form(f) => f.policy_version,
        }
    }

    /// Field names in render order.
    pub fn fields(&self) -> Vec<&str> {
        match self {
            Descriptor::Grid(g) => g.columns.iter().map(|c| c.field.as_str()).collect(),
            Descriptor::Form(f) => f.controls.iter().map(|c| c.field.as_str()).collect(),
        }
    }
}

pub fn build_grid_descriptor(
    matrix: &EffectiveMatrix,
    store: &Store,
    table: &str,
) -> Result<GridDescriptor, GateError> {
    let projection = rewrite_select(matrix, store, table)?;
    let def = store
        .schema()
        .table(table)
        .expect("projection implies table");
    let catalog = store.catalog();

    let mut columns: Vec<(u32, usize, ColumnSpec)> = projection
        .columns
        .iter()
        .map(|name| {
            let field = def.field(name).expect("projected field exists");
            let stored = catalog.grid_column(table, name);
            let ordinal = stored.map_or(field.ordinal as u32, |c| c.ordinal);
            let spec = ColumnSpec {
                field: name.clone(),
                header: stored.map_or_else(|| name.clone(), |c| c.header.clone()),
                width: stored.map_or(DEFAULT_COLUMN_WIDTH, |c| c.width),
                ordinal,
                editable: matrix.is_granted(Action::Update, table, name),
                control_kind: control_for_field(def, field, catalog).kind,
            };
            (ordinal, field.ordinal, spec)
        })
        .collect();
    columns.sort_by_key(|(ord, schema_ord, _)| (*ord, *schema_ord));

    let grid = GridDescriptor {
        table: table.to_string(),
        title: catalog.title(table),
        policy_version: matrix.policy_version,
        can_delete: matrix.delete(table).is_grant(),
        page_size: catalog.page_size(table),
        columns: columns.into_iter().map(|(_, _, c)| c).collect(),
    };
    debug_assert!(grid
        .columns
        .iter()
        .all(|c| !c.editable || projection.columns.contains(&c.field)));
    Ok(grid)
}

/// Options for a foreign-key control, or `None` when the caller cannot see both the
/// referenced key and display fields.
fn lookup_for(
    matrix: &EffectiveMatrix,
    store: &Store,
    table: &TableDef,
    field: &str,
) -> Option<LookupSpec> {
    let r = store.catalog().lookup(&table.name, field)?;
    let visible = |f: &str| matrix.is_granted(Action::Select, &r.referenced_table, f);
    if !visible(&r.referenced_key_field) || !visible(&r.display_field) {
        return None;
    }
    let target = store.schema().table(&r.referenced_table)?;
    let key_pos = target
        .fields
        .iter()
        .position(|f| f.name == r.referenced_key_field)?;
    let display_pos = target
        .fields
        .iter()
        .position(|f| f.name == r.display_field)?;
    let options = store
        .all_rows(&r.referenced_table)
        .map(|row| LookupOption {
            key: row[key_pos].to_json(),
            display: row[display_pos].to_json(),
        })
        .collect();
    Some(LookupSpec {
        table: r.referenced_table.clone(),
        key_field: r.referenced_key_field.clone(),
        display_field: r.display_field.clone(),
        options,
    })
}

/// Form for inserting into `table`: one control per field the caller may both see
/// and insert.
pub fn build_form_descriptor(
    matrix: &EffectiveMatrix,
    store: &Store,
    table: &str,
) -> Result<FormDescriptor, GateError> {
    let def = store
        .schema()
        .table(table)
        .ok_or_else(|| GateError::UnknownObject(table.to_string()))?;
    let usable = |f: &str| {
        matrix.is_granted(Action::Insert, table, f) && matrix.is_granted(Action::Select, table, f)
    };
    if !def.field_names().any(usable) {
        return Err(GateError::NoAccessibleFields(table.to_string()));
    }
    if def
        .fields
        .iter()
        .any(|f| f.is_required() && !usable(&f.name))
    {
        return Err(GateError::PolicySchemaConflict(table.to_string()));
    }

    let catalog = store.catalog();
    let mut controls: Vec<(usize, ControlSpec)> = Vec::new();
    for field in def.fields.iter().filter(|f| usable(&f.name)) {
        let control = control_for_field(def, field, catalog);
        let required = field.is_required();
        if !control.visible && !required {
            continue;
        }
        let mut kind = control.kind;
        let lookup = if kind == ControlKind::Lookup {
            let l = lookup_for(matrix, store, def, &field.name);
            if l.is_none() {
                kind = ControlKind::default_for(field.data_type);
            }
            l
        } else {
            None
        };
        controls.push((
            field.ordinal,
            ControlSpec {
                field: field.name.clone(),
                label: control.label,
                control_kind: kind,
                row: control.row,
                col: control.col,
                tab_order: control.tab_order,
                required,
                lookup,
            },
        ));
    }
    controls.sort_by_key(|(ord, c)| (c.tab_order, c.row, c.col, *ord));

    Ok(FormDescriptor {
        table: table.to_string(),
        title: catalog.title(table),
        policy_version: matrix.policy_version,
        layout_columns: catalog.form_set(table).map_or(1, |f| f.layout_columns),
        controls: controls.into_iter().map(|(_, c)| c).collect(),
    })
}

pub fn build_descriptor(
    matrix: &EffectiveMatrix,
    store: &Store,
    table: &str,
    kind: DescriptorKind,
) -> Result<Descriptor, GateError> {
    Ok(match kind {
        DescriptorKind::Grid => Descriptor::Grid(build_grid_descriptor(matrix, store, table)?),
        DescriptorKind::Form => Descriptor::Form(build_form_descriptor(matrix, store, table)?),
    })
}

/// Compact JSON with a fixed key order; equal descriptors give identical bytes.
pub fn serialize_descriptor(descriptor: &Descriptor) -> String {
    serde_json::to_string(descriptor).expect("descriptor serialization is infallible")
}

pub fn parse_descriptor(text: &str) -> Result<Descriptor, serde_json::Error> {
    serde_json::from_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{Permission, Sign};
    use crate::store::PolicyMutation;

    const SEED: &str = "\
[users]
u pw
[roles]
R
[assignments]
u -> R
[permissions]
R, +, Select, Orders.*
R, +, Insert, Orders.*
R, +, Update, Orders.OrderDate
R, +, Select, Customers.CustomerID
R, +, Select, Customers.CompanyName
[schema]
table Customers (CustomerID:integer:pk, CompanyName:text:null, Secretive:text:null)
table Orders (OrderID:integer:pk, CID:integer:null, OrderDate:date:null, Paid:boolean:default=false)
[rows]
Customers: 1, \"Acme\", \"s\"
Customers: 2, \"Birch\", \"t\"
[catalog]
formset Orders title=\"Orders\" columns=2
ref Orders.CID -> Customers.CustomerID display=CompanyName
grid Orders.OrderDate header=\"Date\" width=90 ord=0
";

    fn setup() -> (Store, EffectiveMatrix) {
        let store = Store::from_seed(SEED).unwrap();
        let m = store.effective_matrix("u").unwrap();
        (store, m)
    }

    #[test]
    fn grid_uses_catalogue_then_defaults() {
        let (store, m) = setup();
        let g = build_grid_descriptor(&m, &store, "Orders").unwrap();
        let fields: Vec<_> = g.columns.iter().map(|c| c.field.as_str()).collect();
        // Stored ordinal 0 ties with OrderID's schema ordinal; schema order breaks the tie.
        assert_eq!(fields, ["OrderID", "OrderDate", "CID", "Paid"]);
        let date = &g.columns[1];
        assert_eq!(
            (date.header.as_str(), date.width, date.editable),
            ("Date", 90, true)
        );
        assert_eq!(date.control_kind, ControlKind::Datepicker);
        let cid = &g.columns[2];
        assert_eq!(
            (cid.header.as_str(), cid.width, cid.editable),
            ("CID", 120, false)
        );
        assert_eq!(cid.control_kind, ControlKind::Lookup);
        assert!(!g.can_delete);
        assert_eq!(g.policy_version, 1);
        assert_eq!(g.page_size, crate::catalog::DEFAULT_PAGE_SIZE);
    }

    #[test]
    fn grid_hides_update_only_fields() {
        let (mut store, _) = setup();
        store
            .upsert_policy(
                PolicyMutation::AddPermission(Permission::on_field(
                    "R",
                    Sign::Grant,
                    Action::Update,
                    "Customers",
                    "Secretive",
                )),
                None,
            )
            .unwrap();
        let m = store.effective_matrix("u").unwrap();
        let g = build_grid_descriptor(&m, &store, "Customers").unwrap();
        let text = serialize_descriptor(&Descriptor::Grid(g));
        assert!(!text.contains("Secretive"));
    }

    #[test]
    fn form_with_lookup_options() {
        let (store, m) = setup();
        let f = build_form_descriptor(&m, &store, "Orders").unwrap();
        assert_eq!(f.layout_columns, 2);
        let fields: Vec<_> = f.controls.iter().map(|c| c.field.as_str()).collect();
        assert_eq!(fields, ["OrderID", "CID", "OrderDate", "Paid"]);
        assert!(f.controls[0].required);
        assert!(!f.controls[3].required);
        let lookup = f.controls[1].lookup.as_ref().unwrap();
        assert_eq!(f.controls[1].control_kind, ControlKind::Lookup);
        assert_eq!(lookup.options.len(), 2);
        assert_eq!(lookup.options[0].display, serde_json::json!("Acme"));
        assert_eq!(lookup.options[1].key, serde_json::json!(2));
    }

    #[test]
    fn lookup_dropped_when_display_field_hidden() {
        let (mut store, _) = setup();
        store
            .upsert_policy(
                PolicyMutation::AddPermission(Permission::on_field(
                    "R",
                    Sign::Deny,
                    Action::Select,
                    "Customers",
                    "CompanyName",
                )),
                None,
            )
            .unwrap();
        let m = store.effective_matrix("u").unwrap();
        let f = build_form_descriptor(&m, &store, "Orders").unwrap();
        let cid = f.controls.iter().find(|c| c.field == "CID").unwrap();
        assert_eq!(cid.control_kind, ControlKind::Numberbox);
        assert!(cid.lookup.is_none());
        assert!(!serialize_descriptor(&Descriptor::Form(f)).contains("CompanyName"));
    }

    #[test]
    fn form_errors() {
        let (mut store, m) = setup();
        assert_eq!(
            build_form_descriptor(&m, &store, "Customers"),
            Err(GateError::NoAccessibleFields("Customers".into()))
        );
        assert_eq!(
            build_form_descriptor(&m, &store, "Nope"),
            Err(GateError::UnknownObject("Nope".into()))
        );
        store
            .upsert_policy(
                PolicyMutation::AddPermission(Permission::on_field(
                    "R",
                    Sign::Deny,
                    Action::Insert,
                    "Orders",
                    "OrderID",
                )),
                None,
            )
            .unwrap();
        let m = store.effective_matrix("u").unwrap();
        assert_eq!(
            build_form_descriptor(&m, &store, "Orders"),
            Err(GateError::PolicySchemaConflict("Orders".into()))
        );
    }

    #[test]
    fn canonical_text_round_trips() {
        let (store, m) = setup();
        for kind in [DescriptorKind::Grid, DescriptorKind::Form] {
            let d = build_descriptor(&m, &store, "Orders", kind).unwrap();
            let a = serialize_descriptor(&d);
            assert_eq!(
                a,
                serialize_descriptor(&build_descriptor(&m, &store, "Orders", kind).unwrap())
            );
            assert_eq!(parse_descriptor(&a).unwrap(), d);
        }
        let grid = serialize_descriptor(
            &build_descriptor(&m, &store, "Orders", DescriptorKind::Grid).unwrap(),
        );
        assert!(grid.starts_with(r#"{"kind":"grid","table":"Orders","title":"Orders","policyVersion":1,"canDelete":false"#));
    }
}
