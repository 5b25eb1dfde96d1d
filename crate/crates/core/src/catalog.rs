//! Interface catalogues: per-table form and grid metadata.
//!
//! The form side holds a [`FormSet`] per table, a [`Control`] per field, the fixed
//! set of [`ControlType`]s and [`RefLookup`]s for foreign keys. The grid side holds a
//! [`GridSet`] per table and a [`GridColumn`] per field, and shares the lookups.
//! Every record is optional: [`control_for_field`] and the descriptor builder fall
//! back to defaults derived from the schema.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::schema::{DataType, FieldDef, SchemaModel, TableDef};

pub const DEFAULT_COLUMN_WIDTH: u32 = 120;
pub const DEFAULT_PAGE_SIZE: u32 = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlKind {
    Textbox,
    Numberbox,
    Checkbox,
    Datepicker,
    Lookup,
}

impl ControlKind {
    pub const ALL: [ControlKind; 5] = [
        ControlKind::Textbox,
        ControlKind::Numberbox,
        ControlKind::Checkbox,
        ControlKind::Datepicker,
        ControlKind::Lookup,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ControlKind::Textbox => "textbox",
            ControlKind::Numberbox => "numberbox",
            ControlKind::Checkbox => "checkbox",
            ControlKind::Datepicker => "datepicker",
            ControlKind::Lookup => "lookup",
        }
    }

    /// Kind used when no control is stored and the field is not a foreign key.
    pub fn default_for(ty: DataType) -> ControlKind {
        match ty {
            DataType::Text => ControlKind::Textbox,
            DataType::Integer | DataType::Decimal => ControlKind::Numberbox,
            DataType::Boolean => ControlKind::Checkbox,
            DataType::Date => ControlKind::Datepicker,
        }
    }

    pub fn accepts(self, ty: DataType) -> bool {
        ControlType::of(self).compatible_types.contains(&ty)
    }
}

impl fmt::Display for ControlKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControlKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ControlKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown control kind `{s}`"))
    }
}

/// Which data types a control kind can edit. The set is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlType {
    pub kind: ControlKind,
    pub compatible_types: &'static [DataType],
}

impl ControlType {
    pub fn of(kind: ControlKind) -> ControlType {
        use DataType::*;
        let compatible_types: &'static [DataType] = match kind {
            ControlKind::Textbox => &[Text, Integer, Decimal, Date],
            ControlKind::Numberbox => &[Integer, Decimal],
            ControlKind::Checkbox => &[Boolean],
            ControlKind::Datepicker => &[Date],
            ControlKind::Lookup => &[Text, Integer, Decimal, Boolean, Date],
        };
        ControlType {
            kind,
            compatible_types,
        }
    }

    pub fn all() -> impl Iterator<Item = ControlType> {
        ControlKind::ALL.into_iter().map(ControlType::of)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FormSet {
    pub table: String,
    pub title: String,
    pub layout_columns: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Control {
    pub table: String,
    pub field: String,
    pub kind: ControlKind,
    pub label: String,
    pub row: u32,
    pub col: u32,
    pub tab_order: u32,
    pub visible: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RefLookup {
    pub table: String,
    pub field: String,
    pub referenced_table: String,
    pub referenced_key_field: String,
    pub display_field: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GridSet {
    pub table: String,
    pub page_size: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GridColumn {
    pub table: String,
    pub field: String,
    pub header: String,
    pub width: u32,
    pub ordinal: u32,
}

type PerField<T> = BTreeMap<String, BTreeMap<String, T>>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UiCatalog {
    form_sets: BTreeMap<String, FormSet>,
    controls: PerField<Control>,
    refs: PerField<RefLookup>,
    grid_sets: BTreeMap<String, GridSet>,
    grid_columns: PerField<GridColumn>,
}

fn get<'a, T>(map: &'a PerField<T>, table: &str, field: &str) -> Option<&'a T> {
    map.get(table)?.get(field)
}

fn put<T: PartialEq>(map: &mut PerField<T>, table: &str, field: &str, value: T) -> bool {
    let slot = map.entry(table.to_string()).or_default();
    if slot.get(field) == Some(&value) {
        return false;
    }
    slot.insert(field.to_string(), value);
    true
}

fn remove<T>(map: &mut PerField<T>, table: &str, field: &str) -> bool {
    let Some(slot) = map.get_mut(table) else {
        return false;
    };
    let removed = slot.remove(field).is_some();
    if slot.is_empty() {
        map.remove(table);
    }
    removed
}

fn put_keyed<T: PartialEq>(map: &mut BTreeMap<String, T>, key: &str, value: T) -> bool {
    if map.get(key) == Some(&value) {
        return false;
    }
    map.insert(key.to_string(), value);
    true
}

/// One catalogue edit, as issued by the admin editor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "camelCase")]
pub enum CatalogMutation {
    PutFormSet(FormSet),
    RemoveFormSet { table: String },
    PutControl(Control),
    RemoveControl { table: String, field: String },
    PutRef(RefLookup),
    RemoveRef { table: String, field: String },
    PutGridSet(GridSet),
    RemoveGridSet { table: String },
    PutGridColumn(GridColumn),
    RemoveGridColumn { table: String, field: String },
}

impl UiCatalog {
    pub fn form_set(&self, table: &str) -> Option<&FormSet> {
        self.form_sets.get(table)
    }

    pub fn control(&self, table: &str, field: &str) -> Option<&Control> {
        get(&self.controls, table, field)
    }

    pub fn lookup(&self, table: &str, field: &str) -> Option<&RefLookup> {
        get(&self.refs, table, field)
    }

    pub fn grid_set(&self, table: &str) -> Option<&GridSet> {
        self.grid_sets.get(table)
    }

    pub fn grid_column(&self, table: &str, field: &str) -> Option<&GridColumn> {
        get(&self.grid_columns, table, field)
    }

    pub fn form_sets(&self) -> impl Iterator<Item = &FormSet> {
        self.form_sets.values()
    }

    pub fn controls(&self) -> impl Iterator<Item = &Control> {
        self.controls.values().flat_map(|m| m.values())
    }

    pub fn lookups(&self) -> impl Iterator<Item = &RefLookup> {
        self.refs.values().flat_map(|m| m.values())
    }

    pub fn grid_sets(&self) -> impl Iterator<Item = &GridSet> {
        self.grid_sets.values()
    }

    pub fn grid_columns(&self) -> impl Iterator<Item = &GridColumn> {
        self.grid_columns.values().flat_map(|m| m.values())
    }

    /// Title shown on both grid and form for `table`.
    pub fn title(&self, table: &str) -> String {
        self.form_set(table)
            .map(|f| f.title.clone())
            .unwrap_or_else(|| table.to_string())
    }

    pub fn page_size(&self, table: &str) -> u32 {
        self.grid_set(table)
            .map(|g| g.page_size)
            .unwrap_or(DEFAULT_PAGE_SIZE)
    }

    /// Applies one edit. Returns whether anything changed. Does not validate.
    pub fn apply(&mut self, mutation: CatalogMutation) -> bool {
        match mutation {
            CatalogMutation::PutFormSet(f) => {
                let key = f.table.clone();
                put_keyed(&mut self.form_sets, &key, f)
            }
            CatalogMutation::RemoveFormSet { table } => self.form_sets.remove(&table).is_some(),
            CatalogMutation::PutControl(c) => {
                let (t, f) = (c.table.clone(), c.field.clone());
                put(&mut self.controls, &t, &f, c)
            }
            CatalogMutation::RemoveControl { table, field } => {
                remove(&mut self.controls, &table, &field)
            }
            CatalogMutation::PutRef(r) => {
                let (t, f) = (r.table.clone(), r.field.clone());
                put(&mut self.refs, &t, &f, r)
            }
            CatalogMutation::RemoveRef { table, field } => remove(&mut self.refs, &table, &field),
            CatalogMutation::PutGridSet(g) => {
                let key = g.table.clone();
                put_keyed(&mut self.grid_sets, &key, g)
            }
            CatalogMutation::RemoveGridSet { table } => self.grid_sets.remove(&table).is_some(),
            CatalogMutation::PutGridColumn(c) => {
                let (t, f) = (c.table.clone(), c.field.clone());
                put(&mut self.grid_columns, &t, &f, c)
            }
            CatalogMutation::RemoveGridColumn { table, field } => {
                remove(&mut self.grid_columns, &table, &field)
            }
        }
    }

    /// Checks referential integrity and type compatibility against `schema`.
    pub fn validate(&self, schema: &SchemaModel) -> Result<(), String> {
        let field_of = |table: &str, field: &str| {
            schema
                .field(table, field)
                .ok_or_else(|| format!("unknown field `{table}.{field}`"))
        };
        for f in self.form_sets() {
            if schema.table(&f.table).is_none() {
                return Err(format!("form set for unknown table `{}`", f.table));
            }
            if f.layout_columns == 0 {
                return Err(format!("form set `{}` has zero layout columns", f.table));
            }
        }
        for r in self.lookups() {
            let fk = field_of(&r.table, &r.field)?;
            let target = schema.table(&r.referenced_table).ok_or_else(|| {
                format!(
                    "lookup on `{}.{}` references unknown table `{}`",
                    r.table, r.field, r.referenced_table
                )
            })?;
            if target.primary_key != [r.referenced_key_field.clone()] {
                return Err(format!(
                    "lookup on `{}.{}`: `{}` is not the primary key of `{}`",
                    r.table, r.field, r.referenced_key_field, r.referenced_table
                ));
            }
            let key = field_of(&r.referenced_table, &r.referenced_key_field)?;
            if key.data_type != fk.data_type {
                return Err(format!(
                    "lookup on `{}.{}`: {} field cannot reference {} key",
                    r.table, r.field, fk.data_type, key.data_type
                ));
            }
            field_of(&r.referenced_table, &r.display_field)?;
        }
        for c in self.controls() {
            let fd = field_of(&c.table, &c.field)?;
            if !c.kind.accepts(fd.data_type) {
                return Err(format!(
                    "control `{}` cannot edit {} field `{}.{}`",
                    c.kind, fd.data_type, c.table, c.field
                ));
            }
            if c.kind == ControlKind::Lookup && self.lookup(&c.table, &c.field).is_none() {
                return Err(format!(
                    "lookup control on `{}.{}` has no reference",
                    c.table, c.field
                ));
            }
        }
        for g in self.grid_sets() {
            if schema.table(&g.table).is_none() {
                return Err(format!("grid set for unknown table `{}`", g.table));
            }
            if g.page_size == 0 {
                return Err(format!("grid set `{}` has zero page size", g.table));
            }
        }
        for c in self.grid_columns() {
            field_of(&c.table, &c.field)?;
            if c.width == 0 {
                return Err(format!(
                    "grid column `{}.{}` has zero width",
                    c.table, c.field
                ));
            }
        }
        Ok(())
    }
}

/// The stored control for `field`, or a default: kind from the data type (lookup for
/// foreign keys), label = field name, stacked vertically by ordinal, visible.
pub fn control_for_field(table: &TableDef, field: &FieldDef, catalog: &UiCatalog) -> Control {
    if let Some(c) = catalog.control(&table.name, &field.name) {
        return c.clone();
    }
    let kind = if catalog.lookup(&table.name, &field.name).is_some() {
        ControlKind::Lookup
    } else {
        ControlKind::default_for(field.data_type)
    };
    let ordinal = field.ordinal as u32;
    Control {
        table: table.name.clone(),
        field: field.name.clone(),
        kind,
        label: field.name.clone(),
        row: ordinal,
        col: 0,
        tab_order: ordinal,
        visible: true,
    }
}
