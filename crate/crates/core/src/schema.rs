//! Relational schema model and typed cell values.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Text,
    Integer,
    Decimal,
    Boolean,
    Date,
}

impl DataType {
    pub const ALL: [DataType; 5] = [
        DataType::Text,
        DataType::Integer,
        DataType::Decimal,
        DataType::Boolean,
        DataType::Date,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DataType::Text => "text",
            DataType::Integer => "integer",
            DataType::Decimal => "decimal",
            DataType::Boolean => "boolean",
            DataType::Date => "date",
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DataType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DataType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown data type `{s}`"))
    }
}

/// A single cell. `Null` sorts first, so nullable key columns order deterministically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Value {
    Null,
    Boolean(bool),
    Integer(i64),
    Decimal(Decimal),
    Date(NaiveDate),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("expected {expected} value, got `{got}`")]
pub struct ValueError {
    pub expected: DataType,
    pub got: String,
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn data_type(&self) -> Option<DataType> {
        match self {
            Value::Null => None,
            Value::Boolean(_) => Some(DataType::Boolean),
            Value::Integer(_) => Some(DataType::Integer),
            Value::Decimal(_) => Some(DataType::Decimal),
            Value::Date(_) => Some(DataType::Date),
            Value::Text(_) => Some(DataType::Text),
        }
    }

    /// Parses an unquoted literal as the given type. The literal `null` is never
    /// accepted here; callers decide what null means in their grammar.
    pub fn parse_literal(raw: &str, ty: DataType) -> Result<Value, ValueError> {
        let err = || ValueError {
            expected: ty,
            got: raw.to_string(),
        };
        Ok(match ty {
            DataType::Text => Value::Text(raw.to_string()),
            DataType::Integer => Value::Integer(raw.parse().map_err(|_| err())?),
            DataType::Decimal => Value::Decimal(Decimal::from_str(raw).map_err(|_| err())?),
            DataType::Boolean => match raw {
                "true" => Value::Boolean(true),
                "false" => Value::Boolean(false),
                _ => return Err(err()),
            },
            DataType::Date => {
                Value::Date(NaiveDate::parse_from_str(raw, "%Y-%m-%d").map_err(|_| err())?)
            }
        })
    }

    /// Converts a JSON request value into a cell of the given type.
    ///
    /// Decimals and dates travel as strings; decimals are also accepted as JSON numbers.
    pub fn from_json(json: &serde_json::Value, ty: DataType) -> Result<Value, ValueError> {
        use serde_json::Value as J;
        let err = || ValueError {
            expected: ty,
            got: json.to_string(),
        };
        match (json, ty) {
            (J::Null, _) => Ok(Value::Null),
            (J::String(s), DataType::Text) => Ok(Value::Text(s.clone())),
            (J::Number(n), DataType::Integer) => n.as_i64().map(Value::Integer).ok_or_else(err),
            (J::Number(n), DataType::Decimal) => Decimal::from_str(&n.to_string())
                .map(Value::Decimal)
                .map_err(|_| err()),
            (J::String(s), DataType::Decimal | DataType::Date) => {
                Value::parse_literal(s, ty).map_err(|_| err())
            }
            (J::Bool(b), DataType::Boolean) => Ok(Value::Boolean(*b)),
            _ => Err(err()),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::Value as J;
        match self {
            Value::Null => J::Null,
            Value::Boolean(b) => J::Bool(*b),
            Value::Integer(i) => J::from(*i),
            Value::Decimal(d) => J::String(d.to_string()),
            Value::Date(d) => J::String(d.format("%Y-%m-%d").to_string()),
            Value::Text(s) => J::String(s.clone()),
        }
    }
}

impl fmt::Display for Value {
    /// Plain rendering used in primary-key paths and error messages.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("null"),
            Value::Boolean(b) => write!(f, "{b}"),
            Value::Integer(i) => write!(f, "{i}"),
            Value::Decimal(d) => write!(f, "{d}"),
            Value::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            Value::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDef {
    pub name: String,
    pub data_type: DataType,
    pub nullable: bool,
    pub default: Option<Value>,
    pub ordinal: usize,
}

impl FieldDef {
    pub fn has_default(&self) -> bool {
        self.default.is_some()
    }

    /// Non-nullable with no default: an insert must name it explicitly.
    pub fn is_required(&self) -> bool {
        !self.nullable && self.default.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub fields: Vec<FieldDef>,
    pub primary_key: Vec<String>,
}

impl TableDef {
    pub fn field(&self, name: &str) -> Option<&FieldDef> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn field_names(&self) -> impl Iterator<Item = &str> {
        self.fields.iter().map(|f| f.name.as_str())
    }

    /// Positions of the primary-key fields, in key order.
    pub fn key_positions(&self) -> Vec<usize> {
        self.primary_key
            .iter()
            .filter_map(|k| self.fields.iter().position(|f| &f.name == k))
            .collect()
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        if !is_identifier(&self.name) {
            return Err(format!("invalid table name `{}`", self.name));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, f) in self.fields.iter().enumerate() {
            if !is_identifier(&f.name) {
                return Err(format!("invalid field name `{}`", f.name));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(format!("duplicate field `{}`", f.name));
            }
            if f.ordinal != i {
                return Err(format!(
                    "field `{}` has ordinal {} but position {i}",
                    f.name, f.ordinal
                ));
            }
            if let Some(d) = &f.default {
                match d.data_type() {
                    Some(t) if t == f.data_type => {}
                    None if f.nullable => {}
                    _ => return Err(format!("default for `{}` is not {}", f.name, f.data_type)),
                }
            }
        }
        if self.primary_key.is_empty() {
            return Err("primary key is empty".into());
        }
        let mut pk_seen = std::collections::BTreeSet::new();
        for k in &self.primary_key {
            if !pk_seen.insert(k.as_str()) {
                return Err(format!("primary key repeats `{k}`"));
            }
            match self.field(k) {
                None => return Err(format!("primary key field `{k}` does not exist")),
                Some(f) if f.nullable => {
                    return Err(format!("primary key field `{k}` is nullable"))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

/// The set of tables, kept sorted by name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaModel {
    tables: BTreeMap<String, TableDef>,
}

impl SchemaModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_tables(tables: impl IntoIterator<Item = TableDef>) -> Result<Self, String> {
        let mut schema = SchemaModel::new();
        for t in tables {
            schema.add_table(t)?;
        }
        Ok(schema)
    }

    pub fn add_table(&mut self, table: TableDef) -> Result<(), String> {
        table
            .validate()
            .map_err(|e| format!("table `{}`: {e}", table.name))?;
        if self.tables.contains_key(&table.name) {
            return Err(format!("duplicate table `{}`", table.name));
        }
        self.tables.insert(table.name.clone(), table);
        Ok(())
    }

    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.get(name)
    }

    pub fn field(&self, table: &str, field: &str) -> Option<&FieldDef> {
        self.table(table)?.field(field)
    }

    /// Tables in lexicographic order.
    pub fn tables(&self) -> impl Iterator<Item = &TableDef> {
        self.tables.values()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    #[cfg(test)]
    pub(crate) fn insert_unchecked(&mut self, table: TableDef) {
        self.tables.insert(table.name.clone(), table);
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
