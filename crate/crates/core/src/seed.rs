//! Line-oriented seed documents.
//!
//! ```text
//! # comment
//! [users]
//! alice s3cret                     # plaintext, digested on load
//! bob digest=<salt-hex>:<hex>      # already digested (what export writes)
//! [roles]
//! Staff
//! [assignments]
//! alice -> Staff
//! [permissions]
//! Staff, +, Select, Customers.City
//! Staff, -, Update, Customers.*
//! [schema]
//! table Customers (CustomerID:integer:pk, City:text:null:default="Kent")
//! [rows]
//! Customers: 1, "Kent"
//! [catalog]
//! formset Customers title="Customers" columns=2
//! form Customers.City type=textbox label="City" pos=1,0 tab=1 visible=true
//! ref Orders.CID -> Customers.CustomerID display=CompanyName
//! gridset Customers page_size=20
//! grid Customers.City header="City" width=120 ord=0
//! ```
//!
//! Text values are double-quoted with `\"`, `\\`, `\n`, `\t` escapes; `null` is the
//! null literal. Only `[schema]` is mandatory. Loading is all-or-nothing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::auth::{PasswordDigest, User};
use crate::catalog::{
    CatalogMutation, Control, ControlKind, FormSet, GridColumn, GridSet, RefLookup, UiCatalog,
};
use crate::policy::{Permission, UserAssignment};
use crate::schema::{is_identifier, DataType, FieldDef, TableDef, Value};
use crate::store::{check_row, row_key, Store, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Section {
    Users,
    Roles,
    Assignments,
    Permissions,
    Schema,
    Rows,
    Catalog,
}

impl Section {
    fn parse(name: &str) -> Option<Section> {
        Some(match name {
            "users" => Section::Users,
            "roles" => Section::Roles,
            "assignments" => Section::Assignments,
            "permissions" => Section::Permissions,
            "schema" => Section::Schema,
            "rows" => Section::Rows,
            "catalog" => Section::Catalog,
            _ => return None,
        })
    }
}

fn parse_err(line: usize, reason: impl Into<String>) -> StoreError {
    StoreError::Parse {
        line,
        reason: reason.into(),
    }
}

/// Removes a trailing `#` comment that is not inside a quoted string.
fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' if in_quotes => escaped = true,
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

/// Splits on `sep` outside double quotes.
fn split_top(s: &str, sep: impl Fn(char) -> bool) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut in_quotes = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' if in_quotes => escaped = true,
            '"' => in_quotes = !in_quotes,
            c if !in_quotes && sep(c) => {
                out.push(&s[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

fn unquote(tok: &str) -> Result<String, String> {
    let Some(inner) = tok.strip_prefix('"') else {
        return Ok(tok.to_string());
    };
    let inner = inner
        .strip_suffix('"')
        .ok_or_else(|| format!("unterminated string {tok}"))?;
    let mut out = String::with_capacity(inner.len());
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            if c == '"' {
                return Err(format!("unescaped quote in {tok}"));
            }
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('"') => out.push('"'),
            Some('\\') => out.push('\\'),
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('r') => out.push('\r'),
            other => return Err(format!("bad escape `\\{}` in {tok}", other.unwrap_or(' '))),
        }
    }
    Ok(out)
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn parse_value(tok: &str, ty: DataType) -> Result<Value, String> {
    let tok = tok.trim();
    if tok == "null" {
        return Ok(Value::Null);
    }
    if tok.starts_with('"') {
        let text = unquote(tok)?;
        return Value::parse_literal(&text, ty).map_err(|e| e.to_string());
    }
    if tok.is_empty() {
        return Err("empty value".into());
    }
    Value::parse_literal(tok, ty).map_err(|e| e.to_string())
}

fn value_token(v: &Value) -> String {
    match v {
        Value::Text(s) => quote(s),
        other => other.to_string(),
    }
}

fn parse_schema_line(line: usize, text: &str) -> Result<TableDef, StoreError> {
    let rest = text
        .strip_prefix("table")
        .filter(|r| r.starts_with(char::is_whitespace))
        .ok_or_else(|| parse_err(line, "expected `table <name> (<field>:<type>, ...)`"))?;
    let (name, fields) = rest
        .split_once('(')
        .ok_or_else(|| parse_err(line, "missing `(` after table name"))?;
    let fields = fields
        .trim_end()
        .strip_suffix(')')
        .ok_or_else(|| parse_err(line, "missing closing `)`"))?;
    let name = name.trim().to_string();

    let mut defs = Vec::new();
    let mut primary_key = Vec::new();
    if !fields.trim().is_empty() {
        for (ordinal, spec) in split_top(fields, |c| c == ',').into_iter().enumerate() {
            let parts: Vec<&str> = split_top(spec.trim(), |c| c == ':');
            let [fname, ty, flags @ ..] = &parts[..] else {
                return Err(parse_err(
                    line,
                    format!("field spec `{}` needs <name>:<type>", spec.trim()),
                ));
            };
            let data_type: DataType = ty.trim().parse().map_err(|e: String| parse_err(line, e))?;
            let mut def = FieldDef {
                name: fname.trim().to_string(),
                data_type,
                nullable: false,
                default: None,
                ordinal,
            };
            for flag in flags {
                let flag = flag.trim();
                match flag {
                    "null" => def.nullable = true,
                    "pk" => primary_key.push(def.name.clone()),
                    _ => {
                        let raw = flag.strip_prefix("default=").ok_or_else(|| {
                            parse_err(line, format!("unknown field flag `{flag}`"))
                        })?;
                        def.default =
                            Some(parse_value(raw, data_type).map_err(|e| parse_err(line, e))?);
                    }
                }
            }
            defs.push(def);
        }
    }
    Ok(TableDef {
        name,
        fields: defs,
        primary_key,
    })
}

fn schema_line(t: &TableDef) -> String {
    let fields: Vec<String> = t
        .fields
        .iter()
        .map(|f| {
            let mut s = format!("{}:{}", f.name, f.data_type);
            if f.nullable {
                s.push_str(":null");
            }
            if let Some(d) = &f.default {
                let _ = write!(s, ":default={}", value_token(d));
            }
            if t.primary_key.contains(&f.name) {
                s.push_str(":pk");
            }
            s
        })
        .collect();
    format!("table {} ({})", t.name, fields.join(", "))
}

/// `key=value` attributes following the record head.
struct Attrs<'a> {
    line: usize,
    map: BTreeMap<&'a str, &'a str>,
}

impl<'a> Attrs<'a> {
    fn parse(line: usize, tokens: &[&'a str]) -> Result<Self, StoreError> {
        let mut map = BTreeMap::new();
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| parse_err(line, format!("expected key=value, got `{tok}`")))?;
            if map.insert(k, v).is_some() {
                return Err(parse_err(line, format!("attribute `{k}` repeated")));
            }
        }
        Ok(Attrs { line, map })
    }

    fn opt(&mut self, key: &str) -> Option<&'a str> {
        self.map.remove(key)
    }

    fn req(&mut self, key: &str) -> Result<&'a str, StoreError> {
        self.opt(key)
            .ok_or_else(|| parse_err(self.line, format!("missing attribute `{key}`")))
    }

    fn text(&mut self, key: &str) -> Result<String, StoreError> {
        let raw = self.req(key)?;
        unquote(raw).map_err(|e| parse_err(self.line, e))
    }

    fn num(&mut self, key: &str) -> Result<u32, StoreError> {
        let raw = self.req(key)?;
        raw.parse().map_err(|_| {
            parse_err(
                self.line,
                format!("`{key}` must be a non-negative integer, got `{raw}`"),
            )
        })
    }

    fn finish(self) -> Result<(), StoreError> {
        match self.map.keys().next() {
            Some(k) => Err(parse_err(self.line, format!("unknown attribute `{k}`"))),
            None => Ok(()),
        }
    }
}

fn table_field(line: usize, s: &str) -> Result<(String, String), StoreError> {
    match s.split_once('.') {
        Some((t, f)) if !t.is_empty() && !f.is_empty() => Ok((t.to_string(), f.to_string())),
        _ => Err(parse_err(
            line,
            format!("expected <table>.<field>, got `{s}`"),
        )),
    }
}

fn parse_catalog_line(line: usize, text: &str) -> Result<CatalogMutation, StoreError> {
    let tokens: Vec<&str> = split_top(text, char::is_whitespace)
        .into_iter()
        .filter(|t| !t.is_empty())
        .collect();
    let (head, rest) = tokens
        .split_first()
        .ok_or_else(|| parse_err(line, "empty catalog record"))?;
    let target = rest
        .first()
        .copied()
        .ok_or_else(|| parse_err(line, format!("`{head}` needs a target")))?;
    let record = match *head {
        "form" => {
            let (table, field) = table_field(line, target)?;
            let mut a = Attrs::parse(line, &rest[1..])?;
            let kind: ControlKind = a
                .req("type")?
                .parse()
                .map_err(|e: String| parse_err(line, e))?;
            let label = a.text("label")?;
            let pos = a.req("pos")?;
            let (row, col) = pos
                .split_once(',')
                .and_then(|(r, c)| Some((r.parse().ok()?, c.parse().ok()?)))
                .ok_or_else(|| parse_err(line, format!("pos must be <row>,<col>, got `{pos}`")))?;
            let tab_order = match a.opt("tab") {
                Some(t) => t
                    .parse()
                    .map_err(|_| parse_err(line, format!("bad tab `{t}`")))?,
                None => row,
            };
            let visible = match a.opt("visible") {
                None | Some("true") => true,
                Some("false") => false,
                Some(v) => {
                    return Err(parse_err(
                        line,
                        format!("visible must be true|false, got `{v}`"),
                    ))
                }
            };
            a.finish()?;
            CatalogMutation::PutControl(Control {
                table,
                field,
                kind,
                label,
                row,
                col,
                tab_order,
                visible,
            })
        }
        "grid" => {
            let (table, field) = table_field(line, target)?;
            let mut a = Attrs::parse(line, &rest[1..])?;
            let header = a.text("header")?;
            let width = a.num("width")?;
            let ordinal = a.num("ord")?;
            a.finish()?;
            CatalogMutation::PutGridColumn(GridColumn {
                table,
                field,
                header,
                width,
                ordinal,
            })
        }
        "formset" => {
            let mut a = Attrs::parse(line, &rest[1..])?;
            let title = a.text("title")?;
            let layout_columns = a.num("columns")?;
            a.finish()?;
            CatalogMutation::PutFormSet(FormSet {
                table: target.to_string(),
                title,
                layout_columns,
            })
        }
        "gridset" => {
            let mut a = Attrs::parse(line, &rest[1..])?;
            let page_size = a.num("page_size")?;
            a.finish()?;
            CatalogMutation::PutGridSet(GridSet {
                table: target.to_string(),
                page_size,
            })
        }
        "ref" => {
            let (table, field) = table_field(line, target)?;
            let [arrow, referenced, attrs @ ..] = &rest[1..] else {
                return Err(parse_err(
                    line,
                    "expected `ref <t>.<f> -> <rt>.<key> display=<field>`",
                ));
            };
            if *arrow != "->" {
                return Err(parse_err(line, "expected `->` after lookup field"));
            }
            let (referenced_table, referenced_key_field) = table_field(line, referenced)?;
            let mut a = Attrs::parse(line, attrs)?;
            let display_field = a.req("display")?.to_string();
            a.finish()?;
            CatalogMutation::PutRef(RefLookup {
                table,
                field,
                referenced_table,
                referenced_key_field,
                display_field,
            })
        }
        other => return Err(parse_err(line, format!("unknown catalog record `{other}`"))),
    };
    Ok(record)
}

/// Identity of a catalogue record, for duplicate detection.
fn catalog_key(m: &CatalogMutation) -> (u8, String, String) {
    match m {
        CatalogMutation::PutFormSet(f) => (0, f.table.clone(), String::new()),
        CatalogMutation::PutControl(c) => (1, c.table.clone(), c.field.clone()),
        CatalogMutation::PutRef(r) => (2, r.table.clone(), r.field.clone()),
        CatalogMutation::PutGridSet(g) => (3, g.table.clone(), String::new()),
        CatalogMutation::PutGridColumn(c) => (4, c.table.clone(), c.field.clone()),
        _ => (5, String::new(), String::new()),
    }
}

impl Store {
    /// Parses and validates a seed document. The result is at policy version 1.
    pub fn from_seed(text: &str) -> Result<Store, StoreError> {
        let mut section = None;
        let mut seen_sections = BTreeSet::new();
        let mut store = Store::default();
        let mut tables = Vec::new();
        let mut raw_rows = Vec::new();
        let mut catalog = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let text = strip_comment(raw).trim();
            if text.is_empty() {
                continue;
            }
            if let Some(name) = text.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
                let s = Section::parse(name.trim())
                    .ok_or_else(|| parse_err(line, format!("unknown section `[{name}]`")))?;
                if !seen_sections.insert(s) {
                    return Err(parse_err(line, format!("section `[{name}]` repeated")));
                }
                section = Some(s);
                continue;
            }
            let Some(s) = section else {
                return Err(parse_err(line, "record outside of any section"));
            };
            match s {
                Section::Users => {
                    let (name, secret) = text
                        .split_once(char::is_whitespace)
                        .ok_or_else(|| parse_err(line, "expected `<username> <password>`"))?;
                    let secret = secret.trim();
                    let password = match secret.strip_prefix("digest=") {
                        Some(d) => d.parse().map_err(|e: String| parse_err(line, e))?,
                        None => {
                            let plain = unquote(secret).map_err(|e| parse_err(line, e))?;
                            PasswordDigest::new(&plain)
                        }
                    };
                    let user = User {
                        username: name.to_string(),
                        password,
                    };
                    if store.users.insert(name.to_string(), user).is_some() {
                        return Err(StoreError::validation(
                            format!("user `{name}`"),
                            "duplicate username",
                        ));
                    }
                }
                Section::Roles => {
                    if !is_identifier(text) {
                        return Err(parse_err(line, format!("bad role name `{text}`")));
                    }
                    store.roles.insert(text.to_string());
                }
                Section::Assignments => {
                    let (u, r) = text
                        .split_once("->")
                        .ok_or_else(|| parse_err(line, "expected `<username> -> <role>`"))?;
                    store
                        .assignments
                        .insert(UserAssignment::new(u.trim(), r.trim()));
                }
                Section::Permissions => {
                    let p: Permission =
                        text.parse().map_err(|e| parse_err(line, format!("{e}")))?;
                    store.permissions.insert(p);
                }
                Section::Schema => tables.push(parse_schema_line(line, text)?),
                Section::Rows => {
                    let (table, values) = text
                        .split_once(':')
                        .ok_or_else(|| parse_err(line, "expected `<table>: <v1>, <v2>, ...`"))?;
                    raw_rows.push((line, table.trim().to_string(), values.to_string()));
                }
                Section::Catalog => catalog.push((line, parse_catalog_line(line, text)?)),
            }
        }

        if !seen_sections.contains(&Section::Schema) {
            return Err(parse_err(0, "missing required [schema] section"));
        }

        for t in tables {
            let name = t.name.clone();
            store
                .schema
                .add_table(t)
                .map_err(|r| StoreError::validation(format!("table `{name}`"), r))?;
        }

        for (line, table, values) in raw_rows {
            let def = store
                .schema
                .table(&table)
                .ok_or_else(|| {
                    StoreError::validation(
                        format!("row at line {line}"),
                        format!("unknown table `{table}`"),
                    )
                })?
                .clone();
            let toks = split_top(&values, |c| c == ',');
            if toks.len() != def.fields.len() {
                return Err(parse_err(
                    line,
                    format!(
                        "`{table}` has {} fields, row has {} values",
                        def.fields.len(),
                        toks.len()
                    ),
                ));
            }
            let row = def
                .fields
                .iter()
                .zip(toks)
                .map(|(f, tok)| {
                    parse_value(tok, f.data_type)
                        .map_err(|e| parse_err(line, format!("{}: {e}", f.name)))
                })
                .collect::<Result<Vec<_>, _>>()?;
            check_row(&def, &row)
                .map_err(|r| StoreError::validation(format!("row at line {line}"), r))?;
            let key = row_key(&def, &row);
            if store.table_rows_mut(&table).insert(key, row).is_some() {
                return Err(StoreError::validation(
                    format!("row at line {line}"),
                    "duplicate primary key",
                ));
            }
        }

        let mut seen = BTreeSet::new();
        let mut ui = UiCatalog::default();
        for (line, record) in catalog {
            if !seen.insert(catalog_key(&record)) {
                return Err(StoreError::validation(
                    format!("catalog line {line}"),
                    "duplicate record",
                ));
            }
            ui.apply(record);
        }
        store.catalog = ui;

        store.validate()?;
        store.version = 1;
        Ok(store)
    }

    /// Canonical seed text: fixed section order, records sorted, users as digests.
    pub fn to_seed(&self) -> String {
        let mut out = String::new();
        out.push_str("[users]\n");
        for u in self.users.values() {
            let _ = writeln!(out, "{} digest={}", u.username, u.password);
        }
        out.push_str("[roles]\n");
        for r in &self.roles {
            let _ = writeln!(out, "{r}");
        }
        out.push_str("[assignments]\n");
        for a in &self.assignments {
            let _ = writeln!(out, "{} -> {}", a.username, a.role);
        }
        out.push_str("[permissions]\n");
        for p in &self.permissions {
            let _ = writeln!(out, "{p}");
        }
        out.push_str("[schema]\n");
        for t in self.schema.tables() {
            let _ = writeln!(out, "{}", schema_line(t));
        }
        out.push_str("[rows]\n");
        for (table, rows) in &self.rows {
            for row in rows.values() {
                let vals: Vec<String> = row.iter().map(value_token).collect();
                let _ = writeln!(out, "{table}: {}", vals.join(", "));
            }
        }
        out.push_str("[catalog]\n");
        let cat = &self.catalog;
        for f in cat.form_sets() {
            let _ = writeln!(
                out,
                "formset {} title={} columns={}",
                f.table,
                quote(&f.title),
                f.layout_columns
            );
        }
        for c in cat.controls() {
            let _ = writeln!(
                out,
                "form {}.{} type={} label={} pos={},{} tab={} visible={}",
                c.table,
                c.field,
                c.kind,
                quote(&c.label),
                c.row,
                c.col,
                c.tab_order,
                c.visible
            );
        }
        for r in cat.lookups() {
            let _ = writeln!(
                out,
                "ref {}.{} -> {}.{} display={}",
                r.table, r.field, r.referenced_table, r.referenced_key_field, r.display_field
            );
        }
        for g in cat.grid_sets() {
            let _ = writeln!(out, "gridset {} page_size={}", g.table, g.page_size);
        }
        for c in cat.grid_columns() {
            let _ = writeln!(
                out,
                "grid {}.{} header={} width={} ord={}",
                c.table,
                c.field,
                quote(&c.header),
                c.width,
                c.ordinal
            );
        }
        out
    }
}
