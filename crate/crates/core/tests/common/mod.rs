//! Random store generation shared by property and acceptance tests.
//!
//! Table and field names are seven upper-case letters and mutually non-substring, so
//! a name showing up anywhere in serialized output can only mean that object leaked.
//! Descriptor keys and generated cell values never contain two adjacent upper-case
//! letters, so they cannot produce false matches either.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::sync::OnceLock;

use formgate_core::auth::PasswordDigest;

use rand::seq::SliceRandom;
use rand::Rng;

pub const USER: &str = "u";
pub const ADMIN: &str = "root";
pub const PASSWORD: &str = "pw";

/// Digesting is deliberately slow, so every generated store shares one digest.
fn password_digest() -> &'static str {
    static DIGEST: OnceLock<String> = OnceLock::new();
    DIGEST.get_or_init(|| PasswordDigest::new(PASSWORD).to_string())
}

#[derive(Debug, Clone)]
pub struct GenField {
    pub name: String,
    pub ty: &'static str,
    pub nullable: bool,
    pub default: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GenTable {
    pub name: String,
    pub fields: Vec<GenField>,
}

#[derive(Debug, Clone)]
pub struct GenStore {
    pub tables: Vec<GenTable>,
    pub roles: Vec<String>,
    pub user_roles: Vec<String>,
    /// Tuple-syntax lines, possibly with duplicates.
    pub permissions: Vec<String>,
    pub rows: Vec<String>,
    pub catalog: Vec<String>,
}

fn fresh_name<R: Rng>(rng: &mut R, taken: &mut Vec<String>) -> String {
    const ALPHABET: &[u8] = b"BCDFGHJKLMNPQRSTVWXZ";
    loop {
        let name: String = (0..7)
            .map(|_| *ALPHABET.choose(rng).unwrap() as char)
            .collect();
        if taken
            .iter()
            .all(|t| !t.contains(&name) && !name.contains(t.as_str()))
        {
            taken.push(name.clone());
            return name;
        }
    }
}

/// A name guaranteed absent from `taken`, for probing.
pub fn unused_name<R: Rng>(rng: &mut R, taken: &[String]) -> String {
    let mut all = taken.to_vec();
    fresh_name(rng, &mut all)
}

fn literal<R: Rng>(rng: &mut R, ty: &str) -> String {
    match ty {
        "integer" => rng.gen_range(-50..500).to_string(),
        "decimal" => format!("{}.{:02}", rng.gen_range(0..1000), rng.gen_range(0..100)),
        "boolean" => rng.gen_bool(0.5).to_string(),
        "date" => format!(
            "20{:02}-{:02}-{:02}",
            rng.gen_range(0..30),
            rng.gen_range(1..13),
            rng.gen_range(1..29)
        ),
        _ => {
            let len = rng.gen_range(0..8);
            let s: String = (0..len)
                .map(|_| rng.gen_range(b'a'..=b'z') as char)
                .collect();
            format!("\"{s}\"")
        }
    }
}

impl GenStore {
    pub fn random<R: Rng>(rng: &mut R) -> GenStore {
        let mut names = Vec::new();
        let n_tables = rng.gen_range(1..=3);
        let types = ["text", "integer", "decimal", "boolean", "date"];
        let tables: Vec<GenTable> = (0..n_tables)
            .map(|_| {
                let name = fresh_name(rng, &mut names);
                let n_fields = rng.gen_range(1..=4);
                let fields = (0..n_fields)
                    .map(|i| {
                        let ty = if i == 0 {
                            "integer"
                        } else {
                            *types.choose(rng).unwrap()
                        };
                        let nullable = i != 0 && rng.gen_bool(0.7);
                        let default = (i != 0 && rng.gen_bool(0.2)).then(|| literal(rng, ty));
                        GenField {
                            name: fresh_name(rng, &mut names),
                            ty,
                            nullable,
                            default,
                        }
                    })
                    .collect();
                GenTable { name, fields }
            })
            .collect();

        let n_roles = rng.gen_range(1..=3);
        let roles: Vec<String> = (0..n_roles).map(|i| format!("r{i}")).collect();
        let mut user_roles: Vec<String> = roles
            .iter()
            .filter(|_| rng.gen_bool(0.6))
            .cloned()
            .collect();
        if user_roles.is_empty() {
            user_roles.push(roles[0].clone());
        }

        let mut permissions = Vec::new();
        for role in &roles {
            for t in &tables {
                for action in ["Select", "Insert", "Update", "Delete"] {
                    if rng.gen_bool(0.3) {
                        let sign = if rng.gen_bool(0.7) { "+" } else { "-" };
                        permissions.push(format!("{role}, {sign}, {action}, {}.*", t.name));
                    }
                    if action == "Delete" {
                        continue;
                    }
                    for f in &t.fields {
                        if rng.gen_bool(0.35) {
                            let sign = if rng.gen_bool(0.6) { "+" } else { "-" };
                            permissions
                                .push(format!("{role}, {sign}, {action}, {}.{}", t.name, f.name));
                        }
                    }
                }
            }
        }

        let mut rows = Vec::new();
        for t in &tables {
            let mut keys = std::collections::BTreeSet::new();
            for _ in 0..rng.gen_range(0..4) {
                let key: i64 = rng.gen_range(0..1000);
                if !keys.insert(key) {
                    continue;
                }
                let mut vals = vec![key.to_string()];
                for f in &t.fields[1..] {
                    if f.nullable && rng.gen_bool(0.25) {
                        vals.push("null".into());
                    } else {
                        vals.push(literal(rng, f.ty));
                    }
                }
                rows.push(format!("{}: {}", t.name, vals.join(", ")));
            }
        }

        let mut catalog = Vec::new();
        for t in &tables {
            if rng.gen_bool(0.5) {
                catalog.push(format!(
                    "gridset {} page_size={}",
                    t.name,
                    rng.gen_range(1..10)
                ));
            }
            for (i, f) in t.fields.iter().enumerate() {
                if rng.gen_bool(0.3) {
                    catalog.push(format!(
                        "grid {}.{} header=\"col{i}\" width={} ord={}",
                        t.name,
                        f.name,
                        rng.gen_range(40..300),
                        rng.gen_range(0..5)
                    ));
                }
                if rng.gen_bool(0.3) {
                    let kind = match f.ty {
                        "integer" | "decimal" => "numberbox",
                        "boolean" => "checkbox",
                        "date" => "datepicker",
                        _ => "textbox",
                    };
                    catalog.push(format!(
                        "form {}.{} type={kind} label=\"label{i}\" pos={},{} tab={} visible={}",
                        t.name,
                        f.name,
                        rng.gen_range(0..4),
                        rng.gen_range(0..2),
                        rng.gen_range(0..6),
                        rng.gen_bool(0.8)
                    ));
                }
            }
        }

        GenStore {
            tables,
            roles,
            user_roles,
            permissions,
            rows,
            catalog,
        }
    }

    pub fn table_names(&self) -> Vec<String> {
        self.tables.iter().map(|t| t.name.clone()).collect()
    }

    pub fn all_names(&self) -> Vec<String> {
        self.tables
            .iter()
            .flat_map(|t| {
                std::iter::once(t.name.clone()).chain(t.fields.iter().map(|f| f.name.clone()))
            })
            .collect()
    }

    pub fn seed_with_permissions(&self, permissions: &[String]) -> String {
        let mut s = String::new();
        let digest = password_digest();
        writeln!(
            s,
            "[users]\n{USER} digest={digest}\n{ADMIN} digest={digest}"
        )
        .unwrap();
        s.push_str("[roles]\n__admin__\n");
        for r in &self.roles {
            writeln!(s, "{r}").unwrap();
        }
        s.push_str("[assignments]\n");
        writeln!(s, "{ADMIN} -> __admin__").unwrap();
        for r in &self.user_roles {
            writeln!(s, "{USER} -> {r}").unwrap();
        }
        s.push_str("[permissions]\n");
        for p in permissions {
            writeln!(s, "{p}").unwrap();
        }
        s.push_str("[schema]\n");
        for t in &self.tables {
            let fields: Vec<String> = t
                .fields
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let mut spec = format!("{}:{}", f.name, f.ty);
                    if f.nullable {
                        spec.push_str(":null");
                    }
                    if let Some(d) = &f.default {
                        write!(spec, ":default={d}").unwrap();
                    }
                    if i == 0 {
                        spec.push_str(":pk");
                    }
                    spec
                })
                .collect();
            writeln!(s, "table {} ({})", t.name, fields.join(", ")).unwrap();
        }
        s.push_str("[rows]\n");
        for r in &self.rows {
            writeln!(s, "{r}").unwrap();
        }
        s.push_str("[catalog]\n");
        for c in &self.catalog {
            writeln!(s, "{c}").unwrap();
        }
        s
    }

    pub fn seed(&self) -> String {
        self.seed_with_permissions(&self.permissions)
    }
}
