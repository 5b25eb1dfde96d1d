mod common;

use std::collections::{BTreeMap, BTreeSet};

use formgate_core::policy::resolve_matrix;
use formgate_core::{
    Action, DescriptorKind, EffectiveMatrix, Permission, PolicyMutation, SchemaModel, Sign, Store,
    UserView,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::GenStore;

/// What one role says about one field: nothing, grant, or deny.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Silent,
    Plus,
    Minus,
}

const CELLS: [Cell; 3] = [Cell::Silent, Cell::Plus, Cell::Minus];

/// Reference decision written directly from the rule table, without the library:
/// a single deny anywhere wins, otherwise a single grant wins, otherwise deny.
fn oracle(cells: &[Cell]) -> bool {
    if cells.contains(&Cell::Minus) {
        return false;
    }
    cells.contains(&Cell::Plus)
}

fn schema_with(fields: &[&str]) -> SchemaModel {
    let cols: Vec<String> = fields
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if i == 0 {
                format!("{f}:integer:pk")
            } else {
                format!("{f}:text:null")
            }
        })
        .collect();
    let seed = format!("[schema]\ntable T ({})\n", cols.join(", "));
    Store::from_seed(&seed).unwrap().schema().clone()
}

fn permissions_for(
    action: Action,
    roles: &[String],
    fields: &[&str],
    grid: &[Cell],
) -> Vec<Permission> {
    let mut out = Vec::new();
    for (r, role) in roles.iter().enumerate() {
        for (f, field) in fields.iter().enumerate() {
            let sign = match grid[r * fields.len() + f] {
                Cell::Silent => continue,
                Cell::Plus => Sign::Grant,
                Cell::Minus => Sign::Deny,
            };
            out.push(Permission::on_field(role, sign, action, "T", field));
        }
    }
    out
}

fn check_grid(
    action: Action,
    roles: &[String],
    fields: &[&str],
    schema: &SchemaModel,
    grid: &[Cell],
) {
    let perms = permissions_for(action, roles, fields, grid);
    let held: BTreeSet<String> = roles.iter().cloned().collect();
    let matrix = resolve_matrix("u", &held, &perms, schema, 1);
    for (f, field) in fields.iter().enumerate() {
        let column: Vec<Cell> = (0..roles.len())
            .map(|r| grid[r * fields.len() + f])
            .collect();
        assert_eq!(
            matrix.is_granted(action, "T", field),
            oracle(&column),
            "{action} {field} {column:?}"
        );
        for other in Action::FIELD_ACTIONS.into_iter().filter(|a| *a != action) {
            assert!(!matrix.is_granted(other, "T", field));
        }
    }
}

#[test]
fn exhaustive_two_roles_three_fields() {
    let roles = vec!["A".to_string(), "B".to_string()];
    let fields = ["F0", "F1", "F2"];
    let schema = schema_with(&fields);
    for action in Action::FIELD_ACTIONS {
        let mut cases = 0;
        for code in 0..3usize.pow(6) {
            let grid: Vec<Cell> = (0..6).map(|i| CELLS[(code / 3usize.pow(i)) % 3]).collect();
            check_grid(action, &roles, &fields, &schema, &grid);
            cases += 1;
        }
        assert_eq!(cases, 729);
    }
}

#[test]
fn sampled_three_roles_four_fields() {
    let roles: Vec<String> = (0..3).map(|i| format!("R{i}")).collect();
    let fields = ["F0", "F1", "F2", "F3"];
    let schema = schema_with(&fields);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..2000 {
        let grid: Vec<Cell> = (0..12).map(|_| *CELLS.choose(&mut rng).unwrap()).collect();
        let action = *Action::FIELD_ACTIONS.choose(&mut rng).unwrap();
        check_grid(action, &roles, &fields, &schema, &grid);
    }
}

/// Table-scoped records behave exactly like one field record per current field.
#[test]
fn table_scope_is_sugar_for_every_field() {
    let fields = ["F0", "F1", "F2"];
    let schema = schema_with(&fields);
    let roles = BTreeSet::from(["A".to_string(), "B".to_string()]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let mut scoped = Vec::new();
        let mut expanded = Vec::new();
        for role in &roles {
            for action in Action::FIELD_ACTIONS {
                if rng.gen_bool(0.4) {
                    let sign = if rng.gen_bool(0.5) {
                        Sign::Grant
                    } else {
                        Sign::Deny
                    };
                    scoped.push(Permission::on_table(role, sign, action, "T"));
                    expanded.extend(
                        fields
                            .iter()
                            .map(|f| Permission::on_field(role, sign, action, "T", f)),
                    );
                }
                for f in fields {
                    if rng.gen_bool(0.3) {
                        let sign = if rng.gen_bool(0.5) {
                            Sign::Grant
                        } else {
                            Sign::Deny
                        };
                        let p = Permission::on_field(role, sign, action, "T", f);
                        scoped.push(p.clone());
                        expanded.push(p);
                    }
                }
            }
        }
        assert_eq!(
            resolve_matrix("u", &roles, &scoped, &schema, 1),
            resolve_matrix("u", &roles, &expanded, &schema, 1)
        );
    }
}

fn store_of(gen: &GenStore) -> Store {
    Store::from_seed(&gen.seed()).unwrap()
}

fn matrix_of(store: &Store) -> EffectiveMatrix {
    store.effective_matrix(common::USER).unwrap()
}

fn descriptor_bytes(store: &Store) -> Vec<String> {
    let view = UserView::new(store, common::USER).unwrap();
    let mut out = Vec::new();
    for t in store.schema().tables() {
        for kind in [DescriptorKind::Grid, DescriptorKind::Form] {
            out.push(match view.descriptor_text(&t.name, kind) {
                Ok(text) => text,
                Err(e) => format!("{}: {e}", e.code()),
            });
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn deny_on_a_held_role_always_wins(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gen = GenStore::random(&mut rng);
        let mut store = store_of(&gen);
        let t = gen.tables.choose(&mut rng).unwrap();
        let f = &t.fields.choose(&mut rng).unwrap().name;
        let role = gen.user_roles.choose(&mut rng).unwrap();
        let action = *Action::FIELD_ACTIONS.choose(&mut rng).unwrap();
        let deny = if rng.gen_bool(0.5) {
            Permission::on_field(role, Sign::Deny, action, &t.name, f)
        } else {
            Permission::on_table(role, Sign::Deny, action, &t.name)
        };
        store.upsert_policy(PolicyMutation::AddPermission(deny), None).unwrap();
        prop_assert_eq!(matrix_of(&store).field(action, &t.name, f), Sign::Deny);
    }

    #[test]
    fn record_order_does_not_matter(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gen = GenStore::random(&mut rng);
        let base = store_of(&gen);
        let mut shuffled = gen.permissions.clone();
        shuffled.shuffle(&mut rng);
        let other = Store::from_seed(&gen.seed_with_permissions(&shuffled)).unwrap();
        prop_assert_eq!(matrix_of(&base), matrix_of(&other));
        prop_assert_eq!(descriptor_bytes(&base), descriptor_bytes(&other));

        // The resolver itself, fed the records in arbitrary order.
        let roles = base.roles_of_user(common::USER).unwrap();
        let mut perms: Vec<Permission> = base.permissions().cloned().collect();
        perms.shuffle(&mut rng);
        prop_assert_eq!(resolve_matrix(common::USER, &roles, &perms, base.schema(), 1), matrix_of(&base));
    }

    #[test]
    fn duplicate_records_change_nothing(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gen = GenStore::random(&mut rng);
        let base = store_of(&gen);
        let mut doubled = gen.permissions.clone();
        doubled.extend(gen.permissions.iter().filter(|_| rng.gen_bool(0.5)).cloned());
        let other = Store::from_seed(&gen.seed_with_permissions(&doubled)).unwrap();
        prop_assert_eq!(matrix_of(&base), matrix_of(&other));

        let roles = base.roles_of_user(common::USER).unwrap();
        let perms: Vec<Permission> = base.permissions().chain(base.permissions()).cloned().collect();
        prop_assert_eq!(resolve_matrix(common::USER, &roles, &perms, base.schema(), 1), matrix_of(&base));
    }

    #[test]
    fn adding_a_record_moves_decisions_one_way(seed in any::<u64>(), grant in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gen = GenStore::random(&mut rng);
        let mut store = store_of(&gen);
        let before = matrix_of(&store);
        let t = gen.tables.choose(&mut rng).unwrap();
        let role = gen.roles.choose(&mut rng).unwrap();
        let sign = if grant { Sign::Grant } else { Sign::Deny };
        let action = *Action::ALL.choose(&mut rng).unwrap();
        let perm = if action == Action::Delete || rng.gen_bool(0.4) {
            Permission::on_table(role, sign, action, &t.name)
        } else {
            Permission::on_field(role, sign, action, &t.name, &t.fields.choose(&mut rng).unwrap().name)
        };
        store.upsert_policy(PolicyMutation::AddPermission(perm), None).unwrap();
        let after = matrix_of(&store);
        for (key, old) in before.field_decisions() {
            let new = after.field(key.0, &key.1, &key.2);
            if grant {
                prop_assert!(!(old.is_grant() && !new.is_grant()), "grant revoked access at {:?}", key);
            } else {
                prop_assert!(!(!old.is_grant() && new.is_grant()), "deny granted access at {:?}", key);
            }
        }
        for (table, old) in before.delete_decisions() {
            let new = after.delete(table);
            let held = if grant { !old.is_grant() || new.is_grant() } else { old.is_grant() || !new.is_grant() };
            prop_assert!(held, "delete on {} moved the wrong way", table);
        }
    }

    #[test]
    fn reads_expose_exactly_the_select_grants(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gen = GenStore::random(&mut rng);
        let store = store_of(&gen);
        let matrix = matrix_of(&store);
        let view = UserView::new(&store, common::USER).unwrap();
        for t in store.schema().tables() {
            let visible: Vec<&str> = t
                .field_names()
                .filter(|f| matrix.is_granted(Action::Select, &t.name, f))
                .collect();
            match view.rows(&t.name, 0) {
                Ok(rows) => {
                    for row in rows {
                        let cols: Vec<&str> = row.iter().map(|(c, _)| c.as_str()).collect();
                        prop_assert_eq!(&cols, &visible);
                    }
                }
                Err(e) => {
                    prop_assert!(visible.is_empty());
                    prop_assert_eq!(e.code(), "unknown_object");
                }
            }
            match view.descriptor(&t.name, DescriptorKind::Grid) {
                Ok(grid) => {
                    let got: BTreeSet<&str> = grid.fields().into_iter().collect();
                    prop_assert_eq!(got, visible.iter().copied().collect::<BTreeSet<_>>());
                }
                Err(_) => prop_assert!(visible.is_empty()),
            }
            if let Ok(form) = view.descriptor(&t.name, DescriptorKind::Form) {
                for f in form.fields() {
                    prop_assert!(matrix.is_granted(Action::Select, &t.name, f));
                    prop_assert!(matrix.is_granted(Action::Insert, &t.name, f));
                }
            }
        }
        let tables: Vec<String> = store
            .schema()
            .tables()
            .filter(|t| t.field_names().any(|f| matrix.is_granted(Action::Select, &t.name, f)))
            .map(|t| t.name.clone())
            .collect();
        prop_assert_eq!(view.tables(), tables);
    }

    #[test]
    fn seed_export_round_trips(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gen = GenStore::random(&mut rng);
        let store = store_of(&gen);
        let exported = store.to_seed();
        let reloaded = Store::from_seed(&exported).unwrap();
        prop_assert_eq!(&reloaded, &store);
        prop_assert_eq!(reloaded.to_seed(), exported);
    }

    #[test]
    fn version_counts_effective_changes(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gen = GenStore::random(&mut rng);
        let mut store = store_of(&gen);
        let mut expected = store.policy_version();
        for _ in 0..20 {
            let t = gen.tables.choose(&mut rng).unwrap();
            let role = gen.roles.choose(&mut rng).unwrap();
            let sign = if rng.gen_bool(0.5) { Sign::Grant } else { Sign::Deny };
            let perm = Permission::on_table(role, sign, Action::Select, &t.name);
            let present = store.permissions().any(|p| p == &perm);
            let adding = rng.gen_bool(0.5);
            let m = if adding { PolicyMutation::AddPermission(perm) } else { PolicyMutation::RemovePermission(perm) };
            if adding != present {
                expected += 1;
            }
            prop_assert_eq!(store.upsert_policy(m, None).unwrap(), expected);
            prop_assert_eq!(store.policy_version(), expected);
        }
    }
}

#[test]
fn oracle_agrees_on_random_stores() {
    // Per-user decisions recomputed from raw records, field by field.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let gen = GenStore::random(&mut rng);
        let store = store_of(&gen);
        let matrix = matrix_of(&store);
        let held: BTreeSet<&str> = gen.user_roles.iter().map(String::as_str).collect();
        let mut cells: BTreeMap<(Action, String, String), Vec<Cell>> = BTreeMap::new();
        for p in store
            .permissions()
            .filter(|p| held.contains(p.role.as_str()))
        {
            let t = store.schema().table(p.scope.table()).unwrap();
            let cell = if p.sign == Sign::Grant {
                Cell::Plus
            } else {
                Cell::Minus
            };
            let targets: Vec<String> = match p.scope.field() {
                Some(f) => vec![f.to_string()],
                None if p.action == Action::Delete => vec!["*".to_string()],
                None => t.fields.iter().map(|f| f.name.clone()).collect(),
            };
            for f in targets {
                cells
                    .entry((p.action, t.name.clone(), f))
                    .or_default()
                    .push(cell);
            }
        }
        for t in store.schema().tables() {
            for f in &t.fields {
                for action in Action::FIELD_ACTIONS {
                    let c = cells
                        .get(&(action, t.name.clone(), f.name.clone()))
                        .cloned()
                        .unwrap_or_default();
                    assert_eq!(matrix.is_granted(action, &t.name, &f.name), oracle(&c));
                }
            }
            let c = cells
                .get(&(Action::Delete, t.name.clone(), "*".into()))
                .cloned()
                .unwrap_or_default();
            assert_eq!(matrix.delete(&t.name).is_grant(), oracle(&c));
        }
    }
}
