use std::collections::BTreeSet;

use proptest::prelude::*;
use serde_json::json;
use text2nosql::transform::{
    detect_fk_cycles, group_tables, transform_database, Column, ForeignKey, RelationalDump, Table,
};
use text2nosql::DocValue;

/// Tables `t0..tn`; every key points at an earlier table, so the graph is acyclic.
fn acyclic_dump() -> impl Strategy<Value = RelationalDump> {
    (1usize..6)
        .prop_flat_map(|n| {
            let parents = (0..n).map(|i| {
                if i == 0 {
                    Just(None).boxed()
                } else {
                    proptest::option::of(0..i).boxed()
                }
            });
            let rows = proptest::collection::vec(proptest::collection::vec(0i64..4, 0..6), n);
            (parents.collect::<Vec<_>>(), rows)
        })
        .prop_map(|(parents, rows)| {
            let tables = parents
                .iter()
                .enumerate()
                .map(|(i, parent)| {
                    let mut columns = vec![Column {
                        name: "id".into(),
                        type_tag: "integer".into(),
                    }];
                    let mut foreign_keys = Vec::new();
                    if let Some(p) = parent {
                        columns.push(Column {
                            name: "ref".into(),
                            type_tag: "integer".into(),
                        });
                        foreign_keys.push(ForeignKey {
                            column: "ref".into(),
                            ref_table: format!("t{p}"),
                            ref_column: "id".into(),
                        });
                    }
                    let table_rows = rows[i]
                        .iter()
                        .enumerate()
                        .map(|(r, v)| {
                            if parent.is_some() {
                                vec![json!(r), json!(v)]
                            } else {
                                vec![json!(r)]
                            }
                        })
                        .collect();
                    Table {
                        name: format!("t{i}"),
                        columns,
                        primary_key: Some("id".into()),
                        rows: table_rows,
                        foreign_keys,
                    }
                })
                .collect();
            RelationalDump {
                name: "gen".into(),
                tables,
            }
        })
}

fn count_embedded(value: &DocValue, table: &str) -> usize {
    match value {
        DocValue::Obj(m) => m
            .iter()
            .map(|(k, v)| {
                let here = if k == table {
                    v.as_array().map_or(0, |a| a.len())
                } else {
                    0
                };
                here + count_embedded(v, table)
            })
            .sum(),
        DocValue::Array(items) => items.iter().map(|v| count_embedded(v, table)).sum(),
        _ => 0,
    }
}

fn brute_components(dump: &RelationalDump) -> BTreeSet<BTreeSet<String>> {
    let names: Vec<String> = dump.tables.iter().map(|t| t.name.clone()).collect();
    let linked = |a: &str, b: &str| {
        dump.tables.iter().any(|t| {
            t.foreign_keys
                .iter()
                .any(|fk| (t.name == a && fk.ref_table == b) || (t.name == b && fk.ref_table == a))
        })
    };
    let mut out = BTreeSet::new();
    for n in &names {
        let mut comp: BTreeSet<String> = [n.clone()].into();
        loop {
            let before = comp.len();
            for m in &names {
                if comp.iter().any(|c| linked(c, m)) {
                    comp.insert(m.clone());
                }
            }
            if comp.len() == before {
                break;
            }
        }
        out.insert(comp);
    }
    out
}

proptest! {
    #[test]
    fn nesting_preserves_rows(dump in acyclic_dump()) {
        prop_assert!(detect_fk_cycles(&dump).is_empty());
        let out = transform_database(&dump).unwrap();
        for cluster in group_tables(&dump) {
            for main in &cluster.main_tables {
                let table = dump.tables.iter().find(|t| &t.name == main).unwrap();
                let docs = &out.database.collections[main];
                prop_assert_eq!(docs.len(), table.rows.len());
                for d in docs {
                    for c in &table.columns {
                        prop_assert!(d.contains_key(&c.name));
                    }
                }
            }
        }
        let all = out.database.to_value();
        for t in dump.tables.iter().filter(|t| !t.foreign_keys.is_empty()) {
            let warned = out.warnings.iter().filter(|w| w.table == t.name).count();
            prop_assert_eq!(count_embedded(&all, &t.name), t.rows.len() - warned);
        }
        prop_assert_eq!(transform_database(&dump).unwrap(), out);
    }

    #[test]
    fn clusters_are_connected_components(dump in acyclic_dump()) {
        let got: BTreeSet<BTreeSet<String>> =
            group_tables(&dump).into_iter().map(|c| c.tables.into_iter().collect()).collect();
        prop_assert_eq!(got, brute_components(&dump));
    }

    #[test]
    fn any_back_reference_creates_a_cycle(dump in acyclic_dump(), back in 0usize..6) {
        let mut dump = dump;
        let n = dump.tables.len();
        let from = back % n;
        let to = n - 1;
        dump.tables[from].foreign_keys.push(ForeignKey { column: "id".into(), ref_table: format!("t{to}"), ref_column: "id".into() });
        // a path to[->...]->from exists iff following parent links from `to` reaches `from`
        let mut reach = vec![to];
        let mut cur = to;
        while let Some(fk) = dump.tables[cur].foreign_keys.iter().find(|fk| fk.column == "ref") {
            cur = fk.ref_table[1..].parse().unwrap();
            reach.push(cur);
        }
        prop_assert_eq!(!detect_fk_cycles(&dump).is_empty(), reach.contains(&from));
    }
}

#[test]
fn nested_rows_follow_foreign_keys() {
    // grade -> student -> tutor, checked against a direct nested-loop join
    let dump: RelationalDump = serde_json::from_value(json!({
        "name": "school",
        "tables": [
            {"name": "tutor", "columns": [{"name":"tutor_id","type":"int"},{"name":"gender","type":"text"}],
             "primary_key": "tutor_id", "rows": [[1,"F"],[2,"M"]], "foreign_keys": []},
            {"name": "student", "columns": [{"name":"student_id","type":"int"},{"name":"tutor_id","type":"int"}],
             "rows": [[10,1],[11,1],[12,2]], "foreign_keys": [{"column":"tutor_id","ref_table":"tutor","ref_column":"tutor_id"}]},
            {"name": "grade", "columns": [{"name":"student_id","type":"int"},{"name":"score","type":"real"}],
             "rows": [[10,3.5],[12,4.0],[12,2.0]], "foreign_keys": [{"column":"student_id","ref_table":"student","ref_column":"student_id"}]}
        ]
    }))
    .unwrap();
    let out = transform_database(&dump).unwrap();
    assert!(out.warnings.is_empty());
    let tutors = &out.database.collections["tutor"];
    for tutor in tutors {
        let tid = &tutor["tutor_id"];
        let students = tutor["student"].as_array().unwrap();
        let expected: Vec<&Vec<serde_json::Value>> = dump.tables[1]
            .rows
            .iter()
            .filter(|r| DocValue::from_json(&r[1]).semantic_eq(tid))
            .collect();
        assert_eq!(students.len(), expected.len());
        for (s, row) in students.iter().zip(expected) {
            let sid = DocValue::from_json(&row[0]);
            assert!(s.as_object().unwrap()["student_id"].semantic_eq(&sid));
            let grades = s.as_object().unwrap()["grade"].as_array().unwrap();
            let want = dump.tables[2]
                .rows
                .iter()
                .filter(|g| DocValue::from_json(&g[0]).semantic_eq(&sid))
                .count();
            assert_eq!(grades.len(), want);
        }
    }
    assert_eq!(out.database.collections.keys().collect::<Vec<_>>(), vec!["tutor"]);
}
