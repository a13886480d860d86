//! Relational-to-document transformation: foreign-key clustering, main-table
//! selection and recursive nesting of referencing rows.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::DocumentDatabase;
use crate::value::{DocValue, Document, MAX_SAFE_INT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationalDump {
    pub name: String,
    pub tables: Vec<Table>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary_key: Option<String>,
    #[serde(default)]
    pub rows: Vec<Vec<serde_json::Value>>,
    #[serde(default)]
    pub foreign_keys: Vec<ForeignKey>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(rename = "type", default)]
    pub type_tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForeignKey {
    pub column: String,
    pub ref_table: String,
    pub ref_column: String,
}

/// Tables connected through foreign keys, plus the sinks chosen as collections.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TableCluster {
    pub tables: Vec<String>,
    pub main_tables: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("invalid dump: {0}")]
    Invalid(String),
    #[error("foreign-key cycles: {}", format_cycles(.0))]
    Cycle(Vec<Vec<String>>),
    #[error("cluster {0:?} has no main table")]
    NoMainTable(Vec<String>),
}

fn format_cycles(cycles: &[Vec<String>]) -> String {
    cycles.iter().map(|c| c.join(" -> ")).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningKind {
    /// The foreign-key value matches no row of the parent table.
    DanglingForeignKey,
    /// The foreign-key value is null.
    NullReference,
    /// The referenced parent row was itself left out.
    ParentNotEmbedded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformWarning {
    pub kind: WarningKind,
    pub table: String,
    pub column: String,
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transformed {
    pub database: DocumentDatabase,
    pub warnings: Vec<TransformWarning>,
}

impl RelationalDump {
    pub fn from_json_str(text: &str) -> Result<Self, TransformError> {
        let dump: RelationalDump = serde_json::from_str(text).map_err(|e| TransformError::Invalid(e.to_string()))?;
        dump.validate()?;
        Ok(dump)
    }

    fn table_index(&self) -> HashMap<&str, usize> {
        self.tables
            .iter()
            .enumerate()
            .map(|(i, t)| (t.name.as_str(), i))
            .collect()
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn validate(&self) -> Result<(), TransformError> {
        let index = self.table_index();
        if index.len() != self.tables.len() {
            return Err(TransformError::Invalid("duplicate table names".into()));
        }
        for t in &self.tables {
            if let Some(pk) = &t.primary_key {
                if t.column(pk).is_none() {
                    return Err(TransformError::Invalid(format!(
                        "{}: primary key `{pk}` is not a column",
                        t.name
                    )));
                }
            }
            for (i, row) in t.rows.iter().enumerate() {
                if row.len() != t.columns.len() {
                    return Err(TransformError::Invalid(format!(
                        "{}: row {i} has {} values for {} columns",
                        t.name,
                        row.len(),
                        t.columns.len()
                    )));
                }
            }
            for fk in &t.foreign_keys {
                if t.column(&fk.column).is_none() {
                    return Err(TransformError::Invalid(format!(
                        "{}: foreign key column `{}` missing",
                        t.name, fk.column
                    )));
                }
                let target = index
                    .get(fk.ref_table.as_str())
                    .map(|i| &self.tables[*i])
                    .ok_or_else(|| TransformError::Invalid(format!("{}: unknown table `{}`", t.name, fk.ref_table)))?;
                if target.column(&fk.ref_column).is_none() {
                    return Err(TransformError::Invalid(format!(
                        "{}: `{}.{}` does not exist",
                        t.name, fk.ref_table, fk.ref_column
                    )));
                }
            }
        }
        Ok(())
    }

    /// Distinct referenced tables per table, as dump indices.
    fn edges(&self) -> Vec<BTreeSet<usize>> {
        let index = self.table_index();
        self.tables
            .iter()
            .map(|t| {
                t.foreign_keys
                    .iter()
                    .filter_map(|fk| index.get(fk.ref_table.as_str()).copied())
                    .collect()
            })
            .collect()
    }
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Connected components of the undirected foreign-key graph, in dump order.
pub fn group_tables(dump: &RelationalDump) -> Vec<TableCluster> {
    let edges = dump.edges();
    let mut uf = UnionFind::new(dump.tables.len());
    for (from, targets) in edges.iter().enumerate() {
        for to in targets {
            uf.union(from, *to);
        }
    }
    let mut order: Vec<usize> = Vec::new();
    let mut members: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..dump.tables.len() {
        let root = uf.find(i);
        members
            .entry(root)
            .or_insert_with(|| {
                order.push(root);
                Vec::new()
            })
            .push(i);
    }
    order
        .into_iter()
        .map(|root| {
            let tables = &members[&root];
            TableCluster {
                tables: tables.iter().map(|i| dump.tables[*i].name.clone()).collect(),
                main_tables: sinks(tables, &edges)
                    .into_iter()
                    .map(|i| dump.tables[i].name.clone())
                    .collect(),
            }
        })
        .collect()
}

fn sinks(tables: &[usize], edges: &[BTreeSet<usize>]) -> Vec<usize> {
    tables
        .iter()
        .copied()
        .filter(|t| !edges[*t].iter().any(|to| to != t && tables.contains(to)))
        .collect()
}

/// Tables of `cluster` without foreign keys to other members, in dump order.
pub fn find_main_tables(cluster: &TableCluster, dump: &RelationalDump) -> Result<Vec<String>, TransformError> {
    let index = dump.table_index();
    let tables: Vec<usize> = cluster
        .tables
        .iter()
        .filter_map(|t| index.get(t.as_str()).copied())
        .collect();
    let mut found = sinks(&tables, &dump.edges());
    found.sort();
    if found.is_empty() {
        return Err(TransformError::NoMainTable(cluster.tables.clone()));
    }
    Ok(found.into_iter().map(|i| dump.tables[i].name.clone()).collect())
}

/// Every elementary directed cycle of the table-level foreign-key graph.
/// Each cycle starts at its earliest table in dump order.
pub fn detect_fk_cycles(dump: &RelationalDump) -> Vec<Vec<String>> {
    let edges = dump.edges();
    let mut cycles = Vec::new();
    for start in 0..edges.len() {
        let mut path = vec![start];
        let mut on_path = vec![false; edges.len()];
        on_path[start] = true;
        cycle_search(start, start, &edges, &mut path, &mut on_path, &mut cycles);
    }
    cycles
        .into_iter()
        .map(|c: Vec<usize>| c.into_iter().map(|i| dump.tables[i].name.clone()).collect())
        .collect()
}

fn cycle_search(
    start: usize,
    node: usize,
    edges: &[BTreeSet<usize>],
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    out: &mut Vec<Vec<usize>>,
) {
    for &next in &edges[node] {
        if next == start {
            out.push(path.clone());
        } else if next > start && !on_path[next] {
            on_path[next] = true;
            path.push(next);
            cycle_search(start, next, edges, path, on_path, out);
            path.pop();
            on_path[next] = false;
        }
    }
}

/// Map a relational cell to a document value according to its column type.
pub fn convert_cell(value: &serde_json::Value, type_tag: &str) -> DocValue {
    let tag = type_tag.to_ascii_lowercase();
    let integral = ["int", "integer", "bigint", "smallint", "tinyint", "mediumint", "serial"]
        .iter()
        .any(|t| tag == *t || tag.starts_with(&format!("{t}(")) || tag.starts_with(&format!("{t} ")));
    let real = ["real", "float", "double", "numeric", "decimal", "number"]
        .iter()
        .any(|t| tag.starts_with(t));
    match value {
        serde_json::Value::Null => DocValue::Null,
        _ if integral || real => {
            let parsed = match value {
                serde_json::Value::Number(n) => n.as_i64().map(|i| i as f64).or_else(|| n.as_f64()),
                serde_json::Value::String(s) => s.trim().parse::<f64>().ok(),
                serde_json::Value::Bool(b) => Some(f64::from(u8::from(*b))),
                _ => None,
            };
            match parsed {
                Some(f) if integral && f.fract() == 0.0 && f.abs() <= MAX_SAFE_INT as f64 => DocValue::Int(f as i64),
                Some(f) if real => DocValue::Float(f),
                Some(f) => DocValue::number(f),
                None => DocValue::Str(cell_text(value)),
            }
        }
        _ => DocValue::Str(cell_text(value)),
    }
}

fn cell_text(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Nest every database cluster into document collections, one per main table.
pub fn transform_database(dump: &RelationalDump) -> Result<Transformed, TransformError> {
    dump.validate()?;
    let cycles = detect_fk_cycles(dump);
    if !cycles.is_empty() {
        return Err(TransformError::Cycle(cycles));
    }
    let index = dump.table_index();
    let n = dump.tables.len();

    // The embedding parent of each non-main table: the referenced table
    // earliest in dump order.
    let mut parent_fk: Vec<Option<&ForeignKey>> = vec![None; n];
    for (i, t) in dump.tables.iter().enumerate() {
        parent_fk[i] = t
            .foreign_keys
            .iter()
            .filter(|fk| fk.ref_table != t.name)
            .min_by_key(|fk| index[fk.ref_table.as_str()]);
    }
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, fk) in parent_fk.iter().enumerate() {
        if let Some(fk) = fk {
            children[index[fk.ref_table.as_str()]].push(i);
        }
    }

    let rows: Vec<Vec<Document>> = dump
        .tables
        .iter()
        .map(|t| {
            t.rows
                .iter()
                .map(|r| {
                    t.columns
                        .iter()
                        .zip(r)
                        .map(|(c, v)| (c.name.clone(), convert_cell(v, &c.type_tag)))
                        .collect()
                })
                .collect()
        })
        .collect();

    // Child rows keyed by their foreign-key value.
    let mut by_key: Vec<HashMap<String, Vec<usize>>> = vec![HashMap::new(); n];
    for (i, fk) in parent_fk.iter().enumerate() {
        if let Some(fk) = fk {
            for (r, row) in rows[i].iter().enumerate() {
                let v = &row[&fk.column];
                if !v.is_null() {
                    by_key[i].entry(v.canonical_key()).or_default().push(r);
                }
            }
        }
    }

    let mut builder = Nester {
        dump,
        parent_fk: &parent_fk,
        children: &children,
        rows: &rows,
        by_key: &by_key,
        embedded: vec![vec![false; 0]; n],
    };
    for (i, r) in rows.iter().enumerate() {
        builder.embedded[i] = vec![false; r.len()];
    }

    let mut database = DocumentDatabase::new(dump.name.clone());
    for cluster in group_tables(dump) {
        for main in &cluster.main_tables {
            let t = index[main.as_str()];
            let docs = (0..rows[t].len()).map(|r| builder.nest(t, r)).collect();
            database.collections.insert(main.clone(), docs);
        }
    }

    let mut warnings = Vec::new();
    for (i, fk) in parent_fk.iter().enumerate() {
        let Some(fk) = fk else { continue };
        let parent = index[fk.ref_table.as_str()];
        let parent_col = &fk.ref_column;
        for (r, row) in rows[i].iter().enumerate() {
            if builder.embedded[i][r] {
                continue;
            }
            let v = &row[&fk.column];
            let kind = if v.is_null() {
                WarningKind::NullReference
            } else if rows[parent].iter().any(|p| p[parent_col].semantic_eq(v)) {
                WarningKind::ParentNotEmbedded
            } else {
                WarningKind::DanglingForeignKey
            };
            warnings.push(TransformWarning {
                kind,
                table: dump.tables[i].name.clone(),
                column: fk.column.clone(),
                row: r,
            });
        }
    }
    Ok(Transformed { database, warnings })
}

struct Nester<'a> {
    dump: &'a RelationalDump,
    parent_fk: &'a [Option<&'a ForeignKey>],
    children: &'a [Vec<usize>],
    rows: &'a [Vec<Document>],
    by_key: &'a [HashMap<String, Vec<usize>>],
    embedded: Vec<Vec<bool>>,
}

impl Nester<'_> {
    fn nest(&mut self, table: usize, row: usize) -> Document {
        self.embedded[table][row] = true;
        let mut doc = self.rows[table][row].clone();
        for &child in &self.children[table] {
            let fk = self.parent_fk[child].expect("child has a parent key");
            let key = &self.rows[table][row][&fk.ref_column];
            let matched: Vec<usize> = if key.is_null() {
                Vec::new()
            } else {
                self.by_key[child]
                    .get(&key.canonical_key())
                    .cloned()
                    .unwrap_or_default()
            };
            let nested = matched
                .into_iter()
                .map(|r| DocValue::Obj(self.nest(child, r)))
                .collect();
            doc.insert(self.dump.tables[child].name.clone(), DocValue::Array(nested));
        }
        doc
    }
}
