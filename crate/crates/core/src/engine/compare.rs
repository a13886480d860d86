//! Result-set comparison shared by verification and the execution metrics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::value::{DocValue, Document};

use super::ResultSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    Equal,
    FieldsDiffer,
    ValuesDiffer,
    BothDiffer,
}

/// Compare two result sets. Order matters only when both sides are ordered.
pub fn compare_results(a: &ResultSet, b: &ResultSet) -> Comparison {
    if docs_equal(a, b) {
        return Comparison::Equal;
    }
    match (
        field_multisets_match(&a.docs, &b.docs),
        value_multisets_match(&a.docs, &b.docs),
    ) {
        (false, false) => Comparison::BothDiffer,
        (false, true) => Comparison::FieldsDiffer,
        _ => Comparison::ValuesDiffer,
    }
}

fn docs_equal(a: &ResultSet, b: &ResultSet) -> bool {
    if a.docs.len() != b.docs.len() {
        return false;
    }
    if a.ordered && b.ordered {
        return a
            .docs
            .iter()
            .zip(&b.docs)
            .all(|(x, y)| DocValue::Obj(x.clone()).semantic_eq(&DocValue::Obj(y.clone())));
    }
    let keys = |docs: &[Document]| counts(docs.iter().map(|d| DocValue::Obj(d.clone()).canonical_key()));
    keys(&a.docs) == keys(&b.docs)
}

fn counts(items: impl Iterator<Item = String>) -> HashMap<String, usize> {
    let mut out = HashMap::new();
    for item in items {
        *out.entry(item).or_insert(0) += 1;
    }
    out
}

/// Dotted leaf paths of one document, sorted. Objects inside arrays are
/// walked with the array's own path; an array of scalars is a single leaf.
pub fn field_paths(doc: &Document) -> Vec<String> {
    let mut out = Vec::new();
    collect_paths(doc, "", &mut out);
    out.sort();
    out
}

fn collect_paths(doc: &Document, prefix: &str, out: &mut Vec<String>) {
    for (key, value) in doc {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        collect_value_paths(value, path, out);
    }
}

fn collect_value_paths(value: &DocValue, path: String, out: &mut Vec<String>) {
    match value {
        DocValue::Obj(inner) if !inner.is_empty() => collect_paths(inner, &path, out),
        DocValue::Array(items) if items.iter().any(|i| matches!(i, DocValue::Obj(_) | DocValue::Array(_))) => {
            for item in items {
                match item {
                    DocValue::Obj(_) | DocValue::Array(_) => collect_value_paths(item, path.clone(), out),
                    _ => out.push(path.clone()),
                }
            }
        }
        _ => out.push(path),
    }
}

/// Leaf values of one document, in document order.
pub fn leaf_values(doc: &Document) -> Vec<&DocValue> {
    let mut out = Vec::new();
    for value in doc.values() {
        collect_leaves(value, &mut out);
    }
    out
}

fn collect_leaves<'a>(value: &'a DocValue, out: &mut Vec<&'a DocValue>) {
    match value {
        DocValue::Obj(inner) if !inner.is_empty() => inner.values().for_each(|v| collect_leaves(v, out)),
        DocValue::Array(items) if !items.is_empty() => items.iter().for_each(|v| collect_leaves(v, out)),
        other => out.push(other),
    }
}

/// Same multiset of per-document field-name multisets.
pub fn field_multisets_match(a: &[Document], b: &[Document]) -> bool {
    let key = |docs: &[Document]| counts(docs.iter().map(|d| field_paths(d).join("\u{1f}")));
    key(a) == key(b)
}

/// Same multiset of leaf values across all documents, numbers unified.
pub fn value_multisets_match(a: &[Document], b: &[Document]) -> bool {
    let key = |docs: &[Document]| counts(docs.iter().flat_map(leaf_values).map(DocValue::canonical_key));
    key(a) == key(b)
}
