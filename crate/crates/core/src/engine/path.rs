//! Dotted-path access over documents.

use crate::value::{DocValue, Document};

/// Terminal values reached by `path`, descending into arrays of objects
/// along the way (query-language semantics). Missing paths yield nothing.
pub fn path_values<'a>(root: &'a DocValue, path: &str) -> Vec<&'a DocValue> {
    let mut current = vec![root];
    for segment in path.split('.') {
        let mut next = Vec::new();
        for value in current {
            descend(value, segment, &mut next);
        }
        if next.is_empty() {
            return next;
        }
        current = next;
    }
    current
}

fn descend<'a>(value: &'a DocValue, segment: &str, out: &mut Vec<&'a DocValue>) {
    match value {
        DocValue::Obj(map) => {
            if let Some(v) = map.get(segment) {
                out.push(v);
            }
        }
        DocValue::Array(items) => {
            for item in items {
                if let DocValue::Obj(map) = item {
                    if let Some(v) = map.get(segment) {
                        out.push(v);
                    }
                }
            }
        }
        _ => {}
    }
}

/// Value of a `"$a.b"` reference: arrays along the path map element-wise.
pub fn expr_path(root: &DocValue, path: &str) -> Option<DocValue> {
    let mut segments = path.split('.');
    let first = segments.next()?;
    let rest: Vec<&str> = segments.collect();
    expr_step(root, first, &rest)
}

fn expr_step(value: &DocValue, segment: &str, rest: &[&str]) -> Option<DocValue> {
    match value {
        DocValue::Obj(map) => {
            let v = map.get(segment)?;
            match rest.split_first() {
                None => Some(v.clone()),
                Some((next, tail)) => expr_step(v, next, tail),
            }
        }
        DocValue::Array(items) => Some(DocValue::Array(
            items
                .iter()
                .filter(|item| matches!(item, DocValue::Obj(_) | DocValue::Array(_)))
                .filter_map(|item| expr_step(item, segment, rest))
                .collect(),
        )),
        _ => None,
    }
}

/// Value at `path` following objects only.
pub fn get_path<'a>(doc: &'a Document, path: &str) -> Option<&'a DocValue> {
    let mut segments = path.split('.');
    let mut current = doc.get(segments.next()?)?;
    for segment in segments {
        current = current.as_object()?.get(segment)?;
    }
    Some(current)
}

/// Set `path`, creating (or replacing non-object) intermediate levels.
pub fn set_path(doc: &mut Document, path: &str, value: DocValue) {
    match path.split_once('.') {
        None => {
            doc.insert(path.to_string(), value);
        }
        Some((head, tail)) => {
            let slot = doc.entry(head.to_string()).or_insert_with(DocValue::empty_object);
            if !matches!(slot, DocValue::Obj(_)) {
                *slot = DocValue::empty_object();
            }
            if let DocValue::Obj(inner) = slot {
                set_path(inner, tail, value);
            }
        }
    }
}

/// Remove `path` if present (objects only).
pub fn remove_path(doc: &mut Document, path: &str) {
    match path.split_once('.') {
        None => {
            doc.shift_remove(path);
        }
        Some((head, tail)) => {
            if let Some(DocValue::Obj(inner)) = doc.get_mut(head) {
                remove_path(inner, tail);
            }
        }
    }
}
