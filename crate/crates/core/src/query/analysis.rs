use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::value::DocValue;

use super::ast::{QueryAst, QueryBody, Stage, StageOp};

/// Operators whose presence disqualifies a query from the curated dataset.
pub const DEFAULT_BANNED_OPS: [&str; 3] = ["$isArray", "$concatArrays", "$arrayElemAt"];

/// Schema elements a query touches.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldProfile {
    /// Dotted paths read from stored documents.
    pub database_fields: BTreeSet<String>,
    /// Names the query introduces (group keys, accumulators, computed projections, lookup `as`).
    pub defined_fields: BTreeSet<String>,
    pub collections: BTreeSet<String>,
}

/// Stage keywords in pipeline order, or the present clause set of a find.
pub fn extract_stage_keywords(ast: &QueryAst) -> Vec<String> {
    match &ast.body {
        QueryBody::Aggregate(stages) => stages.iter().map(|s| s.op.key().to_string()).collect(),
        QueryBody::Find(c) => {
            let mut out = vec!["filter".to_string()];
            if c.projection.is_some() {
                out.push("projection".into());
            }
            if c.sort.is_some() {
                out.push("sort".into());
            }
            if c.limit.is_some() {
                out.push("limit".into());
            }
            out
        }
    }
}

pub fn extract_field_profile(ast: &QueryAst) -> FieldProfile {
    let mut profile = FieldProfile::default();
    profile.collections.insert(ast.collection.clone());
    match &ast.body {
        QueryBody::Find(c) => {
            filter_fields(&c.filter, &mut profile);
            if let Some(p) = &c.projection {
                projection_fields(p, "", &mut profile);
            }
            if let Some(DocValue::Obj(s)) = &c.sort {
                profile.database_fields.extend(s.keys().cloned());
            }
        }
        QueryBody::Aggregate(stages) => {
            for stage in stages {
                stage_fields(stage, &mut profile);
            }
        }
    }
    profile
}

fn stage_fields(stage: &Stage, p: &mut FieldProfile) {
    let body = &stage.body;
    match stage.op {
        StageOp::Match => filter_fields(body, p),
        StageOp::Project => projection_fields(body, "", p),
        StageOp::Sort => {
            if let DocValue::Obj(s) = body {
                p.database_fields.extend(s.keys().cloned());
            }
        }
        StageOp::Unwind => match body {
            DocValue::Obj(o) => {
                if let Some(path) = o.get("path") {
                    value_refs(path, p);
                }
            }
            other => value_refs(other, p),
        },
        StageOp::Group => {
            let DocValue::Obj(g) = body else {
                return value_refs(body, p);
            };
            for (key, value) in g {
                if key == "_id" {
                    match value {
                        DocValue::Obj(fields) => {
                            for (name, expr) in fields {
                                p.defined_fields.insert(name.clone());
                                value_refs(expr, p);
                            }
                        }
                        other => value_refs(other, p),
                    }
                } else {
                    p.defined_fields.insert(key.clone());
                    value_refs(value, p);
                }
            }
        }
        StageOp::Lookup => {
            let DocValue::Obj(l) = body else { return };
            if let Some(DocValue::Str(from)) = l.get("from") {
                p.collections.insert(from.clone());
            }
            for key in ["localField", "foreignField"] {
                if let Some(DocValue::Str(f)) = l.get(key) {
                    p.database_fields.insert(f.clone());
                }
            }
            if let Some(DocValue::Str(name)) = l.get("as") {
                p.defined_fields.insert(name.clone());
            }
            if let Some(DocValue::Obj(vars)) = l.get("let") {
                for expr in vars.values() {
                    value_refs(expr, p);
                }
            }
            if let Some(DocValue::Array(pipeline)) = l.get("pipeline") {
                for item in pipeline {
                    if let Ok(inner) = super::parse::stage_from_value(item.clone()) {
                        stage_fields(&inner, p);
                    }
                }
            }
        }
        StageOp::Count => {
            if let DocValue::Str(name) = body {
                p.defined_fields.insert(name.clone());
            }
        }
        StageOp::Limit | StageOp::Skip => {}
        StageOp::Other(_) => value_refs(body, p),
    }
}

fn filter_fields(filter: &DocValue, p: &mut FieldProfile) {
    let DocValue::Obj(map) = filter else { return };
    for (key, value) in map {
        match key.as_str() {
            "$and" | "$or" | "$nor" => {
                if let DocValue::Array(items) = value {
                    for item in items {
                        filter_fields(item, p);
                    }
                }
            }
            k if k.starts_with('$') => value_refs(value, p),
            _ => {
                p.database_fields.insert(key.clone());
            }
        }
    }
}

fn projection_fields(spec: &DocValue, prefix: &str, p: &mut FieldProfile) {
    let DocValue::Obj(map) = spec else { return };
    for (key, value) in map {
        let name = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match value {
            DocValue::Int(_) | DocValue::Float(_) | DocValue::Bool(_) => {
                p.database_fields.insert(name);
            }
            DocValue::Obj(inner) if !inner.keys().any(|k| k.starts_with('$')) => {
                projection_fields(value, &name, p);
            }
            other => {
                p.defined_fields.insert(name);
                value_refs(other, p);
            }
        }
    }
}

/// Collect `"$path"` references (but not `"$$var"`) anywhere inside an expression.
fn value_refs(value: &DocValue, p: &mut FieldProfile) {
    match value {
        DocValue::Str(s) => {
            if let Some(path) = s.strip_prefix('$') {
                if !path.is_empty() && !path.starts_with('$') {
                    p.database_fields.insert(path.to_string());
                }
            }
        }
        DocValue::Array(items) => items.iter().for_each(|v| value_refs(v, p)),
        DocValue::Obj(map) => map.values().for_each(|v| value_refs(v, p)),
        _ => {}
    }
}

/// Banned operator names used as keys anywhere in the query.
pub fn detect_special_ops(ast: &QueryAst, banned: &BTreeSet<String>) -> BTreeSet<String> {
    fn scan(value: &DocValue, banned: &BTreeSet<String>, found: &mut BTreeSet<String>) {
        match value {
            DocValue::Obj(map) => {
                for (k, v) in map {
                    if banned.contains(k) {
                        found.insert(k.clone());
                    }
                    scan(v, banned, found);
                }
            }
            DocValue::Array(items) => items.iter().for_each(|v| scan(v, banned, found)),
            _ => {}
        }
    }
    let mut found = BTreeSet::new();
    match &ast.body {
        QueryBody::Aggregate(stages) => {
            for s in stages {
                scan(&s.to_value(), banned, &mut found);
            }
        }
        QueryBody::Find(c) => {
            for v in [Some(&c.filter), c.projection.as_ref(), c.sort.as_ref()]
                .into_iter()
                .flatten()
            {
                scan(v, banned, &mut found);
            }
        }
    }
    found
}

pub fn detect_special_ops_default(ast: &QueryAst) -> BTreeSet<String> {
    let banned = DEFAULT_BANNED_OPS.iter().map(|s| s.to_string()).collect();
    detect_special_ops(ast, &banned)
}
