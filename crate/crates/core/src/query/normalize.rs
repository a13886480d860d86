use crate::value::{DocValue, Document};

use super::ast::{QueryAst, QueryBody, Stage, StageOp};
use super::QueryError;

/// Standardize accumulator output names to `<op>_<object>` and lookup
/// `as` names to `Docs1`, `Docs2`, ..., rewriting downstream references.
pub fn normalize_renames(ast: &QueryAst) -> Result<QueryAst, QueryError> {
    let QueryBody::Aggregate(stages) = &ast.body else {
        return Ok(ast.clone());
    };
    let mut renames: Vec<(String, String)> = Vec::new();
    let mut lookups = 0usize;
    let mut out = Vec::with_capacity(stages.len());

    for stage in stages {
        let mut body = match stage.op {
            StageOp::Lookup => rewrite_lookup(&stage.body, &renames),
            _ => rewrite(&stage.body, &renames),
        };
        match stage.op {
            StageOp::Group => {
                if let DocValue::Obj(group) = &body {
                    let mut renamed = Document::new();
                    for (key, acc) in group {
                        let name = if key == "_id" {
                            key.clone()
                        } else {
                            standard_name(key, acc)
                        };
                        if renamed.contains_key(&name) {
                            return Err(QueryError::NormalizationConflict(format!(
                                "two $group outputs map to `{name}`"
                            )));
                        }
                        if &name != key {
                            renames.push((key.clone(), name.clone()));
                        }
                        renamed.insert(name, acc.clone());
                    }
                    body = DocValue::Obj(renamed);
                }
            }
            StageOp::Lookup => {
                if let Some(spec) = body.as_object_mut() {
                    lookups += 1;
                    let name = format!("Docs{lookups}");
                    if let Some(DocValue::Str(old)) = spec.get("as") {
                        if *old != name {
                            renames.push((old.clone(), name.clone()));
                        }
                    }
                    spec.insert("as".into(), DocValue::Str(name));
                }
            }
            _ => {}
        }
        out.push(Stage::new(stage.op.clone(), body));
    }
    Ok(QueryAst::aggregate(ast.collection.clone(), out))
}

fn standard_name(key: &str, acc: &DocValue) -> String {
    let Some(spec) = acc.as_object().filter(|m| m.len() == 1) else {
        return key.to_string();
    };
    let (op, arg) = spec.iter().next().expect("one entry");
    let op_name = op.trim_start_matches('$');
    if op == "$count" || (op == "$sum" && arg.as_f64() == Some(1.0)) {
        return "count".into();
    }
    match arg {
        DocValue::Str(s) if s.starts_with('$') && !s.starts_with("$$") && s.len() > 1 => {
            let object = s.rsplit('.').next().unwrap_or(s).trim_start_matches('$');
            format!("{op_name}_{object}").to_lowercase()
        }
        _ => key.to_string(),
    }
}

fn rename_path(path: &str, renames: &[(String, String)]) -> Option<String> {
    let mut current = path.to_string();
    let mut changed = false;
    for (old, new) in renames {
        if current == *old {
            current = new.clone();
            changed = true;
        } else if let Some(rest) = current.strip_prefix(old.as_str()).filter(|r| r.starts_with('.')) {
            current = format!("{new}{rest}");
            changed = true;
        }
    }
    changed.then_some(current)
}

fn rewrite(value: &DocValue, renames: &[(String, String)]) -> DocValue {
    if renames.is_empty() {
        return value.clone();
    }
    match value {
        DocValue::Str(s) => match s.strip_prefix('$') {
            Some(path) if !path.starts_with('$') => match rename_path(path, renames) {
                Some(p) => DocValue::Str(format!("${p}")),
                None => value.clone(),
            },
            _ => value.clone(),
        },
        DocValue::Array(items) => DocValue::Array(items.iter().map(|v| rewrite(v, renames)).collect()),
        DocValue::Obj(map) => DocValue::Obj(
            map.iter()
                .map(|(k, v)| {
                    let key = if k.starts_with('$') {
                        None
                    } else {
                        rename_path(k, renames)
                    };
                    (key.unwrap_or_else(|| k.clone()), rewrite(v, renames))
                })
                .collect(),
        ),
        other => other.clone(),
    }
}

// Only the parts of a lookup that refer to the input documents are rewritten;
// `foreignField` and the sub-pipeline address the foreign collection.
fn rewrite_lookup(body: &DocValue, renames: &[(String, String)]) -> DocValue {
    let Some(spec) = body.as_object() else {
        return body.clone();
    };
    let mut out = spec.clone();
    if let Some(DocValue::Str(local)) = spec.get("localField") {
        if let Some(p) = rename_path(local, renames) {
            out.insert("localField".into(), DocValue::Str(p));
        }
    }
    if let Some(DocValue::Obj(vars)) = spec.get("let") {
        let vars = vars.iter().map(|(k, v)| (k.clone(), rewrite(v, renames))).collect();
        out.insert("let".into(), DocValue::Obj(vars));
    }
    DocValue::Obj(out)
}
