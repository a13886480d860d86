//! Stage-by-stage pipeline evaluation.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::query::{Stage, StageOp};
use crate::value::{DocValue, Document};

use super::expr::{self, Vars};
use super::filter;
use super::path::{expr_path, get_path, path_values, remove_path, set_path};
use super::{DocumentDatabase, EngineError};

pub(crate) struct Pipeline<'db> {
    pub db: &'db DocumentDatabase,
}

impl Pipeline<'_> {
    pub fn run(&self, mut docs: Vec<Document>, stages: &[Stage], vars: &Vars) -> Result<Vec<Document>, EngineError> {
        for stage in stages {
            docs = self.stage(docs, stage, vars)?;
        }
        Ok(docs)
    }

    fn stage(&self, docs: Vec<Document>, stage: &Stage, vars: &Vars) -> Result<Vec<Document>, EngineError> {
        let body = &stage.body;
        match &stage.op {
            StageOp::Match => match_docs(docs, body, vars),
            StageOp::Project => project(docs, body, vars),
            StageOp::Unwind => unwind(docs, body),
            StageOp::Group => group(docs, body, vars),
            StageOp::Sort => sort(docs, body),
            StageOp::Limit => Ok(docs.into_iter().take(count_arg(body, "$limit")?).collect()),
            StageOp::Skip => Ok(docs.into_iter().skip(count_arg(body, "$skip")?).collect()),
            StageOp::Count => count(docs, body),
            StageOp::Lookup => self.lookup(docs, body, vars),
            StageOp::Other(name) => Err(EngineError::UnsupportedOperator(name.clone())),
        }
    }

    fn lookup(&self, docs: Vec<Document>, body: &DocValue, vars: &Vars) -> Result<Vec<Document>, EngineError> {
        let spec = body
            .as_object()
            .ok_or_else(|| EngineError::InvalidArgument("$lookup expects an object".into()))?;
        let str_field = |name: &str| -> Result<Option<&str>, EngineError> {
            match spec.get(name) {
                None => Ok(None),
                Some(DocValue::Str(s)) => Ok(Some(s.as_str())),
                Some(_) => Err(EngineError::InvalidArgument(format!("$lookup.{name} must be a string"))),
            }
        };
        let from = str_field("from")?.ok_or_else(|| EngineError::InvalidArgument("$lookup.from is required".into()))?;
        let as_name = str_field("as")?.ok_or_else(|| EngineError::InvalidArgument("$lookup.as is required".into()))?;
        let local = str_field("localField")?;
        let foreign = str_field("foreignField")?;
        if local.is_some() != foreign.is_some() {
            return Err(EngineError::InvalidArgument(
                "$lookup needs both localField and foreignField".into(),
            ));
        }
        let pipeline = match spec.get("pipeline") {
            None => None,
            Some(DocValue::Array(items)) => Some(parse_stages(items)?),
            Some(_) => return Err(EngineError::InvalidArgument("$lookup.pipeline must be an array".into())),
        };
        if local.is_none() && pipeline.is_none() {
            return Err(EngineError::InvalidArgument(
                "$lookup needs localField/foreignField or a pipeline".into(),
            ));
        }
        let let_vars = match spec.get("let") {
            None => None,
            Some(DocValue::Obj(m)) => Some(m),
            Some(_) => return Err(EngineError::InvalidArgument("$lookup.let must be an object".into())),
        };
        // A missing foreign collection joins nothing.
        let foreign_docs: &[Document] = self.db.collections.get(from).map(Vec::as_slice).unwrap_or(&[]);

        let mut out = Vec::with_capacity(docs.len());
        for mut doc in docs {
            let root = DocValue::Obj(doc);
            let mut joined: Vec<Document> = match (local, foreign) {
                (Some(lf), Some(ff)) => {
                    let mut keys: Vec<DocValue> = path_values(&root, lf)
                        .into_iter()
                        .flat_map(|v| match v {
                            DocValue::Array(items) if !items.is_empty() => items.clone(),
                            other => vec![other.clone()],
                        })
                        .collect();
                    if keys.is_empty() {
                        keys.push(DocValue::Null);
                    }
                    foreign_docs
                        .iter()
                        .filter(|fd| {
                            let fdv = DocValue::Obj((*fd).clone());
                            let cands = path_values(&fdv, ff);
                            keys.iter().any(|k| {
                                if cands.is_empty() {
                                    return k.is_null();
                                }
                                cands.iter().any(|c| {
                                    c.semantic_eq(k)
                                        || matches!(c, DocValue::Array(items) if items.iter().any(|i| i.semantic_eq(k)))
                                })
                            })
                        })
                        .cloned()
                        .collect()
                }
                _ => foreign_docs.to_vec(),
            };
            if let Some(stages) = &pipeline {
                let mut scope = vars.clone();
                if let Some(defs) = let_vars {
                    for (name, e) in defs {
                        let value = expr::eval(e, &root, vars)?.unwrap_or(DocValue::Null);
                        scope.insert(name.clone(), value);
                    }
                }
                joined = self.run(joined, stages, &scope)?;
            }
            let DocValue::Obj(inner) = root else { unreachable!() };
            doc = inner;
            set_path(
                &mut doc,
                as_name,
                DocValue::Array(joined.into_iter().map(DocValue::Obj).collect()),
            );
            out.push(doc);
        }
        Ok(out)
    }
}

pub(crate) fn parse_stages(items: &[DocValue]) -> Result<Vec<Stage>, EngineError> {
    items
        .iter()
        .map(|item| crate::query::stage_from_value(item.clone()).map_err(EngineError::InvalidArgument))
        .collect()
}

pub(crate) fn match_docs(docs: Vec<Document>, filter: &DocValue, vars: &Vars) -> Result<Vec<Document>, EngineError> {
    let mut out = Vec::new();
    for doc in docs {
        let root = DocValue::Obj(doc);
        if filter::matches(&root, filter, vars)? {
            let DocValue::Obj(doc) = root else { unreachable!() };
            out.push(doc);
        }
    }
    Ok(out)
}

fn count_arg(body: &DocValue, op: &str) -> Result<usize, EngineError> {
    match body.as_i64() {
        Some(n) if n >= 0 => Ok(n as usize),
        _ => Err(EngineError::InvalidArgument(format!(
            "{op} expects a non-negative integer"
        ))),
    }
}

fn count(docs: Vec<Document>, body: &DocValue) -> Result<Vec<Document>, EngineError> {
    let name = body
        .as_str()
        .filter(|s| !s.is_empty() && !s.starts_with('$'))
        .ok_or_else(|| EngineError::InvalidArgument("$count expects a field name".into()))?;
    let mut doc = Document::new();
    doc.insert(name.to_string(), DocValue::Int(docs.len() as i64));
    Ok(vec![doc])
}

enum ProjectionItem<'a> {
    Include(&'a str),
    Exclude(&'a str),
    Computed(&'a str, &'a DocValue),
}

fn projection_items(spec: &Document) -> Result<Vec<ProjectionItem<'_>>, EngineError> {
    let mut items = Vec::with_capacity(spec.len());
    for (key, value) in spec {
        let item = match value {
            DocValue::Int(_) | DocValue::Float(_) | DocValue::Bool(_) => {
                if expr::truthy(&Some(value.clone())) {
                    ProjectionItem::Include(key)
                } else {
                    ProjectionItem::Exclude(key)
                }
            }
            DocValue::Obj(m) if !m.keys().any(|k| k.starts_with('$')) => {
                return Err(EngineError::UnsupportedOperator(format!(
                    "nested projection for `{key}`"
                )));
            }
            other => ProjectionItem::Computed(key, other),
        };
        items.push(item);
    }
    Ok(items)
}

/// Apply a projection document (inclusion, exclusion, or computed fields).
pub(crate) fn project(docs: Vec<Document>, spec: &DocValue, vars: &Vars) -> Result<Vec<Document>, EngineError> {
    let spec = spec
        .as_object()
        .ok_or_else(|| EngineError::InvalidArgument("a projection must be an object".into()))?;
    let items = projection_items(spec)?;
    let excludes_id = items.iter().any(|i| matches!(i, ProjectionItem::Exclude("_id")));
    let has_non_id_exclusion = items
        .iter()
        .any(|i| matches!(i, ProjectionItem::Exclude(k) if *k != "_id"));
    let has_inclusion = items
        .iter()
        .any(|i| matches!(i, ProjectionItem::Include(k) if *k != "_id") || matches!(i, ProjectionItem::Computed(..)))
        || (!has_non_id_exclusion && items.iter().any(|i| matches!(i, ProjectionItem::Include("_id"))));
    if has_non_id_exclusion && has_inclusion {
        return Err(EngineError::InvalidArgument(
            "cannot mix inclusion and exclusion in a projection".into(),
        ));
    }

    let mut out = Vec::with_capacity(docs.len());
    for doc in docs {
        if !has_inclusion {
            let mut doc = doc;
            for item in &items {
                if let ProjectionItem::Exclude(path) = item {
                    remove_path(&mut doc, path);
                }
            }
            out.push(doc);
            continue;
        }
        let root = DocValue::Obj(doc);
        let mut projected = Document::new();
        if !excludes_id {
            if let Some(id) = root.as_object().and_then(|d| d.get("_id")) {
                projected.insert("_id".into(), id.clone());
            }
        }
        for item in &items {
            match item {
                ProjectionItem::Include("_id") | ProjectionItem::Exclude(_) => {}
                ProjectionItem::Include(path) => {
                    if let Some(v) = get_path(root.as_object().expect("object"), path) {
                        set_path(&mut projected, path, v.clone());
                    }
                }
                ProjectionItem::Computed(path, e) => {
                    if let Some(v) = expr::eval(e, &root, vars)? {
                        set_path(&mut projected, path, v);
                    }
                }
            }
        }
        out.push(projected);
    }
    Ok(out)
}

fn unwind(docs: Vec<Document>, body: &DocValue) -> Result<Vec<Document>, EngineError> {
    let (path, preserve) = match body {
        DocValue::Str(p) => (p.as_str(), false),
        DocValue::Obj(spec) => {
            let p = spec
                .get("path")
                .and_then(DocValue::as_str)
                .ok_or_else(|| EngineError::InvalidArgument("$unwind.path is required".into()))?;
            let preserve = match spec.get("preserveNullAndEmptyArrays") {
                None => false,
                Some(DocValue::Bool(b)) => *b,
                Some(_) => {
                    return Err(EngineError::InvalidArgument(
                        "preserveNullAndEmptyArrays must be a boolean".into(),
                    ))
                }
            };
            if let Some(extra) = spec.keys().find(|k| *k != "path" && *k != "preserveNullAndEmptyArrays") {
                return Err(EngineError::UnsupportedOperator(format!("$unwind option `{extra}`")));
            }
            (p, preserve)
        }
        _ => return Err(EngineError::InvalidArgument("$unwind expects a path".into())),
    };
    let path = path
        .strip_prefix('$')
        .filter(|p| !p.is_empty() && !p.starts_with('$'))
        .ok_or_else(|| EngineError::InvalidArgument("$unwind path must start with `$`".into()))?;

    let mut out = Vec::new();
    for doc in docs {
        match get_path(&doc, path) {
            Some(DocValue::Array(items)) if !items.is_empty() => {
                let items = items.clone();
                for item in items {
                    let mut copy = doc.clone();
                    set_path(&mut copy, path, item);
                    out.push(copy);
                }
            }
            Some(DocValue::Array(_)) | Some(DocValue::Null) | None => {
                if preserve {
                    out.push(doc);
                }
            }
            Some(_) => out.push(doc),
        }
    }
    Ok(out)
}

enum Accumulator {
    Sum { int: i64, float: f64, is_float: bool },
    Avg { total: f64, n: usize },
    Min(Option<DocValue>),
    Max(Option<DocValue>),
    Push(Vec<DocValue>),
    AddToSet(Vec<DocValue>, std::collections::HashSet<String>),
    First(Option<DocValue>),
    Last(DocValue),
    Count(i64),
}

impl Accumulator {
    fn new(op: &str) -> Result<Self, EngineError> {
        Ok(match op {
            "$sum" => Accumulator::Sum {
                int: 0,
                float: 0.0,
                is_float: false,
            },
            "$avg" => Accumulator::Avg { total: 0.0, n: 0 },
            "$min" => Accumulator::Min(None),
            "$max" => Accumulator::Max(None),
            "$push" => Accumulator::Push(Vec::new()),
            "$addToSet" => Accumulator::AddToSet(Vec::new(), Default::default()),
            "$first" => Accumulator::First(None),
            "$last" => Accumulator::Last(DocValue::Null),
            "$count" => Accumulator::Count(0),
            other => return Err(EngineError::UnsupportedOperator(other.to_string())),
        })
    }

    fn add(&mut self, value: Option<DocValue>) {
        match self {
            Accumulator::Sum { int, float, is_float } => {
                if let Some(v) = value {
                    match v {
                        DocValue::Int(i) if !*is_float => match int.checked_add(i) {
                            Some(s) => *int = s,
                            None => {
                                *is_float = true;
                                *float = *int as f64 + i as f64;
                            }
                        },
                        DocValue::Int(i) => *float += i as f64,
                        DocValue::Float(f) => {
                            if !*is_float {
                                *is_float = true;
                                *float = *int as f64;
                            }
                            *float += f;
                        }
                        _ => {}
                    }
                }
            }
            Accumulator::Avg { total, n } => {
                if let Some(f) = value.as_ref().and_then(DocValue::as_f64) {
                    *total += f;
                    *n += 1;
                }
            }
            Accumulator::Min(cur) => keep_extreme(cur, value, Ordering::Less),
            Accumulator::Max(cur) => keep_extreme(cur, value, Ordering::Greater),
            Accumulator::Push(items) => {
                if let Some(v) = value {
                    items.push(v);
                }
            }
            Accumulator::AddToSet(items, seen) => {
                if let Some(v) = value {
                    if seen.insert(v.canonical_key()) {
                        items.push(v);
                    }
                }
            }
            Accumulator::First(first) => {
                if first.is_none() {
                    *first = Some(value.unwrap_or(DocValue::Null));
                }
            }
            Accumulator::Last(last) => *last = value.unwrap_or(DocValue::Null),
            Accumulator::Count(n) => *n += 1,
        }
    }

    fn finish(self) -> DocValue {
        match self {
            Accumulator::Sum { int, float, is_float } => {
                if is_float {
                    DocValue::Float(float)
                } else {
                    DocValue::Int(int)
                }
            }
            Accumulator::Avg { total, n } => {
                if n == 0 {
                    DocValue::Null
                } else {
                    DocValue::Float(total / n as f64)
                }
            }
            Accumulator::Min(v) | Accumulator::Max(v) => v.unwrap_or(DocValue::Null),
            Accumulator::Push(items) | Accumulator::AddToSet(items, _) => DocValue::Array(items),
            Accumulator::First(v) => v.unwrap_or(DocValue::Null),
            Accumulator::Last(v) => v,
            Accumulator::Count(n) => DocValue::Int(n),
        }
    }
}

fn keep_extreme(cur: &mut Option<DocValue>, value: Option<DocValue>, wanted: Ordering) {
    if let Some(v) = value.filter(|v| !v.is_null()) {
        if cur
            .as_ref()
            .is_none_or(|c| !v.semantic_eq(c) && v.total_cmp(c) == wanted)
        {
            *cur = Some(v);
        }
    }
}

fn group(docs: Vec<Document>, body: &DocValue, vars: &Vars) -> Result<Vec<Document>, EngineError> {
    let spec = body
        .as_object()
        .ok_or_else(|| EngineError::InvalidArgument("$group expects an object".into()))?;
    let id_expr = spec
        .get("_id")
        .ok_or_else(|| EngineError::InvalidArgument("$group requires an _id".into()))?;
    let mut acc_specs: Vec<(&str, &str, &DocValue)> = Vec::new();
    for (name, acc) in spec {
        if name == "_id" {
            continue;
        }
        let m = acc
            .as_object()
            .filter(|m| m.len() == 1)
            .ok_or_else(|| EngineError::InvalidArgument(format!("accumulator `{name}` must hold one operator")))?;
        let (op, arg) = m.iter().next().expect("one entry");
        Accumulator::new(op)?;
        acc_specs.push((name, op, arg));
    }

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut groups: Vec<(DocValue, Vec<Accumulator>)> = Vec::new();
    for doc in docs {
        let root = DocValue::Obj(doc);
        let key = expr::eval(id_expr, &root, vars)?.unwrap_or(DocValue::Null);
        let slot = match index.get(&key.canonical_key()) {
            Some(i) => *i,
            None => {
                let accs = acc_specs
                    .iter()
                    .map(|(_, op, _)| Accumulator::new(op))
                    .collect::<Result<Vec<_>, _>>()?;
                index.insert(key.canonical_key(), groups.len());
                groups.push((key, accs));
                groups.len() - 1
            }
        };
        for (i, (_, _, arg)) in acc_specs.iter().enumerate() {
            let value = expr::eval(arg, &root, vars)?;
            groups[slot].1[i].add(value);
        }
    }

    Ok(groups
        .into_iter()
        .map(|(key, accs)| {
            let mut doc = Document::new();
            doc.insert("_id".into(), key);
            for ((name, _, _), acc) in acc_specs.iter().zip(accs) {
                doc.insert(name.to_string(), acc.finish());
            }
            doc
        })
        .collect())
}

/// Stable multi-key sort.
pub(crate) fn sort(docs: Vec<Document>, spec: &DocValue) -> Result<Vec<Document>, EngineError> {
    let spec = spec
        .as_object()
        .filter(|m| !m.is_empty())
        .ok_or_else(|| EngineError::InvalidArgument("a sort specification must be a non-empty object".into()))?;
    let mut keys = Vec::with_capacity(spec.len());
    for (path, dir) in spec {
        let descending = match dir.as_i64() {
            Some(1) => false,
            Some(-1) => true,
            _ => {
                return Err(EngineError::InvalidArgument(format!(
                    "sort direction for `{path}` must be 1 or -1"
                )))
            }
        };
        keys.push((path.as_str(), descending));
    }
    let mut decorated: Vec<(Vec<DocValue>, Document)> = docs
        .into_iter()
        .map(|doc| {
            let root = DocValue::Obj(doc);
            let values = keys
                .iter()
                .map(|(p, _)| expr_path(&root, p).unwrap_or(DocValue::Null))
                .collect();
            let DocValue::Obj(doc) = root else { unreachable!() };
            (values, doc)
        })
        .collect();
    decorated.sort_by(|(a, _), (b, _)| {
        for (i, (_, descending)) in keys.iter().enumerate() {
            let ord = if a[i].semantic_eq(&b[i]) {
                Ordering::Equal
            } else {
                a[i].total_cmp(&b[i])
            };
            let ord = if *descending { ord.reverse() } else { ord };
            if ord != Ordering::Equal {
                return ord;
            }
        }
        Ordering::Equal
    });
    Ok(decorated.into_iter().map(|(_, d)| d).collect())
}
