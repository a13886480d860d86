//! Deliberately naive reference interpreter. It reads the query as plain JSON
//! and shares nothing with the engine except the value type.

use std::cmp::Ordering;
use std::collections::HashMap;

use text2nosql::DocValue;

type Doc = indexmap::IndexMap<String, DocValue>;

pub struct OracleResult {
    pub docs: Vec<Doc>,
    pub ordered: bool,
}

/// `db` is `{collection: [docs]}`; `query` is the JSON form of a parsed query.
pub fn oracle_execute(db: &DocValue, query: &DocValue) -> Result<OracleResult, String> {
    let q = query.as_object().ok_or("query must be an object")?;
    let coll = q["collection"].as_str().ok_or("collection")?;
    let docs: Vec<Doc> = match db.as_object().and_then(|m| m.get(coll)) {
        Some(DocValue::Array(items)) => items.iter().map(|d| d.as_object().unwrap().clone()).collect(),
        _ => return Err(format!("unknown collection {coll}")),
    };
    let vars = HashMap::new();
    if q["method"].as_str() == Some("find") {
        let mut out = Vec::new();
        for d in docs {
            if filter(&DocValue::Obj(d.clone()), &q["filter"], &vars)? {
                out.push(d);
            }
        }
        if let Some(s) = q.get("sort") {
            out = sort(out, s)?;
        }
        if let Some(l) = q.get("limit") {
            out.truncate(l.as_i64().unwrap() as usize);
        }
        if let Some(p) = q.get("projection") {
            if !p.as_object().unwrap().is_empty() {
                out = project(out, p, &vars)?;
            }
        }
        return Ok(OracleResult {
            docs: out,
            ordered: q.contains_key("sort"),
        });
    }
    let stages = q["pipeline"].as_array().unwrap();
    let ordered = stages.iter().any(|s| s.as_object().unwrap().contains_key("$sort"));
    Ok(OracleResult {
        docs: pipeline(db, docs, stages, &vars)?,
        ordered,
    })
}

fn pipeline(
    db: &DocValue,
    mut docs: Vec<Doc>,
    stages: &[DocValue],
    vars: &HashMap<String, DocValue>,
) -> Result<Vec<Doc>, String> {
    for stage in stages {
        let (op, body) = stage.as_object().unwrap().iter().next().unwrap();
        docs = match op.as_str() {
            "$match" => {
                let mut out = Vec::new();
                for d in docs {
                    if filter(&DocValue::Obj(d.clone()), body, vars)? {
                        out.push(d);
                    }
                }
                out
            }
            "$project" => project(docs, body, vars)?,
            "$sort" => sort(docs, body)?,
            "$limit" => docs.into_iter().take(body.as_i64().unwrap() as usize).collect(),
            "$skip" => docs.into_iter().skip(body.as_i64().unwrap() as usize).collect(),
            "$count" => {
                let mut d = Doc::new();
                d.insert(body.as_str().unwrap().to_string(), DocValue::Int(docs.len() as i64));
                vec![d]
            }
            "$unwind" => unwind(docs, body),
            "$group" => group(docs, body, vars)?,
            "$lookup" => lookup(db, docs, body, vars)?,
            other => return Err(format!("unsupported {other}")),
        };
    }
    Ok(docs)
}

// ---- paths ----

fn walk<'a>(v: &'a DocValue, segs: &[&str], out: &mut Vec<&'a DocValue>) {
    if segs.is_empty() {
        out.push(v);
        return;
    }
    match v {
        DocValue::Obj(m) => {
            if let Some(x) = m.get(segs[0]) {
                walk(x, &segs[1..], out);
            }
        }
        DocValue::Array(items) => {
            for item in items {
                if let DocValue::Obj(m) = item {
                    if let Some(x) = m.get(segs[0]) {
                        walk(x, &segs[1..], out);
                    }
                }
            }
        }
        _ => {}
    }
}

fn query_values<'a>(doc: &'a DocValue, path: &str) -> Vec<&'a DocValue> {
    let segs: Vec<&str> = path.split('.').collect();
    let mut out = Vec::new();
    walk(doc, &segs, &mut out);
    out
}

fn reference(v: &DocValue, segs: &[&str]) -> Option<DocValue> {
    if segs.is_empty() {
        return Some(v.clone());
    }
    match v {
        DocValue::Obj(m) => reference(m.get(segs[0])?, &segs[1..]),
        DocValue::Array(items) => {
            let mut out = Vec::new();
            for item in items {
                if matches!(item, DocValue::Obj(_) | DocValue::Array(_)) {
                    if let Some(x) = reference(item, segs) {
                        out.push(x);
                    }
                }
            }
            Some(DocValue::Array(out))
        }
        _ => None,
    }
}

fn eval(e: &DocValue, doc: &DocValue, vars: &HashMap<String, DocValue>) -> Result<Option<DocValue>, String> {
    match e {
        DocValue::Str(s) if s.starts_with("$$") => {
            let mut parts = s[2..].split('.');
            let name = parts.next().unwrap();
            let rest: Vec<&str> = parts.collect();
            let base = if name == "ROOT" || name == "CURRENT" {
                doc.clone()
            } else {
                vars.get(name).cloned().ok_or("undefined var")?
            };
            Ok(reference(&base, &rest))
        }
        DocValue::Str(s) if s.starts_with('$') => {
            let segs: Vec<&str> = s[1..].split('.').collect();
            Ok(reference(doc, &segs))
        }
        DocValue::Array(items) => {
            let mut out = Vec::new();
            for i in items {
                out.push(eval(i, doc, vars)?.unwrap_or(DocValue::Null));
            }
            Ok(Some(DocValue::Array(out)))
        }
        DocValue::Obj(m) if m.keys().any(|k| k.starts_with('$')) => {
            let (op, arg) = m.iter().next().unwrap();
            let args = arg.as_array().ok_or("args")?;
            match op.as_str() {
                "$eq" | "$ne" | "$gt" | "$gte" | "$lt" | "$lte" => {
                    let a = eval(&args[0], doc, vars)?;
                    let b = eval(&args[1], doc, vars)?;
                    let ord = match (&a, &b) {
                        (None, None) => Ordering::Equal,
                        (None, _) => Ordering::Less,
                        (_, None) => Ordering::Greater,
                        (Some(x), Some(y)) => cmp(x, y),
                    };
                    let r = match op.as_str() {
                        "$eq" => ord.is_eq(),
                        "$ne" => !ord.is_eq(),
                        "$gt" => ord.is_gt(),
                        "$gte" => ord.is_ge(),
                        "$lt" => ord.is_lt(),
                        _ => ord.is_le(),
                    };
                    Ok(Some(DocValue::Bool(r)))
                }
                other => Err(format!("unsupported {other}")),
            }
        }
        DocValue::Obj(m) => {
            let mut out = Doc::new();
            for (k, v) in m {
                if let Some(x) = eval(v, doc, vars)? {
                    out.insert(k.clone(), x);
                }
            }
            Ok(Some(DocValue::Obj(out)))
        }
        other => Ok(Some(other.clone())),
    }
}

fn cmp(a: &DocValue, b: &DocValue) -> Ordering {
    if a.semantic_eq(b) {
        Ordering::Equal
    } else {
        a.total_cmp(b)
    }
}

fn truthy(v: &Option<DocValue>) -> bool {
    match v {
        None | Some(DocValue::Null) | Some(DocValue::Bool(false)) => false,
        Some(x) if x.is_number() => x.as_f64() != Some(0.0),
        _ => true,
    }
}

// ---- filters ----

fn filter(doc: &DocValue, f: &DocValue, vars: &HashMap<String, DocValue>) -> Result<bool, String> {
    for (k, cond) in f.as_object().ok_or("filter")? {
        let ok = if k == "$and" {
            let mut all = true;
            for c in cond.as_array().unwrap() {
                all = filter(doc, c, vars)? && all;
            }
            all
        } else if k == "$or" {
            let mut any = false;
            for c in cond.as_array().unwrap() {
                any = filter(doc, c, vars)? || any;
            }
            any
        } else if k == "$nor" {
            let mut any = false;
            for c in cond.as_array().unwrap() {
                any = filter(doc, c, vars)? || any;
            }
            !any
        } else if k == "$expr" {
            truthy(&eval(cond, doc, vars)?)
        } else {
            let vals = query_values(doc, k);
            let is_ops = matches!(cond, DocValue::Obj(m) if !m.is_empty() && m.keys().all(|x| x.starts_with('$')));
            if is_ops {
                ops_match(&vals, cond.as_object().unwrap())?
            } else {
                eq_match(&vals, cond)
            }
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

fn flatten<'a>(vals: &[&'a DocValue]) -> Vec<&'a DocValue> {
    let mut out = Vec::new();
    for v in vals {
        out.push(*v);
        if let DocValue::Array(items) = v {
            for i in items {
                out.push(i);
            }
        }
    }
    out
}

fn eq_match(vals: &[&DocValue], target: &DocValue) -> bool {
    if vals.is_empty() {
        return *target == DocValue::Null;
    }
    flatten(vals).into_iter().any(|v| v.semantic_eq(target))
}

fn ops_match(vals: &[&DocValue], ops: &Doc) -> Result<bool, String> {
    for (op, arg) in ops {
        let ok = match op.as_str() {
            "$eq" => eq_match(vals, arg),
            "$ne" => !eq_match(vals, arg),
            "$gt" | "$gte" | "$lt" | "$lte" => {
                let mut hit = false;
                for v in flatten(vals) {
                    if v.type_rank() != arg.type_rank() {
                        continue;
                    }
                    let o = cmp(v, arg);
                    hit |= match op.as_str() {
                        "$gt" => o.is_gt(),
                        "$gte" => o.is_ge(),
                        "$lt" => o.is_lt(),
                        _ => o.is_le(),
                    };
                }
                hit
            }
            "$in" => arg.as_array().unwrap().iter().any(|t| eq_match(vals, t)),
            "$nin" => !arg.as_array().unwrap().iter().any(|t| eq_match(vals, t)),
            "$exists" => truthy(&Some(arg.clone())) == !vals.is_empty(),
            "$size" => vals.iter().any(|v| match v {
                DocValue::Array(a) => a.len() as i64 == arg.as_i64().unwrap(),
                _ => false,
            }),
            "$not" => !ops_match(vals, arg.as_object().unwrap())?,
            other => return Err(format!("unsupported {other}")),
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

// ---- stages ----

fn set(doc: &mut Doc, path: &str, v: DocValue) {
    let segs: Vec<&str> = path.split('.').collect();
    let mut cur = doc;
    for s in &segs[..segs.len() - 1] {
        let entry = cur.entry(s.to_string()).or_insert(DocValue::Obj(Doc::new()));
        if entry.as_object().is_none() {
            *entry = DocValue::Obj(Doc::new());
        }
        cur = match entry {
            DocValue::Obj(m) => m,
            _ => unreachable!(),
        };
    }
    cur.insert(segs[segs.len() - 1].to_string(), v);
}

fn get(doc: &Doc, path: &str) -> Option<DocValue> {
    let mut cur = DocValue::Obj(doc.clone());
    for s in path.split('.') {
        cur = cur.as_object()?.get(s)?.clone();
    }
    Some(cur)
}

fn drop_path(doc: &mut Doc, segs: &[&str]) {
    if segs.len() == 1 {
        doc.shift_remove(segs[0]);
    } else if let Some(DocValue::Obj(m)) = doc.get_mut(segs[0]) {
        drop_path(m, &segs[1..]);
    }
}

fn project(docs: Vec<Doc>, spec: &DocValue, vars: &HashMap<String, DocValue>) -> Result<Vec<Doc>, String> {
    let spec = spec.as_object().unwrap();
    let flag = |v: &DocValue| match v {
        DocValue::Bool(b) => Some(*b),
        x if x.is_number() => Some(x.as_f64() != Some(0.0)),
        _ => None,
    };
    let excludes = spec.iter().any(|(k, v)| k != "_id" && flag(v) == Some(false));
    let inclusive = spec.iter().any(|(k, v)| k != "_id" && flag(v) != Some(false))
        || (!excludes && spec.get("_id").and_then(flag) == Some(true));
    let mut out = Vec::new();
    for d in docs {
        if !inclusive {
            let mut d = d;
            for (k, _) in spec {
                drop_path(&mut d, &k.split('.').collect::<Vec<_>>());
            }
            out.push(d);
            continue;
        }
        let root = DocValue::Obj(d.clone());
        let mut p = Doc::new();
        if spec.get("_id").and_then(flag) != Some(false) {
            if let Some(id) = d.get("_id") {
                p.insert("_id".into(), id.clone());
            }
        }
        for (k, v) in spec {
            if k == "_id" && flag(v).is_some() {
                continue;
            }
            match flag(v) {
                Some(true) => {
                    if let Some(x) = get(&d, k) {
                        set(&mut p, k, x);
                    }
                }
                Some(false) => {}
                None => {
                    if let Some(x) = eval(v, &root, vars)? {
                        set(&mut p, k, x);
                    }
                }
            }
        }
        out.push(p);
    }
    Ok(out)
}

fn sort(docs: Vec<Doc>, spec: &DocValue) -> Result<Vec<Doc>, String> {
    let keys: Vec<(String, i64)> = spec
        .as_object()
        .unwrap()
        .iter()
        .map(|(k, v)| (k.clone(), v.as_i64().unwrap()))
        .collect();
    // insertion sort: stable by construction
    let mut out: Vec<Doc> = Vec::new();
    for d in docs {
        let dv = DocValue::Obj(d.clone());
        let mut pos = out.len();
        while pos > 0 {
            let prev = DocValue::Obj(out[pos - 1].clone());
            let mut ord = Ordering::Equal;
            for (k, dir) in &keys {
                let segs: Vec<&str> = k.split('.').collect();
                let a = reference(&prev, &segs).unwrap_or(DocValue::Null);
                let b = reference(&dv, &segs).unwrap_or(DocValue::Null);
                let o = if *dir < 0 { cmp(&a, &b).reverse() } else { cmp(&a, &b) };
                if o != Ordering::Equal {
                    ord = o;
                    break;
                }
            }
            if ord == Ordering::Greater {
                pos -= 1;
            } else {
                break;
            }
        }
        out.insert(pos, d);
    }
    Ok(out)
}

fn unwind(docs: Vec<Doc>, body: &DocValue) -> Vec<Doc> {
    let (path, keep) = match body {
        DocValue::Str(s) => (s[1..].to_string(), false),
        DocValue::Obj(m) => (
            m["path"].as_str().unwrap()[1..].to_string(),
            m.get("preserveNullAndEmptyArrays") == Some(&DocValue::Bool(true)),
        ),
        _ => panic!("bad unwind"),
    };
    let mut out = Vec::new();
    for d in docs {
        match get(&d, &path) {
            Some(DocValue::Array(items)) if !items.is_empty() => {
                for i in items {
                    let mut c = d.clone();
                    set(&mut c, &path, i);
                    out.push(c);
                }
            }
            None | Some(DocValue::Null) | Some(DocValue::Array(_)) => {
                if keep {
                    out.push(d);
                }
            }
            Some(_) => out.push(d),
        }
    }
    out
}

fn group(docs: Vec<Doc>, body: &DocValue, vars: &HashMap<String, DocValue>) -> Result<Vec<Doc>, String> {
    let spec = body.as_object().unwrap();
    // list of (key, member docs) in order of first appearance, found by linear scan
    let mut groups: Vec<(DocValue, Vec<DocValue>)> = Vec::new();
    for d in docs {
        let root = DocValue::Obj(d);
        let key = eval(&spec["_id"], &root, vars)?.unwrap_or(DocValue::Null);
        match groups.iter_mut().find(|(k, _)| k.semantic_eq(&key)) {
            Some((_, members)) => members.push(root),
            None => groups.push((key, vec![root])),
        }
    }
    let mut out = Vec::new();
    for (key, members) in groups {
        let mut g = Doc::new();
        g.insert("_id".into(), key);
        for (name, acc) in spec {
            if name == "_id" {
                continue;
            }
            let (op, arg) = acc.as_object().unwrap().iter().next().unwrap();
            let mut vals = Vec::new();
            for m in &members {
                vals.push(eval(arg, m, vars)?);
            }
            let v = match op.as_str() {
                "$sum" => {
                    let nums: Vec<&DocValue> = vals.iter().flatten().filter(|v| v.is_number()).collect();
                    if nums.iter().any(|v| matches!(v, DocValue::Float(_))) {
                        DocValue::Float(nums.iter().map(|v| v.as_f64().unwrap()).sum())
                    } else {
                        DocValue::Int(nums.iter().map(|v| v.as_i64().unwrap()).sum())
                    }
                }
                "$avg" => {
                    let nums: Vec<f64> = vals
                        .iter()
                        .flatten()
                        .filter(|v| v.is_number())
                        .map(|v| v.as_f64().unwrap())
                        .collect();
                    if nums.is_empty() {
                        DocValue::Null
                    } else {
                        DocValue::Float(nums.iter().sum::<f64>() / nums.len() as f64)
                    }
                }
                "$min" | "$max" => {
                    let mut best: Option<DocValue> = None;
                    for v in vals.into_iter().flatten().filter(|v| !v.is_null()) {
                        let better = match &best {
                            None => true,
                            Some(b) => {
                                if op == "$min" {
                                    cmp(&v, b).is_lt()
                                } else {
                                    cmp(&v, b).is_gt()
                                }
                            }
                        };
                        if better {
                            best = Some(v);
                        }
                    }
                    best.unwrap_or(DocValue::Null)
                }
                "$push" => DocValue::Array(vals.into_iter().flatten().collect()),
                "$addToSet" => {
                    let mut set: Vec<DocValue> = Vec::new();
                    for v in vals.into_iter().flatten() {
                        if !set.iter().any(|s| s.semantic_eq(&v)) {
                            set.push(v);
                        }
                    }
                    DocValue::Array(set)
                }
                "$first" => vals.into_iter().next().flatten().unwrap_or(DocValue::Null),
                "$last" => vals.into_iter().last().flatten().unwrap_or(DocValue::Null),
                "$count" => DocValue::Int(members.len() as i64),
                other => return Err(format!("unsupported {other}")),
            };
            g.insert(name.clone(), v);
        }
        out.push(g);
    }
    Ok(out)
}

fn lookup(
    db: &DocValue,
    docs: Vec<Doc>,
    body: &DocValue,
    vars: &HashMap<String, DocValue>,
) -> Result<Vec<Doc>, String> {
    let spec = body.as_object().unwrap();
    let from = spec["from"].as_str().unwrap();
    let foreign: Vec<Doc> = match db.as_object().unwrap().get(from) {
        Some(DocValue::Array(items)) => items.iter().map(|d| d.as_object().unwrap().clone()).collect(),
        _ => Vec::new(),
    };
    let mut out = Vec::new();
    for mut d in docs {
        let root = DocValue::Obj(d.clone());
        let mut joined = Vec::new();
        if let (Some(lf), Some(ff)) = (spec.get("localField"), spec.get("foreignField")) {
            let mut left: Vec<DocValue> = flatten(&query_values(&root, lf.as_str().unwrap()))
                .into_iter()
                .cloned()
                .collect();
            if left.is_empty() {
                left.push(DocValue::Null);
            }
            for f in &foreign {
                let fv = DocValue::Obj(f.clone());
                let mut right: Vec<DocValue> = flatten(&query_values(&fv, ff.as_str().unwrap()))
                    .into_iter()
                    .cloned()
                    .collect();
                if right.is_empty() {
                    right.push(DocValue::Null);
                }
                if left.iter().any(|l| right.iter().any(|r| l.semantic_eq(r))) {
                    joined.push(f.clone());
                }
            }
        } else {
            joined = foreign.clone();
        }
        if let Some(DocValue::Array(p)) = spec.get("pipeline") {
            let mut scope = vars.clone();
            if let Some(DocValue::Obj(lets)) = spec.get("let") {
                for (k, e) in lets {
                    scope.insert(k.clone(), eval(e, &root, vars)?.unwrap_or(DocValue::Null));
                }
            }
            joined = pipeline(db, joined, p, &scope)?;
        }
        set(
            &mut d,
            spec["as"].as_str().unwrap(),
            DocValue::Array(joined.into_iter().map(DocValue::Obj).collect()),
        );
        out.push(d);
    }
    Ok(out)
}
