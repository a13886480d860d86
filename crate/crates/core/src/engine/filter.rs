//! Query-filter matching (`$match` bodies and find filters).

use std::cmp::Ordering;

use regex::RegexBuilder;

use crate::value::{DocValue, Document};

use super::expr::{self, Vars};
use super::path::path_values;
use super::EngineError;

pub fn matches(doc: &DocValue, filter: &DocValue, vars: &Vars) -> Result<bool, EngineError> {
    let DocValue::Obj(conditions) = filter else {
        return Err(EngineError::InvalidArgument("a filter must be an object".into()));
    };
    for (key, cond) in conditions {
        let ok = match key.as_str() {
            "$and" | "$or" | "$nor" => {
                let clauses = cond
                    .as_array()
                    .filter(|c| !c.is_empty())
                    .ok_or_else(|| EngineError::InvalidArgument(format!("{key} expects a non-empty array")))?;
                let mut results = Vec::with_capacity(clauses.len());
                for clause in clauses {
                    results.push(matches(doc, clause, vars)?);
                }
                match key.as_str() {
                    "$and" => results.iter().all(|r| *r),
                    "$or" => results.iter().any(|r| *r),
                    _ => !results.iter().any(|r| *r),
                }
            }
            "$expr" => expr::truthy(&expr::eval(cond, doc, vars)?),
            k if k.starts_with('$') => return Err(EngineError::UnsupportedOperator(k.to_string())),
            path => field_matches(&path_values(doc, path), cond)?,
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

fn is_operator_object(cond: &DocValue) -> Option<&Document> {
    cond.as_object()
        .filter(|m| !m.is_empty() && m.keys().all(|k| k.starts_with('$')))
}

fn field_matches(candidates: &[&DocValue], cond: &DocValue) -> Result<bool, EngineError> {
    match is_operator_object(cond) {
        Some(ops) => operators_match(candidates, ops),
        None => Ok(equals(candidates, cond)),
    }
}

/// Candidates plus the elements of any array candidate.
fn expanded<'a>(candidates: &[&'a DocValue]) -> Vec<&'a DocValue> {
    let mut out = Vec::with_capacity(candidates.len());
    for c in candidates {
        out.push(*c);
        if let DocValue::Array(items) = c {
            out.extend(items.iter());
        }
    }
    out
}

fn equals(candidates: &[&DocValue], target: &DocValue) -> bool {
    if candidates.is_empty() {
        return target.is_null();
    }
    expanded(candidates).iter().any(|c| c.semantic_eq(target))
}

fn operators_match(candidates: &[&DocValue], ops: &Document) -> Result<bool, EngineError> {
    for (op, arg) in ops {
        let ok = match op.as_str() {
            "$eq" => equals(candidates, arg),
            "$ne" => !equals(candidates, arg),
            "$gt" | "$gte" | "$lt" | "$lte" => expanded(candidates).iter().any(|c| {
                if c.type_rank() != arg.type_rank() {
                    return false;
                }
                let ord = if c.semantic_eq(arg) {
                    Ordering::Equal
                } else {
                    c.total_cmp(arg)
                };
                match op.as_str() {
                    "$gt" => ord == Ordering::Greater,
                    "$gte" => ord != Ordering::Less,
                    "$lt" => ord == Ordering::Less,
                    _ => ord != Ordering::Greater,
                }
            }),
            "$in" | "$nin" => {
                let list = arg
                    .as_array()
                    .ok_or_else(|| EngineError::InvalidArgument(format!("{op} expects an array")))?;
                let hit = list.iter().any(|x| equals(candidates, x));
                if op == "$in" {
                    hit
                } else {
                    !hit
                }
            }
            "$exists" => expr::truthy(&Some(arg.clone())) == !candidates.is_empty(),
            "$size" => {
                let n = arg
                    .as_i64()
                    .ok_or_else(|| EngineError::InvalidArgument("$size expects an integer".into()))?;
                candidates
                    .iter()
                    .any(|c| matches!(c, DocValue::Array(items) if items.len() as i64 == n))
            }
            "$regex" => {
                let pattern = arg
                    .as_str()
                    .ok_or_else(|| EngineError::InvalidArgument("$regex expects a string".into()))?;
                let options = match ops.get("$options") {
                    None => "",
                    Some(DocValue::Str(o)) => o.as_str(),
                    Some(_) => return Err(EngineError::InvalidArgument("$options expects a string".into())),
                };
                if options.chars().any(|c| c != 'i') {
                    return Err(EngineError::UnsupportedOperator(format!("$options \"{options}\"")));
                }
                let re = RegexBuilder::new(pattern)
                    .case_insensitive(options.contains('i'))
                    .build()
                    .map_err(|e| EngineError::InvalidArgument(format!("bad $regex: {e}")))?;
                expanded(candidates)
                    .iter()
                    .any(|c| matches!(c, DocValue::Str(s) if re.is_match(s)))
            }
            "$options" => {
                if !ops.contains_key("$regex") {
                    return Err(EngineError::InvalidArgument("$options without $regex".into()));
                }
                true
            }
            "$not" => {
                let inner = is_operator_object(arg)
                    .ok_or_else(|| EngineError::InvalidArgument("$not expects an operator object".into()))?;
                !operators_match(candidates, inner)?
            }
            other => return Err(EngineError::UnsupportedOperator(other.to_string())),
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}
