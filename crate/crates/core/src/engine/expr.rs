//! Aggregation expressions: field references, `$$variables`, comparisons and
//! boolean combinators.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::value::{DocValue, Document};

use super::path::expr_path;
use super::EngineError;

pub type Vars = HashMap<String, DocValue>;

/// Evaluate `expr` against `current`; `None` means the value is missing.
pub fn eval(expr: &DocValue, current: &DocValue, vars: &Vars) -> Result<Option<DocValue>, EngineError> {
    match expr {
        DocValue::Str(s) => {
            if let Some(var) = s.strip_prefix("$$") {
                let (name, rest) = match var.split_once('.') {
                    Some((n, r)) => (n, Some(r)),
                    None => (var, None),
                };
                let base = match name {
                    "ROOT" | "CURRENT" => current,
                    _ => vars
                        .get(name)
                        .ok_or_else(|| EngineError::InvalidArgument(format!("undefined variable `$${name}`")))?,
                };
                Ok(match rest {
                    None => Some(base.clone()),
                    Some(path) => expr_path(base, path),
                })
            } else if let Some(path) = s.strip_prefix('$') {
                if path.is_empty() {
                    return Err(EngineError::InvalidArgument("empty field reference `$`".into()));
                }
                Ok(expr_path(current, path))
            } else {
                Ok(Some(expr.clone()))
            }
        }
        DocValue::Array(items) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                out.push(eval(item, current, vars)?.unwrap_or(DocValue::Null));
            }
            Ok(Some(DocValue::Array(out)))
        }
        DocValue::Obj(map) => {
            let operators = map.keys().filter(|k| k.starts_with('$')).count();
            if operators == 0 {
                let mut out = Document::new();
                for (k, v) in map {
                    if let Some(value) = eval(v, current, vars)? {
                        out.insert(k.clone(), value);
                    }
                }
                return Ok(Some(DocValue::Obj(out)));
            }
            if map.len() != 1 {
                return Err(EngineError::InvalidArgument(
                    "an expression object must hold exactly one operator".into(),
                ));
            }
            let (op, arg) = map.iter().next().expect("one entry");
            operator(op, arg, current, vars)
        }
        other => Ok(Some(other.clone())),
    }
}

fn operator(op: &str, arg: &DocValue, current: &DocValue, vars: &Vars) -> Result<Option<DocValue>, EngineError> {
    match op {
        "$literal" => Ok(Some(arg.clone())),
        "$eq" | "$ne" | "$gt" | "$gte" | "$lt" | "$lte" => {
            let args = arg
                .as_array()
                .filter(|a| a.len() == 2)
                .ok_or_else(|| EngineError::InvalidArgument(format!("{op} expects two arguments")))?;
            let left = eval(&args[0], current, vars)?;
            let right = eval(&args[1], current, vars)?;
            let ord = cmp_optional(&left, &right);
            let result = match op {
                "$eq" => ord == Ordering::Equal,
                "$ne" => ord != Ordering::Equal,
                "$gt" => ord == Ordering::Greater,
                "$gte" => ord != Ordering::Less,
                "$lt" => ord == Ordering::Less,
                _ => ord != Ordering::Greater,
            };
            Ok(Some(DocValue::Bool(result)))
        }
        "$and" | "$or" => {
            let args = arg
                .as_array()
                .ok_or_else(|| EngineError::InvalidArgument(format!("{op} expects an array")))?;
            let mut acc = op == "$and";
            for a in args {
                let t = truthy(&eval(a, current, vars)?);
                if op == "$and" {
                    acc &= t;
                } else {
                    acc |= t;
                }
            }
            Ok(Some(DocValue::Bool(acc)))
        }
        "$not" => {
            let inner = match arg {
                DocValue::Array(a) if a.len() == 1 => &a[0],
                DocValue::Array(_) => return Err(EngineError::InvalidArgument("$not expects one argument".into())),
                other => other,
            };
            Ok(Some(DocValue::Bool(!truthy(&eval(inner, current, vars)?))))
        }
        other => Err(EngineError::UnsupportedOperator(other.to_string())),
    }
}

/// Missing sorts below every present value, including null.
pub fn cmp_optional(a: &Option<DocValue>, b: &Option<DocValue>) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(x), Some(y)) => {
            if x.semantic_eq(y) {
                Ordering::Equal
            } else {
                x.total_cmp(y)
            }
        }
    }
}

pub fn truthy(value: &Option<DocValue>) -> bool {
    match value {
        None | Some(DocValue::Null) | Some(DocValue::Bool(false)) => false,
        Some(DocValue::Int(0)) => false,
        Some(DocValue::Float(f)) => *f != 0.0,
        Some(_) => true,
    }
}
