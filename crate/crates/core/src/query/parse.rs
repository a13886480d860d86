use crate::value::DocValue;

use super::ast::{FindClauses, QueryAst, Stage, StageOp};
use super::loose::LooseReader;
use super::QueryError;

fn parse_err(position: usize, message: impl Into<String>) -> QueryError {
    QueryError::Parse {
        position,
        message: message.into(),
    }
}

// Decoder errors surface as parse errors at the query level.
fn lift(err: QueryError) -> QueryError {
    match err {
        QueryError::MalformedFragment { position, message } => QueryError::Parse { position, message },
        other => other,
    }
}

/// Parse `db.<collection>.find(...)` or `db.<collection>.aggregate([...])`.
pub fn parse_query(text: &str) -> Result<QueryAst, QueryError> {
    let mut r = LooseReader::new(text);
    r.skip_ws().map_err(lift)?;

    let at = r.position();
    if r.identifier().as_deref() != Some("db") {
        return Err(parse_err(at, "expected `db.`"));
    }
    expect(&mut r, b'.')?;
    let at = r.position();
    let collection = r
        .identifier()
        .ok_or_else(|| parse_err(at, "expected a collection name"))?;
    expect(&mut r, b'.')?;
    let at = r.position();
    let method = r.identifier().ok_or_else(|| parse_err(at, "expected a method name"))?;
    if method != "find" && method != "aggregate" {
        return Err(QueryError::UnknownMethod(method));
    }
    expect(&mut r, b'(')?;
    let args_at = r.position();
    let args = call_args(&mut r)?;

    let ast = if method == "aggregate" {
        let [pipeline] = <[DocValue; 1]>::try_from(args)
            .map_err(|_| parse_err(args_at, "aggregate expects exactly one pipeline array"))?;
        let DocValue::Array(items) = pipeline else {
            return Err(parse_err(args_at, "aggregate expects a pipeline array"));
        };
        let stages = items
            .into_iter()
            .map(|item| stage_from_value(item).map_err(|m| parse_err(args_at, m)))
            .collect::<Result<Vec<_>, _>>()?;
        QueryAst::aggregate(collection, stages)
    } else {
        if args.len() > 2 {
            return Err(parse_err(args_at, "find takes at most a filter and a projection"));
        }
        let mut args = args.into_iter();
        let mut clauses = FindClauses::default();
        if let Some(filter) = args.next() {
            if !matches!(filter, DocValue::Obj(_)) {
                return Err(parse_err(args_at, "find filter must be an object"));
            }
            clauses.filter = filter;
        }
        if let Some(projection) = args.next() {
            if !matches!(projection, DocValue::Obj(_)) {
                return Err(parse_err(args_at, "find projection must be an object"));
            }
            clauses.projection = Some(projection);
        }
        QueryAst::find(collection, clauses)
    };

    let mut ast = ast;
    loop {
        r.skip_ws().map_err(lift)?;
        if r.peek() != Some(b'.') {
            break;
        }
        let dot = r.position();
        r.eat(b'.').map_err(lift)?;
        r.skip_ws().map_err(lift)?;
        let name = r.identifier().unwrap_or_default();
        let Some(clauses) = (match &mut ast.body {
            super::QueryBody::Find(c) => Some(c),
            super::QueryBody::Aggregate(_) => None,
        }) else {
            return Err(parse_err(
                dot,
                format!("unsupported chained call `.{name}()` after aggregate"),
            ));
        };
        expect(&mut r, b'(')?;
        let at = r.position();
        let mut args = call_args(&mut r)?;
        if args.len() != 1 {
            return Err(parse_err(at, format!("`.{name}()` takes exactly one argument")));
        }
        let arg = args.remove(0);
        match name.as_str() {
            "sort" => {
                if !matches!(arg, DocValue::Obj(_)) {
                    return Err(parse_err(at, "sort specification must be an object"));
                }
                clauses.sort = Some(arg);
            }
            "limit" => match arg.as_i64() {
                Some(n) if n >= 0 => clauses.limit = Some(n),
                _ => return Err(parse_err(at, "limit must be a non-negative integer")),
            },
            _ => return Err(parse_err(dot, format!("unsupported cursor modifier `.{name}()`"))),
        }
    }

    r.eat(b';').map_err(lift)?;
    r.skip_ws().map_err(lift)?;
    if !r.at_end() {
        return Err(parse_err(r.position(), "unexpected trailing characters"));
    }
    Ok(ast)
}

fn expect(r: &mut LooseReader<'_>, byte: u8) -> Result<(), QueryError> {
    if r.eat(byte).map_err(lift)? {
        Ok(())
    } else {
        Err(parse_err(r.position(), format!("expected `{}`", byte as char)))
    }
}

/// Comma-separated values up to the closing `)` (already past the `(`).
fn call_args(r: &mut LooseReader<'_>) -> Result<Vec<DocValue>, QueryError> {
    let mut args = Vec::new();
    loop {
        if r.eat(b')').map_err(lift)? {
            return Ok(args);
        }
        args.push(r.value().map_err(lift)?);
        r.skip_ws().map_err(lift)?;
        match r.peek() {
            Some(b',') => {
                r.eat(b',').map_err(lift)?;
            }
            Some(b')') => {}
            _ => return Err(parse_err(r.position(), "expected `,` or `)`")),
        }
    }
}

pub(crate) fn stage_from_value(value: DocValue) -> Result<Stage, String> {
    let DocValue::Obj(map) = value else {
        return Err("pipeline stages must be objects".into());
    };
    if map.len() != 1 {
        return Err(format!(
            "a stage must have exactly one operator key, found {}",
            map.len()
        ));
    }
    let (key, body) = map.into_iter().next().expect("one entry");
    if !key.starts_with('$') {
        return Err(format!("stage key `{key}` must start with `$`"));
    }
    Ok(Stage::new(StageOp::from_key(&key), body))
}
