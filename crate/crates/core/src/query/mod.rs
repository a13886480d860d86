//! MongoDB shell-style query parsing, canonical rendering and static analysis.

mod analysis;
mod ast;
mod loose;
mod normalize;
mod parse;

pub use analysis::{
    detect_special_ops, detect_special_ops_default, extract_field_profile, extract_stage_keywords, FieldProfile,
    DEFAULT_BANNED_OPS,
};
pub use ast::{FindClauses, Method, QueryAst, QueryBody, Stage, StageOp};
pub use loose::loose_json_decode;
pub use normalize::normalize_renames;
pub use parse::parse_query;
pub(crate) use parse::stage_from_value;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error("malformed fragment at byte {position}: {message}")]
    MalformedFragment { position: usize, message: String },
    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("unknown method `{0}` (expected find or aggregate)")]
    UnknownMethod(String),
    #[error("normalization conflict: {0}")]
    NormalizationConflict(String),
}

/// Deterministic single-line rendering with double-quoted keys and strings.
///
/// `parse_query(&serialize_canonical(q))` is structurally equal to `q`.
pub fn serialize_canonical(ast: &QueryAst) -> String {
    let mut out = format!("db.{}.", ast.collection);
    match &ast.body {
        QueryBody::Find(c) => {
            out.push_str("find(");
            c.filter.write_json(&mut out);
            if let Some(p) = &c.projection {
                out.push(',');
                p.write_json(&mut out);
            }
            out.push(')');
            if let Some(s) = &c.sort {
                out.push_str(".sort(");
                s.write_json(&mut out);
                out.push(')');
            }
            if let Some(l) = c.limit {
                out.push_str(&format!(".limit({l})"));
            }
        }
        QueryBody::Aggregate(stages) => {
            out.push_str("aggregate([");
            for (i, stage) in stages.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                stage.to_value().write_json(&mut out);
            }
            out.push_str("])");
        }
    }
    out.push(';');
    out
}
