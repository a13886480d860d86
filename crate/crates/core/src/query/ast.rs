use std::fmt;

use serde::{Deserialize, Serialize};

use crate::value::DocValue;

/// Query method on a collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Find,
    Aggregate,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Find => "find",
            Method::Aggregate => "aggregate",
        })
    }
}

/// Stage operator of an aggregation pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StageOp {
    Match,
    Group,
    Project,
    Unwind,
    Sort,
    Limit,
    Skip,
    Lookup,
    Count,
    /// Any other `$`-prefixed operator, kept verbatim (including the `$`).
    Other(String),
}

impl StageOp {
    pub fn from_key(key: &str) -> Self {
        match key {
            "$match" => StageOp::Match,
            "$group" => StageOp::Group,
            "$project" => StageOp::Project,
            "$unwind" => StageOp::Unwind,
            "$sort" => StageOp::Sort,
            "$limit" => StageOp::Limit,
            "$skip" => StageOp::Skip,
            "$lookup" => StageOp::Lookup,
            "$count" => StageOp::Count,
            other => StageOp::Other(other.to_string()),
        }
    }

    /// The `$`-prefixed key used in body position.
    pub fn key(&self) -> &str {
        match self {
            StageOp::Match => "$match",
            StageOp::Group => "$group",
            StageOp::Project => "$project",
            StageOp::Unwind => "$unwind",
            StageOp::Sort => "$sort",
            StageOp::Limit => "$limit",
            StageOp::Skip => "$skip",
            StageOp::Lookup => "$lookup",
            StageOp::Count => "$count",
            StageOp::Other(name) => name,
        }
    }
}

impl fmt::Display for StageOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// One pipeline stage: `{<op>: <body>}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub op: StageOp,
    pub body: DocValue,
}

impl Stage {
    pub fn new(op: StageOp, body: DocValue) -> Self {
        Self { op, body }
    }

    /// The stage as the single-key object it was written as.
    pub fn to_value(&self) -> DocValue {
        let mut doc = crate::value::Document::new();
        doc.insert(self.op.key().to_string(), self.body.clone());
        DocValue::Obj(doc)
    }
}

/// Arguments of a `find` call plus folded `.sort()` / `.limit()` modifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct FindClauses {
    pub filter: DocValue,
    pub projection: Option<DocValue>,
    pub sort: Option<DocValue>,
    pub limit: Option<i64>,
}

impl Default for FindClauses {
    fn default() -> Self {
        Self {
            filter: DocValue::empty_object(),
            projection: None,
            sort: None,
            limit: None,
        }
    }
}

/// Body of a query; the variant determines the method.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum QueryBody {
    Find(FindClauses),
    Aggregate(Vec<Stage>),
}

/// A parsed `db.<collection>.<method>(...)` query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryAst {
    pub collection: String,
    pub body: QueryBody,
}

impl QueryAst {
    pub fn find(collection: impl Into<String>, clauses: FindClauses) -> Self {
        Self {
            collection: collection.into(),
            body: QueryBody::Find(clauses),
        }
    }

    pub fn aggregate(collection: impl Into<String>, stages: Vec<Stage>) -> Self {
        Self {
            collection: collection.into(),
            body: QueryBody::Aggregate(stages),
        }
    }

    pub fn method(&self) -> Method {
        match self.body {
            QueryBody::Find(_) => Method::Find,
            QueryBody::Aggregate(_) => Method::Aggregate,
        }
    }

    pub fn stages(&self) -> &[Stage] {
        match &self.body {
            QueryBody::Aggregate(stages) => stages,
            QueryBody::Find(_) => &[],
        }
    }

    pub fn find_clauses(&self) -> Option<&FindClauses> {
        match &self.body {
            QueryBody::Find(clauses) => Some(clauses),
            QueryBody::Aggregate(_) => None,
        }
    }

    /// Whether the query imposes a result order.
    pub fn has_sort(&self) -> bool {
        match &self.body {
            QueryBody::Find(clauses) => clauses.sort.is_some(),
            QueryBody::Aggregate(stages) => stages.iter().any(|s| s.op == StageOp::Sort),
        }
    }

    /// Strict JSON export with operator keys verbatim.
    pub fn to_json(&self) -> serde_json::Value {
        let mut out = serde_json::Map::new();
        out.insert("collection".into(), self.collection.clone().into());
        out.insert("method".into(), self.method().to_string().into());
        match &self.body {
            QueryBody::Find(c) => {
                out.insert("filter".into(), c.filter.to_json());
                if let Some(p) = &c.projection {
                    out.insert("projection".into(), p.to_json());
                }
                if let Some(s) = &c.sort {
                    out.insert("sort".into(), s.to_json());
                }
                if let Some(l) = c.limit {
                    out.insert("limit".into(), l.into());
                }
            }
            QueryBody::Aggregate(stages) => {
                out.insert(
                    "pipeline".into(),
                    serde_json::Value::Array(stages.iter().map(|s| s.to_value().to_json()).collect()),
                );
            }
        }
        serde_json::Value::Object(out)
    }

    /// Order-insensitive (object keys) and number-unifying comparison.
    pub fn semantic_eq(&self, other: &QueryAst) -> bool {
        if self.collection != other.collection {
            return false;
        }
        match (&self.body, &other.body) {
            (QueryBody::Find(a), QueryBody::Find(b)) => {
                let proj = |c: &FindClauses| match &c.projection {
                    Some(DocValue::Obj(o)) if o.is_empty() => None,
                    other => other.clone(),
                };
                let opt_eq = |x: &Option<DocValue>, y: &Option<DocValue>| match (x, y) {
                    (None, None) => true,
                    (Some(x), Some(y)) => x.semantic_eq(y),
                    _ => false,
                };
                a.filter.semantic_eq(&b.filter)
                    && opt_eq(&proj(a), &proj(b))
                    && opt_eq(&a.sort, &b.sort)
                    && a.limit == b.limit
            }
            (QueryBody::Aggregate(a), QueryBody::Aggregate(b)) => {
                a.len() == b.len()
                    && a.iter()
                        .zip(b)
                        .all(|(x, y)| x.op == y.op && x.body.semantic_eq(&y.body))
            }
            _ => false,
        }
    }
}

impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::serialize_canonical(self))
    }
}
