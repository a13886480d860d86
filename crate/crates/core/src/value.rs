//! Document value model shared by the parser, the engine and the metrics.

use std::cmp::Ordering;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Insertion-ordered object body.
pub type Document = IndexMap<String, DocValue>;

/// Largest integer magnitude kept integral when decoding numbers (2^53).
pub const MAX_SAFE_INT: i64 = 9_007_199_254_740_992;

/// A JSON-like value. Object keys keep their construction order.
///
/// The derived `PartialEq` is structural (key order matters, `Int(1) != Float(1.0)`);
/// use [`DocValue::semantic_eq`] for the comparison the engine and metrics use.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum DocValue {
    #[default]
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Array(Vec<DocValue>),
    Obj(Document),
}

impl DocValue {
    pub fn empty_object() -> Self {
        DocValue::Obj(Document::new())
    }

    pub fn as_object(&self) -> Option<&Document> {
        match self {
            DocValue::Obj(o) => Some(o),
            _ => None,
        }
    }

    pub fn as_object_mut(&mut self) -> Option<&mut Document> {
        match self {
            DocValue::Obj(o) => Some(o),
            _ => None,
        }
    }

    pub fn as_array(&self) -> Option<&[DocValue]> {
        match self {
            DocValue::Array(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            DocValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            DocValue::Int(i) => Some(*i as f64),
            DocValue::Float(f) => Some(*f),
            _ => None,
        }
    }

    /// Integral value of a number, accepting floats with no fractional part.
    pub fn as_i64(&self) -> Option<i64> {
        match self {
            DocValue::Int(i) => Some(*i),
            DocValue::Float(f) if f.fract() == 0.0 && f.abs() <= MAX_SAFE_INT as f64 => Some(*f as i64),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, DocValue::Null)
    }

    pub fn is_number(&self) -> bool {
        matches!(self, DocValue::Int(_) | DocValue::Float(_))
    }

    /// Build a number from an `f64`, keeping it integral when it is exactly representable.
    pub fn number(f: f64) -> Self {
        if f.fract() == 0.0 && f.abs() <= MAX_SAFE_INT as f64 {
            DocValue::Int(f as i64)
        } else {
            DocValue::Float(f)
        }
    }

    /// Position in the cross-type sort order:
    /// null < numbers < strings < objects < arrays < bool.
    pub fn type_rank(&self) -> u8 {
        match self {
            DocValue::Null => 0,
            DocValue::Int(_) | DocValue::Float(_) => 1,
            DocValue::Str(_) => 2,
            DocValue::Obj(_) => 3,
            DocValue::Array(_) => 4,
            DocValue::Bool(_) => 5,
        }
    }

    /// Equality with numeric unification and order-insensitive object keys.
    pub fn semantic_eq(&self, other: &DocValue) -> bool {
        match (self, other) {
            (DocValue::Null, DocValue::Null) => true,
            (DocValue::Bool(a), DocValue::Bool(b)) => a == b,
            (DocValue::Str(a), DocValue::Str(b)) => a == b,
            (DocValue::Int(a), DocValue::Int(b)) => a == b,
            (a, b) if a.is_number() && b.is_number() => a.as_f64() == b.as_f64(),
            (DocValue::Array(a), DocValue::Array(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.semantic_eq(y))
            }
            (DocValue::Obj(a), DocValue::Obj(b)) => {
                a.len() == b.len() && a.iter().all(|(k, v)| b.get(k).is_some_and(|w| v.semantic_eq(w)))
            }
            _ => false,
        }
    }

    /// Total order used by `$sort`, `$min` and `$max`.
    pub fn total_cmp(&self, other: &DocValue) -> Ordering {
        let rank = self.type_rank().cmp(&other.type_rank());
        if rank != Ordering::Equal {
            return rank;
        }
        match (self, other) {
            (DocValue::Int(a), DocValue::Int(b)) => a.cmp(b),
            (a, b) if a.is_number() => {
                let (x, y) = (a.as_f64().unwrap_or(0.0), b.as_f64().unwrap_or(0.0));
                x.total_cmp(&y)
            }
            (DocValue::Str(a), DocValue::Str(b)) => a.cmp(b),
            (DocValue::Bool(a), DocValue::Bool(b)) => a.cmp(b),
            (DocValue::Array(a), DocValue::Array(b)) => {
                for (x, y) in a.iter().zip(b) {
                    let o = x.total_cmp(y);
                    if o != Ordering::Equal {
                        return o;
                    }
                }
                a.len().cmp(&b.len())
            }
            (DocValue::Obj(a), DocValue::Obj(b)) => {
                for ((ka, va), (kb, vb)) in a.iter().zip(b) {
                    let o = ka.cmp(kb).then_with(|| va.total_cmp(vb));
                    if o != Ordering::Equal {
                        return o;
                    }
                }
                a.len().cmp(&b.len())
            }
            _ => Ordering::Equal,
        }
    }

    /// A string key that is identical for semantically equal values.
    ///
    /// Numbers are rendered through `f64`, object keys are sorted.
    pub fn canonical_key(&self) -> String {
        let mut out = String::new();
        self.write_canonical_key(&mut out);
        out
    }

    fn write_canonical_key(&self, out: &mut String) {
        match self {
            DocValue::Null => out.push('N'),
            DocValue::Bool(b) => out.push_str(if *b { "T" } else { "F" }),
            DocValue::Int(_) | DocValue::Float(_) => {
                let f = self.as_f64().unwrap_or(0.0);
                // -0.0 and 0.0 are the same number
                let f = if f == 0.0 { 0.0 } else { f };
                out.push_str(&format!("n{f:?}"));
            }
            DocValue::Str(s) => {
                out.push('s');
                out.push_str(&serde_json::to_string(s).unwrap_or_default());
            }
            DocValue::Array(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    item.write_canonical_key(out);
                }
                out.push(']');
            }
            DocValue::Obj(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                out.push('{');
                for (i, k) in keys.into_iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&serde_json::to_string(k).unwrap_or_default());
                    out.push(':');
                    map[k].write_canonical_key(out);
                }
                out.push('}');
            }
        }
    }

    /// Strict JSON rendering on one line, keys in stored order.
    pub fn to_json_string(&self) -> String {
        let mut out = String::new();
        self.write_json(&mut out);
        out
    }

    pub(crate) fn write_json(&self, out: &mut String) {
        match self {
            DocValue::Null => out.push_str("null"),
            DocValue::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            DocValue::Int(i) => out.push_str(&i.to_string()),
            DocValue::Float(f) => {
                if f.is_finite() {
                    // Debug formatting always carries a '.' or an exponent, so the
                    // value decodes back as a float.
                    out.push_str(&format!("{f:?}"));
                } else {
                    out.push_str("null");
                }
            }
            DocValue::Str(s) => out.push_str(&serde_json::to_string(s).unwrap_or_default()),
            DocValue::Array(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    item.write_json(out);
                }
                out.push(']');
            }
            DocValue::Obj(map) => {
                out.push('{');
                for (i, (k, v)) in map.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&serde_json::to_string(k).unwrap_or_default());
                    out.push(':');
                    v.write_json(out);
                }
                out.push('}');
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            DocValue::Null => serde_json::Value::Null,
            DocValue::Bool(b) => serde_json::Value::Bool(*b),
            DocValue::Int(i) => serde_json::Value::from(*i),
            DocValue::Float(f) => serde_json::Number::from_f64(*f)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            DocValue::Str(s) => serde_json::Value::String(s.clone()),
            DocValue::Array(a) => serde_json::Value::Array(a.iter().map(DocValue::to_json).collect()),
            DocValue::Obj(o) => serde_json::Value::Object(o.iter().map(|(k, v)| (k.clone(), v.to_json())).collect()),
        }
    }

    pub fn from_json(value: &serde_json::Value) -> Self {
        match value {
            serde_json::Value::Null => DocValue::Null,
            serde_json::Value::Bool(b) => DocValue::Bool(*b),
            serde_json::Value::Number(n) => match n.as_i64() {
                Some(i) if i.abs() <= MAX_SAFE_INT => DocValue::Int(i),
                _ => DocValue::Float(n.as_f64().unwrap_or(0.0)),
            },
            serde_json::Value::String(s) => DocValue::Str(s.clone()),
            serde_json::Value::Array(a) => DocValue::Array(a.iter().map(DocValue::from_json).collect()),
            serde_json::Value::Object(o) => {
                DocValue::Obj(o.iter().map(|(k, v)| (k.clone(), DocValue::from_json(v))).collect())
            }
        }
    }
}

impl fmt::Display for DocValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_json_string())
    }
}

impl Serialize for DocValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DocValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(deserializer)?;
        Ok(DocValue::from_json(&v))
    }
}

impl From<&str> for DocValue {
    fn from(s: &str) -> Self {
        DocValue::Str(s.to_string())
    }
}

impl From<String> for DocValue {
    fn from(s: String) -> Self {
        DocValue::Str(s)
    }
}

impl From<i64> for DocValue {
    fn from(i: i64) -> Self {
        DocValue::Int(i)
    }
}

impl From<f64> for DocValue {
    fn from(f: f64) -> Self {
        DocValue::Float(f)
    }
}

impl From<bool> for DocValue {
    fn from(b: bool) -> Self {
        DocValue::Bool(b)
    }
}

impl From<Document> for DocValue {
    fn from(d: Document) -> Self {
        DocValue::Obj(d)
    }
}

impl From<Vec<DocValue>> for DocValue {
    fn from(v: Vec<DocValue>) -> Self {
        DocValue::Array(v)
    }
}
