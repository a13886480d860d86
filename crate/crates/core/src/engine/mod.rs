//! In-memory document database and an interpreter for the find/aggregate
//! subset of the MongoDB query language.

mod compare;
mod expr;
mod filter;
mod path;
mod stages;

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::query::{QueryAst, QueryBody};
use crate::value::{DocValue, Document};

pub use compare::{
    compare_results, field_multisets_match, field_paths, leaf_values, value_multisets_match, Comparison,
};
pub use expr::Vars;
pub use filter::matches;
pub use path::{expr_path, get_path, path_values, remove_path, set_path};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("unknown collection `{0}`")]
    UnknownCollection(String),
    #[error("unsupported operator `{0}`")]
    UnsupportedOperator(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("schema error: {0}")]
    Schema(String),
}

/// Named collections of documents.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DocumentDatabase {
    pub name: String,
    pub collections: IndexMap<String, Vec<Document>>,
}

impl DocumentDatabase {
    pub fn new(name: impl Into<String>) -> Self {
        DocumentDatabase {
            name: name.into(),
            collections: IndexMap::new(),
        }
    }

    pub fn with_collection(mut self, name: impl Into<String>, docs: Vec<Document>) -> Self {
        self.collections.insert(name.into(), docs);
        self
    }

    pub fn collection(&self, name: &str) -> Option<&[Document]> {
        self.collections.get(name).map(Vec::as_slice)
    }

    /// Build from a JSON object `{collection: [docs...]}`.
    pub fn from_value(name: impl Into<String>, value: &DocValue) -> Result<Self, EngineError> {
        let map = value
            .as_object()
            .ok_or_else(|| EngineError::Schema("a database bundle must be a JSON object".into()))?;
        let mut db = DocumentDatabase::new(name);
        for (collection, docs) in map {
            db.collections
                .insert(collection.clone(), documents_of(collection, docs)?);
        }
        Ok(db)
    }

    pub fn to_value(&self) -> DocValue {
        DocValue::Obj(
            self.collections
                .iter()
                .map(|(k, docs)| {
                    (
                        k.clone(),
                        DocValue::Array(docs.iter().cloned().map(DocValue::Obj).collect()),
                    )
                })
                .collect(),
        )
    }
}

fn documents_of(collection: &str, value: &DocValue) -> Result<Vec<Document>, EngineError> {
    let items = value
        .as_array()
        .ok_or_else(|| EngineError::Schema(format!("collection `{collection}` is not an array")))?;
    items
        .iter()
        .map(|d| {
            d.as_object()
                .cloned()
                .ok_or_else(|| EngineError::Schema(format!("collection `{collection}` holds a non-object document")))
        })
        .collect()
}

fn io_error(path: &Path, err: impl std::fmt::Display) -> EngineError {
    EngineError::Io {
        path: path.display().to_string(),
        message: err.to_string(),
    }
}

fn read_json(path: &Path) -> Result<DocValue, EngineError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let json: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| EngineError::Schema(format!("{}: {e}", path.display())))?;
    Ok(DocValue::from_json(&json))
}

/// Load a bundle: a directory of `<collection>.json` arrays, or a single
/// JSON file holding `{collection: [docs...]}`.
pub fn load_database(path: impl AsRef<Path>) -> Result<DocumentDatabase, EngineError> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let meta = fs::metadata(path).map_err(|e| io_error(path, e))?;
    if !meta.is_dir() {
        return DocumentDatabase::from_value(name, &read_json(path)?);
    }
    let mut files: Vec<_> = fs::read_dir(path)
        .map_err(|e| io_error(path, e))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut db = DocumentDatabase::new(name);
    for file in files {
        let collection = file.file_stem().expect("json file").to_string_lossy().into_owned();
        let docs = documents_of(&collection, &read_json(&file)?)?;
        db.collections.insert(collection, docs);
    }
    Ok(db)
}

/// Write a database as a directory bundle, one pretty-printed file per collection.
pub fn save_bundle(db: &DocumentDatabase, dir: impl AsRef<Path>) -> Result<(), EngineError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    for (name, docs) in &db.collections {
        let file = dir.join(format!("{name}.json"));
        let json = serde_json::Value::Array(docs.iter().map(|d| DocValue::Obj(d.clone()).to_json()).collect());
        let text = serde_json::to_string_pretty(&json).expect("serializable");
        fs::write(&file, text + "\n").map_err(|e| io_error(&file, e))?;
    }
    Ok(())
}

/// Documents produced by a query. `ordered` is set when the query sorts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultSet {
    pub docs: Vec<Document>,
    pub ordered: bool,
}

impl ResultSet {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn to_value(&self) -> DocValue {
        DocValue::Array(self.docs.iter().cloned().map(DocValue::Obj).collect())
    }

    pub fn to_json_string(&self) -> String {
        self.to_value().to_json_string()
    }
}

impl Serialize for ResultSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_value().serialize(serializer)
    }
}

/// What to do when a query targets a collection the database lacks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum MissingCollection {
    #[default]
    Error,
    Empty,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExecOptions {
    pub missing_collection: MissingCollection,
}

impl ExecOptions {
    pub fn lenient() -> Self {
        ExecOptions {
            missing_collection: MissingCollection::Empty,
        }
    }
}

pub fn execute_query(db: &DocumentDatabase, ast: &QueryAst) -> Result<ResultSet, EngineError> {
    execute_query_with(db, ast, &ExecOptions::default())
}

pub fn execute_query_with(db: &DocumentDatabase, ast: &QueryAst, opts: &ExecOptions) -> Result<ResultSet, EngineError> {
    let docs = match db.collections.get(&ast.collection) {
        Some(docs) => docs.clone(),
        None if opts.missing_collection == MissingCollection::Empty => Vec::new(),
        None => return Err(EngineError::UnknownCollection(ast.collection.clone())),
    };
    let vars = Vars::new();
    let docs = match &ast.body {
        QueryBody::Find(clauses) => {
            let mut docs = stages::match_docs(docs, &clauses.filter, &vars)?;
            if let Some(sort) = &clauses.sort {
                docs = stages::sort(docs, sort)?;
            }
            if let Some(limit) = clauses.limit {
                let limit = usize::try_from(limit)
                    .map_err(|_| EngineError::InvalidArgument("limit must be non-negative".into()))?;
                docs.truncate(limit);
            }
            match &clauses.projection {
                Some(p) if p.as_object().is_some_and(|m| !m.is_empty()) => stages::project(docs, p, &vars)?,
                _ => docs,
            }
        }
        QueryBody::Aggregate(pipeline) => stages::Pipeline { db }.run(docs, pipeline, &vars)?,
    };
    Ok(ResultSet {
        docs,
        ordered: ast.has_sort(),
    })
}
