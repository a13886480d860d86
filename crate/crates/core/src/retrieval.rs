//! Embedding library over training examples and weighted multi-channel
//! cosine retrieval.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{execute_query_with, field_paths, DocumentDatabase, ExecOptions};
use crate::provider::{post_json, ProviderError};
use crate::query::{extract_field_profile, parse_query};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("embedding has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("the vector library is empty")]
    EmptyLibrary,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("library file {path}: {message}")]
    Format { path: String, message: String },
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
}

/// A training example as stored in the library.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub nlq: String,
    pub nosql: String,
    /// Comma-joined database fields used by the query.
    #[serde(default)]
    pub db_fields: String,
    /// Comma-joined fields of the query's result documents.
    #[serde(default)]
    pub result_fields: String,
    pub db_id: String,
}

pub const CHANNELS: [&str; 4] = ["nlq", "nosql", "db_fields", "result_fields"];

impl ExampleRecord {
    pub fn channel_texts(&self) -> [&str; 4] {
        [&self.nlq, &self.nosql, &self.db_fields, &self.result_fields]
    }

    /// Fill empty field channels from the query: database fields from its
    /// field profile, result fields by executing it against `db`.
    pub fn fill_field_channels(&mut self, db: Option<&DocumentDatabase>) {
        let Ok(ast) = parse_query(&self.nosql) else {
            return;
        };
        if self.db_fields.is_empty() {
            let fields: Vec<String> = extract_field_profile(&ast).database_fields.into_iter().collect();
            self.db_fields = fields.join(",");
        }
        if self.result_fields.is_empty() {
            if let Some(Ok(rs)) = db.map(|d| execute_query_with(d, &ast, &ExecOptions::lenient())) {
                let mut fields: Vec<String> = Vec::new();
                for doc in &rs.docs {
                    for path in field_paths(doc) {
                        if !fields.contains(&path) {
                            fields.push(path);
                        }
                    }
                }
                self.result_fields = fields.join(",");
            }
        }
    }
}

/// Texts available at query time. Missing channels score zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryChannels {
    pub nlq: String,
    pub nosql: Option<String>,
    pub db_fields: Option<String>,
    pub result_fields: Option<String>,
}

impl QueryChannels {
    fn texts(&self) -> [Option<&str>; 4] {
        [
            Some(&self.nlq),
            self.nosql.as_deref(),
            self.db_fields.as_deref(),
            self.result_fields.as_deref(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalWeights {
    pub w_nlq: f64,
    pub w_other: f64,
}

impl Default for RetrievalWeights {
    fn default() -> Self {
        RetrievalWeights {
            w_nlq: 1.0,
            w_other: 0.3,
        }
    }
}

impl RetrievalWeights {
    pub fn new(w_nlq: f64, w_other: f64) -> Result<Self, RetrievalError> {
        let w = RetrievalWeights { w_nlq, w_other };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        if !(self.w_nlq > 0.0 && self.w_other > 0.0 && self.w_nlq.is_finite() && self.w_other.is_finite()) {
            return Err(RetrievalError::InvalidWeights(format!(
                "({}, {})",
                self.w_nlq, self.w_other
            )));
        }
        Ok(())
    }
}

pub trait Embedder: Send + Sync {
    /// Identifies provider and settings; stored in the library header.
    fn tag(&self) -> String;
    fn dimension(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, RetrievalError>;
}

pub fn l2_normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Offline embedder: signed feature hashing of character trigrams and words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalHashEmbedder {
    pub dimension: usize,
    pub seed: u64,
}

impl Default for LocalHashEmbedder {
    fn default() -> Self {
        LocalHashEmbedder {
            dimension: 256,
            seed: 0,
        }
    }
}

const EMPTY_SENTINEL: &str = "\u{0}<empty>";

impl LocalHashEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        LocalHashEmbedder {
            dimension: dimension.max(1),
            seed,
        }
    }

    fn hash(&self, kind: u8, token: &str) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        for b in std::iter::once(kind).chain(token.bytes()) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    fn add(&self, v: &mut [f64], kind: u8, token: &str) {
        let h = self.hash(kind, token);
        let idx = (h % self.dimension as u64) as usize;
        v[idx] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        let lowered = text.to_lowercase();
        let padded: Vec<char> = format!(" {} ", lowered.trim()).chars().collect();
        for w in padded.windows(3) {
            let gram: String = w.iter().collect();
            self.add(&mut v, b'c', &gram);
        }
        for word in lowered
            .split(|c: char| !c.is_alphanumeric() && c != '_' && c != '$')
            .filter(|w| !w.is_empty())
        {
            self.add(&mut v, b'w', word);
        }
        if !l2_normalize(&mut v) {
            v.iter_mut().for_each(|x| *x = 0.0);
            self.add(&mut v, b's', EMPTY_SENTINEL);
            l2_normalize(&mut v);
        }
        v
    }
}

impl Embedder for LocalHashEmbedder {
    fn tag(&self) -> String {
        format!("local-hash:d={}:seed={}", self.dimension, self.seed)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Client for an OpenAI-style `/embeddings` endpoint.
pub struct HttpEmbedder {
    pub url: String,
    pub model: String,
    pub token_env: Option<String>,
    pub dimension: usize,
    pub timeout: Duration,
}

impl Embedder for HttpEmbedder {
    fn tag(&self) -> String {
        format!("http:{}:d={}", self.model, self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let inputs: Vec<&str> = texts
            .iter()
            .map(|t| if t.is_empty() { " " } else { t.as_str() })
            .collect();
        let body = serde_json::json!({ "model": self.model, "input": inputs });
        let reply = post_json(&self.url, self.token_env.as_deref(), &body, self.timeout)?;
        let data = reply
            .get("data")
            .and_then(|d| d.as_array())
            .ok_or_else(|| ProviderError::new("response has no data array"))?;
        if data.len() != texts.len() {
            return Err(ProviderError::new(format!("{} embeddings for {} inputs", data.len(), texts.len())).into());
        }
        let mut out = Vec::with_capacity(data.len());
        for item in data {
            let mut v: Vec<f64> = item
                .get("embedding")
                .and_then(|e| e.as_array())
                .ok_or_else(|| ProviderError::new("embedding missing"))?
                .iter()
                .map(|x| x.as_f64().unwrap_or(0.0))
                .collect();
            if v.len() != self.dimension {
                return Err(RetrievalError::DimensionMismatch {
                    expected: self.dimension,
                    got: v.len(),
                });
            }
            l2_normalize(&mut v);
            out.push(v);
        }
        Ok(out)
    }
}

/// Embedder settings as they appear in run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderSpec {
    pub kind: String,
    pub dimension: usize,
    pub seed: u64,
    pub url: Option<String>,
    pub model: Option<String>,
    pub token_env: Option<String>,
    pub timeout_secs: u64,
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec {
            kind: "local-hash".into(),
            dimension: 256,
            seed: 0,
            url: None,
            model: None,
            token_env: None,
            timeout_secs: 60,
        }
    }
}

type EmbedderFactory = Box<dyn Fn(&EmbedderSpec) -> Result<Arc<dyn Embedder>, RetrievalError> + Send + Sync>;

/// Embedder constructors by kind name.
pub struct EmbedderRegistry {
    factories: HashMap<String, EmbedderFactory>,
}

impl EmbedderRegistry {
    pub fn empty() -> Self {
        EmbedderRegistry {
            factories: HashMap::new(),
        }
    }

    pub fn register(
        &mut self,
        kind: &str,
        factory: impl Fn(&EmbedderSpec) -> Result<Arc<dyn Embedder>, RetrievalError> + Send + Sync + 'static,
    ) {
        self.factories.insert(kind.to_string(), Box::new(factory));
    }

    pub fn build(&self, spec: &EmbedderSpec) -> Result<Arc<dyn Embedder>, RetrievalError> {
        let f = self
            .factories
            .get(&spec.kind)
            .ok_or_else(|| ProviderError::new(format!("unknown embedder kind `{}`", spec.kind)))?;
        f(spec)
    }
}

impl Default for EmbedderRegistry {
    fn default() -> Self {
        let mut r = EmbedderRegistry::empty();
        r.register("local-hash", |s| {
            Ok(Arc::new(LocalHashEmbedder::new(s.dimension, s.seed)))
        });
        r.register("http", |s| {
            Ok(Arc::new(HttpEmbedder {
                url: s
                    .url
                    .clone()
                    .ok_or_else(|| ProviderError::new("http embedder needs `url`"))?,
                model: s.model.clone().unwrap_or_else(|| "text-embedding-ada-002".into()),
                token_env: s.token_env.clone(),
                dimension: s.dimension,
                timeout: Duration::from_secs(s.timeout_secs),
            }))
        });
        r
    }
}

/// Records with one unit vector per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorLibrary {
    pub provider_tag: String,
    pub dimension: usize,
    pub records: Vec<ExampleRecord>,
    /// `records.len() * 4 * dimension` values, channel-major within a record.
    vectors: Vec<f64>,
}

const MAGIC: &[u8; 8] = b"T2NVLIB\0";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LibraryHeader {
    provider_tag: String,
    dimension: usize,
    channels: Vec<String>,
    count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryManifest {
    pub format_version: u32,
    pub provider_tag: String,
    pub dimension: usize,
    pub channels: Vec<String>,
    pub count: usize,
    pub ids: Vec<String>,
}

impl VectorLibrary {
    pub fn empty(provider_tag: impl Into<String>, dimension: usize) -> Self {
        VectorLibrary {
            provider_tag: provider_tag.into(),
            dimension,
            records: Vec::new(),
            vectors: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn vector(&self, record: usize, channel: usize) -> &[f64] {
        let start = (record * 4 + channel) * self.dimension;
        &self.vectors[start..start + self.dimension]
    }

    pub fn vector_count(&self) -> usize {
        self.vectors.len() / self.dimension.max(1)
    }

    fn push(&mut self, record: ExampleRecord, channels: Vec<Vec<f64>>) -> Result<(), RetrievalError> {
        for v in &channels {
            if v.len() != self.dimension {
                return Err(RetrievalError::DimensionMismatch {
                    expected: self.dimension,
                    got: v.len(),
                });
            }
        }
        self.records.push(record);
        channels.into_iter().for_each(|v| self.vectors.extend(v));
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = LibraryHeader {
            provider_tag: self.provider_tag.clone(),
            dimension: self.dimension,
            channels: CHANNELS.iter().map(|c| c.to_string()).collect(),
            count: self.records.len(),
        };
        let header = serde_json::to_vec(&header).expect("serializable header");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (i, record) in self.records.iter().enumerate() {
            let json = serde_json::to_vec(record).expect("serializable record");
            out.extend_from_slice(&(json.len() as u32).to_le_bytes());
            out.extend_from_slice(&json);
            for c in 0..4 {
                for x in self.vector(i, c) {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self, RetrievalError> {
        let bad = |message: &str| RetrievalError::Format {
            path: origin.to_string(),
            message: message.to_string(),
        };
        let mut r = bytes;
        let mut take = |n: usize| -> Result<&[u8], RetrievalError> {
            if r.len() < n {
                return Err(bad("truncated"));
            }
            let (head, tail) = r.split_at(n);
            r = tail;
            Ok(head)
        };
        if take(8)? != MAGIC {
            return Err(bad("not a vector library"));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let header_len = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let header: LibraryHeader = serde_json::from_slice(take(header_len)?).map_err(|e| bad(&e.to_string()))?;
        let mut lib = VectorLibrary::empty(header.provider_tag, header.dimension);
        for _ in 0..header.count {
            let len = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
            let record: ExampleRecord = serde_json::from_slice(take(len)?).map_err(|e| bad(&e.to_string()))?;
            let raw = take(4 * header.dimension * 8)?;
            let values: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            lib.records.push(record);
            lib.vectors.extend(values);
        }
        if !take(0)?.is_empty() || bytes.is_empty() {
            return Err(bad("trailing data"));
        }
        Ok(lib)
    }

    pub fn manifest(&self) -> LibraryManifest {
        LibraryManifest {
            format_version: FORMAT_VERSION,
            provider_tag: self.provider_tag.clone(),
            dimension: self.dimension,
            channels: CHANNELS.iter().map(|c| c.to_string()).collect(),
            count: self.records.len(),
            ids: self.records.iter().map(|r| r.id.clone()).collect(),
        }
    }

    pub fn manifest_path(path: &Path) -> PathBuf {
        let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        path.with_file_name(name)
    }

    /// Write the binary library and its JSON manifest next to it.
    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let io = |p: &Path, e: std::io::Error| RetrievalError::Io {
            path: p.display().to_string(),
            message: e.to_string(),
        };
        let mut f = fs::File::create(path).map_err(|e| io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| io(path, e))?;
        let mpath = Self::manifest_path(path);
        let manifest = serde_json::to_string_pretty(&self.manifest()).expect("serializable manifest");
        fs::write(&mpath, manifest + "\n").map_err(|e| io(&mpath, e))
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| RetrievalError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

/// A provider failure during a build, with everything embedded so far.
#[derive(Debug)]
pub struct BuildInterrupted {
    pub error: RetrievalError,
    pub partial: VectorLibrary,
}

/// Embeds records in batches; a build can resume from a partial library.
pub struct LibraryBuilder<'a> {
    pub embedder: &'a dyn Embedder,
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl<'a> LibraryBuilder<'a> {
    pub fn new(embedder: &'a dyn Embedder) -> Self {
        LibraryBuilder {
            embedder,
            batch_size: 32,
            max_in_flight: 4,
        }
    }

    pub fn build(&self, records: &[ExampleRecord]) -> Result<VectorLibrary, Box<BuildInterrupted>> {
        self.resume(
            records,
            VectorLibrary::empty(self.embedder.tag(), self.embedder.dimension()),
        )
    }

    /// Embed the records missing from `partial`, in input order.
    pub fn resume(
        &self,
        records: &[ExampleRecord],
        partial: VectorLibrary,
    ) -> Result<VectorLibrary, Box<BuildInterrupted>> {
        let mut lib = partial;
        if lib.provider_tag != self.embedder.tag() || lib.dimension != self.embedder.dimension() {
            return Err(Box::new(BuildInterrupted {
                error: RetrievalError::Format {
                    path: String::new(),
                    message: format!("partial library was built with {}", lib.provider_tag),
                },
                partial: lib,
            }));
        }
        let done: HashSet<String> = lib.records.iter().map(|r| r.id.clone()).collect();
        let todo: Vec<&ExampleRecord> = records.iter().filter(|r| !done.contains(&r.id)).collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.max_in_flight.max(1))
            .build()
            .expect("thread pool");
        let window = self.batch_size.max(1) * self.max_in_flight.max(1);
        for group in todo.chunks(window) {
            let results: Vec<Result<Vec<Vec<f64>>, RetrievalError>> = pool.install(|| {
                group
                    .par_chunks(self.batch_size.max(1))
                    .map(|batch| {
                        let texts: Vec<String> = batch
                            .iter()
                            .flat_map(|r| r.channel_texts().map(str::to_string))
                            .collect();
                        self.embedder.embed(&texts)
                    })
                    .collect()
            });
            for (batch, result) in group.chunks(self.batch_size.max(1)).zip(results) {
                let vectors = match result {
                    Ok(v) => v,
                    Err(error) => return Err(Box::new(BuildInterrupted { error, partial: lib })),
                };
                let mut it = vectors.into_iter();
                for record in batch {
                    let channels: Vec<Vec<f64>> = it.by_ref().take(4).collect();
                    if let Err(error) = lib.push((*record).clone(), channels) {
                        return Err(Box::new(BuildInterrupted { error, partial: lib }));
                    }
                }
            }
        }
        Ok(lib)
    }
}

pub fn build_vector_library(
    records: &[ExampleRecord],
    embedder: &dyn Embedder,
) -> Result<VectorLibrary, Box<BuildInterrupted>> {
    LibraryBuilder::new(embedder).build(records)
}

/// Query-side vectors, one per channel when available.
pub type QueryVectors = [Option<Vec<f64>>; 4];

pub fn embed_query(embedder: &dyn Embedder, channels: &QueryChannels) -> Result<QueryVectors, RetrievalError> {
    let texts = channels.texts();
    let present: Vec<String> = texts.iter().flatten().map(|t| t.to_string()).collect();
    let mut vectors = embedder.embed(&present)?.into_iter();
    let mut out: QueryVectors = Default::default();
    for (slot, text) in out.iter_mut().zip(texts) {
        if text.is_some() {
            *slot = vectors.next();
        }
    }
    Ok(out)
}

/// `w_nlq * cos(nlq) + w_other * (cos(nosql) + cos(db_fields) + cos(result_fields))`.
pub fn similarity(query: &QueryVectors, library: &VectorLibrary, record: usize, weights: &RetrievalWeights) -> f64 {
    let mut sim = 0.0;
    for (c, q) in query.iter().enumerate() {
        if let Some(q) = q {
            let w = if c == 0 { weights.w_nlq } else { weights.w_other };
            sim += w * dot(q, library.vector(record, c));
        }
    }
    sim
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scored<'a> {
    pub score: f64,
    pub record: &'a ExampleRecord,
}

/// The `k` best records by similarity; ties go to the smaller id.
pub fn retrieve_top_k<'a>(
    library: &'a VectorLibrary,
    query: &QueryVectors,
    weights: &RetrievalWeights,
    k: usize,
) -> Result<Vec<Scored<'a>>, RetrievalError> {
    weights.validate()?;
    if k == 0 {
        return Ok(Vec::new());
    }
    if library.is_empty() {
        return Err(RetrievalError::EmptyLibrary);
    }
    let mut scored: Vec<Scored<'a>> = (0..library.len())
        .map(|i| Scored {
            score: similarity(query, library, i, weights),
            record: &library.records[i],
        })
        .collect();
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.record.id.cmp(&b.record.id)));
    scored.truncate(k);
    Ok(scored)
}

pub const DEFAULT_K: usize = 20;
