//! The multi-step generation pipeline: schema prediction, initial query
//! generation, retrieval-grounded refinement and execution-based
//! optimization.

mod extract;
pub mod prompts;

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{execute_query_with, DocumentDatabase, ExecOptions};
use crate::provider::{ChatMessage, ChatModel, ChatRequest, ProviderError};
use crate::query::parse_query;
use crate::retrieval::{
    embed_query, retrieve_top_k, Embedder, ExampleRecord, QueryChannels, RetrievalError, RetrievalWeights,
    VectorLibrary, DEFAULT_K,
};
use crate::value::DocValue;

pub use extract::extract_query;
pub use prompts::{DbSchema, ExampleWithResults, PredictedSchemas, SchemaKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmartError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("no query found in the model reply")]
    NoQueryFound,
    #[error("query generation failed: {0}")]
    GenerationFailed(String),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
}

/// One model call as sent and received.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub stage: String,
    pub messages: Vec<ChatMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Per-example call context collecting transcripts and warnings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Session {
    pub example_id: String,
    pub temperature: f64,
    pub transcripts: Vec<Transcript>,
    pub warnings: Vec<String>,
}

impl Session {
    pub fn new(example_id: impl Into<String>, temperature: f64) -> Self {
        Session {
            example_id: example_id.into(),
            temperature,
            ..Default::default()
        }
    }

    pub fn call(
        &mut self,
        model: &dyn ChatModel,
        stage: &str,
        messages: Vec<ChatMessage>,
    ) -> Result<String, ProviderError> {
        let request = ChatRequest {
            messages,
            temperature: self.temperature,
            example_id: self.example_id.clone(),
            stage: stage.to_string(),
        };
        let result = model.complete(&request);
        self.transcripts.push(Transcript {
            stage: stage.to_string(),
            messages: request.messages,
            reply: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(|e| e.to_string()),
        });
        result
    }
}

/// Split a comma-separated prediction, trimming and dropping duplicates.
pub fn parse_schema_reply(reply: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for part in reply.split([',', '\n']) {
        let item = part.trim().trim_matches('`').trim();
        if !item.is_empty() && !out.iter().any(|x| x == item) {
            out.push(item.to_string());
        }
    }
    out
}

/// One call per schema kind. Failed or empty predictions leave that kind empty.
pub fn predict_schema(session: &mut Session, client: &dyn ChatModel, nlq: &str, schema: &DbSchema) -> PredictedSchemas {
    let mut predicted = PredictedSchemas::default();
    for kind in SchemaKind::ALL {
        match session.call(
            client,
            kind.stage(),
            prompts::schema_prediction_prompt(kind, nlq, schema),
        ) {
            Ok(reply) => *predicted.get_mut(kind) = parse_schema_reply(&reply),
            Err(e) => session.warnings.push(format!("{}: {e}", kind.stage())),
        }
    }
    predicted
}

/// The generator's reply, unprocessed.
pub fn generate_initial_query(
    session: &mut Session,
    client: &dyn ChatModel,
    nlq: &str,
    schema: &DbSchema,
) -> Result<String, SmartError> {
    let reply = session.call(client, "generate", prompts::generation_prompt(nlq, schema))?;
    if reply.trim().is_empty() {
        return Err(SmartError::GenerationFailed("empty reply".into()));
    }
    Ok(reply)
}

/// Extract a query that parses, or explain why not.
fn usable_query(reply: &str) -> Result<String, String> {
    let query = extract_query(reply).map_err(|e| e.to_string())?;
    parse_query(&query).map_err(|e| format!("unparseable output: {e}"))?;
    Ok(query)
}

/// Refined query, or `initial` when the model fails or returns nothing usable.
pub fn refine_query(
    session: &mut Session,
    client: &dyn ChatModel,
    nlq: &str,
    schema: &DbSchema,
    predicted: &PredictedSchemas,
    initial: &str,
    examples: &[&ExampleRecord],
) -> String {
    let reply = session.call(
        client,
        "refine",
        prompts::refine_prompt(nlq, schema, predicted, initial, examples),
    );
    match reply.map_err(|e| e.to_string()).and_then(|r| usable_query(&r)) {
        Ok(q) => q,
        Err(reason) => {
            log::warn!(
                "{}: refine fell back to the initial query: {reason}",
                session.example_id
            );
            session
                .warnings
                .push(format!("refine: {reason}; kept the initial query"));
            initial.to_string()
        }
    }
}

/// Results of `query` on `db`, cut to the first `rows` documents. Failures
/// render as an error line.
pub fn execution_excerpt(db: Option<&DocumentDatabase>, query: &str, rows: usize, exec: &ExecOptions) -> String {
    let Some(db) = db else {
        return "Error: database unavailable".into();
    };
    let result = parse_query(query)
        .map_err(|e| e.to_string())
        .and_then(|ast| execute_query_with(db, &ast, exec).map_err(|e| e.to_string()));
    match result {
        Err(e) => format!("Error: {e}"),
        Ok(rs) => {
            let shown: Vec<serde_json::Value> = rs
                .docs
                .iter()
                .take(rows)
                .map(|d| DocValue::Obj(d.clone()).to_json())
                .collect();
            let mut out = serde_json::to_string_pretty(&shown).expect("serializable");
            if rs.docs.len() > rows {
                out.push_str(&format!("\n({} of {} documents shown)", rows, rs.docs.len()));
            }
            out
        }
    }
}

/// Optimized query, or `refined` when the model fails or returns nothing usable.
#[allow(clippy::too_many_arguments)]
pub fn optimize_query(
    session: &mut Session,
    client: &dyn ChatModel,
    nlq: &str,
    schema: &DbSchema,
    target_fields: &[String],
    refined: &str,
    execution: &str,
    examples: &[ExampleWithResults<'_>],
) -> String {
    let messages = prompts::optimize_prompt(nlq, schema, target_fields, refined, execution, examples);
    let reply = session.call(client, "optimize", messages);
    match reply.map_err(|e| e.to_string()).and_then(|r| usable_query(&r)) {
        Ok(q) => q,
        Err(reason) => {
            log::warn!(
                "{}: optimize fell back to the refined query: {reason}",
                session.example_id
            );
            session
                .warnings
                .push(format!("optimize: {reason}; kept the refined query"));
            refined.to_string()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestExample {
    pub id: String,
    pub db_id: String,
    pub nlq: String,
}

#[derive(Clone)]
pub struct SmartClients {
    pub schema: Arc<dyn ChatModel>,
    pub generator: Arc<dyn ChatModel>,
    pub refiner: Arc<dyn ChatModel>,
    pub optimizer: Arc<dyn ChatModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmartConfig {
    pub weights: RetrievalWeights,
    pub k: usize,
    pub excerpt_rows: usize,
    pub temperature: f64,
    pub max_in_flight: usize,
    #[serde(skip)]
    pub exec: ExecOptions,
}

impl Default for SmartConfig {
    fn default() -> Self {
        SmartConfig {
            weights: RetrievalWeights::default(),
            k: DEFAULT_K,
            excerpt_rows: 5,
            temperature: 0.0,
            max_in_flight: 4,
            exec: ExecOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceStatus {
    #[default]
    Pending,
    Complete,
    Failed,
}

/// Everything one example produced, stage by stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SmartTrace {
    pub id: String,
    pub db_id: String,
    pub nlq: String,
    pub status: TraceStatus,
    pub predicted_schemas: Option<PredictedSchemas>,
    pub initial_query: Option<String>,
    pub refine_retrieved_ids: Option<Vec<String>>,
    pub refined_query: Option<String>,
    pub execution_excerpt: Option<String>,
    pub optimize_retrieved_ids: Option<Vec<String>>,
    pub final_query: Option<String>,
    pub error: Option<String>,
    pub warnings: Vec<String>,
    pub transcripts: Vec<Transcript>,
}

impl SmartTrace {
    fn new(example: &TestExample) -> Self {
        SmartTrace {
            id: example.id.clone(),
            db_id: example.db_id.clone(),
            nlq: example.nlq.clone(),
            ..Default::default()
        }
    }

    pub fn is_finished(&self) -> bool {
        self.status != TraceStatus::Pending
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceEvent {
    stage: String,
    trace: SmartTrace,
}

/// Append-only JSON-lines log of trace snapshots, one per finished stage.
pub struct TraceLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl TraceLog {
    pub fn open(path: &Path) -> Result<Self, SmartError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| SmartError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        Ok(TraceLog {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn record(&self, stage: &str, trace: &SmartTrace) -> Result<(), SmartError> {
        let line = serde_json::to_string(&TraceEvent {
            stage: stage.to_string(),
            trace: trace.clone(),
        })
        .expect("serializable trace");
        let mut file = self.file.lock().expect("trace log lock");
        writeln!(file, "{line}")
            .and_then(|_| file.flush())
            .map_err(|e| SmartError::Io {
                path: self.path.display().to_string(),
                message: e.to_string(),
            })
    }

    /// Latest snapshot per example id. A missing file reads as empty; a torn
    /// final line is ignored.
    pub fn load(path: &Path) -> Result<IndexMap<String, SmartTrace>, SmartError> {
        let mut out = IndexMap::new();
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(e) => {
                return Err(SmartError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })
            }
        };
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| SmartError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            if let Ok(event) = serde_json::from_str::<TraceEvent>(&line) {
                out.insert(event.trace.id.clone(), event.trace);
            }
        }
        Ok(out)
    }
}

struct Run<'a> {
    dbs: &'a IndexMap<String, DocumentDatabase>,
    library: &'a VectorLibrary,
    embedder: &'a dyn Embedder,
    clients: &'a SmartClients,
    config: &'a SmartConfig,
    log: Option<&'a TraceLog>,
}

impl Run<'_> {
    fn persist(&self, stage: &str, trace: &SmartTrace) -> Result<(), SmartError> {
        match self.log {
            Some(log) => log.record(stage, trace),
            None => Ok(()),
        }
    }

    fn retrieve(&self, channels: &QueryChannels, session: &mut Session, stage: &str) -> Vec<&ExampleRecord> {
        let result = embed_query(self.embedder, channels)
            .and_then(|q| retrieve_top_k(self.library, &q, &self.config.weights, self.config.k));
        match result {
            Ok(hits) => hits.into_iter().map(|s| s.record).collect(),
            Err(e) => {
                session.warnings.push(format!("{stage} retrieval: {e}"));
                Vec::new()
            }
        }
    }

    fn channels(trace: &SmartTrace, predicted: &PredictedSchemas, nosql: &str) -> QueryChannels {
        let joined = |v: &[String]| (!v.is_empty()).then(|| v.join(","));
        QueryChannels {
            nlq: trace.nlq.clone(),
            nosql: Some(nosql.to_string()),
            db_fields: joined(&predicted.db_fields),
            result_fields: joined(&predicted.result_fields),
        }
    }

    fn process(&self, mut trace: SmartTrace) -> Result<SmartTrace, SmartError> {
        if trace.is_finished() {
            return Ok(trace);
        }
        let Some(db) = self.dbs.get(&trace.db_id) else {
            trace.status = TraceStatus::Failed;
            trace.error = Some(format!("no database named `{}`", trace.db_id));
            self.persist("load", &trace)?;
            return Ok(trace);
        };
        let schema = DbSchema::from_database(db);
        let mut session = Session::new(trace.id.clone(), self.config.temperature);
        let absorb = |trace: &mut SmartTrace, session: &mut Session| {
            trace.transcripts.append(&mut session.transcripts);
            trace.warnings.append(&mut session.warnings);
        };

        if trace.predicted_schemas.is_none() {
            let predicted = predict_schema(&mut session, self.clients.schema.as_ref(), &trace.nlq, &schema);
            trace.predicted_schemas = Some(predicted);
            absorb(&mut trace, &mut session);
            self.persist("schema", &trace)?;
        }
        let predicted = trace.predicted_schemas.clone().unwrap_or_default();

        if trace.initial_query.is_none() {
            let generated = generate_initial_query(&mut session, self.clients.generator.as_ref(), &trace.nlq, &schema)
                .and_then(|reply| extract_query(&reply));
            absorb(&mut trace, &mut session);
            match generated {
                Ok(q) => trace.initial_query = Some(q),
                Err(e) => {
                    let e = match e {
                        SmartError::GenerationFailed(_) => e,
                        other => SmartError::GenerationFailed(other.to_string()),
                    };
                    trace.status = TraceStatus::Failed;
                    trace.error = Some(e.to_string());
                    self.persist("generate", &trace)?;
                    return Ok(trace);
                }
            }
            self.persist("generate", &trace)?;
        }
        let initial = trace.initial_query.clone().unwrap_or_default();

        if trace.refined_query.is_none() {
            let channels = Self::channels(&trace, &predicted, &initial);
            let examples = self.retrieve(&channels, &mut session, "refine");
            trace.refine_retrieved_ids = Some(examples.iter().map(|r| r.id.clone()).collect());
            let refined = refine_query(
                &mut session,
                self.clients.refiner.as_ref(),
                &trace.nlq,
                &schema,
                &predicted,
                &initial,
                &examples,
            );
            trace.refined_query = Some(refined);
            absorb(&mut trace, &mut session);
            self.persist("refine", &trace)?;
        }
        let refined = trace.refined_query.clone().unwrap_or_default();

        let rows = self.config.excerpt_rows;
        let excerpt = execution_excerpt(Some(db), &refined, rows, &self.config.exec);
        let channels = Self::channels(&trace, &predicted, &refined);
        let examples = self.retrieve(&channels, &mut session, "optimize");
        let with_results: Vec<ExampleWithResults<'_>> = examples
            .iter()
            .map(|r| ExampleWithResults {
                record: r,
                results: execution_excerpt(self.dbs.get(&r.db_id), &r.nosql, rows, &self.config.exec),
            })
            .collect();
        let final_query = optimize_query(
            &mut session,
            self.clients.optimizer.as_ref(),
            &trace.nlq,
            &schema,
            &predicted.result_fields,
            &refined,
            &excerpt,
            &with_results,
        );
        trace.execution_excerpt = Some(excerpt);
        trace.optimize_retrieved_ids = Some(examples.iter().map(|r| r.id.clone()).collect());
        absorb(&mut trace, &mut session);
        match parse_query(&final_query) {
            Ok(_) => trace.status = TraceStatus::Complete,
            Err(e) => {
                trace.status = TraceStatus::Failed;
                trace.error = Some(format!("final query does not parse: {e}"));
            }
        }
        trace.final_query = Some(final_query);
        self.persist("optimize", &trace)?;
        Ok(trace)
    }
}

/// Run the pipeline over `examples`, returning traces in input order.
/// Examples already finished in `previous` are returned unchanged and
/// unfinished ones continue after their last recorded stage.
#[allow(clippy::too_many_arguments)]
pub fn run_smart(
    examples: &[TestExample],
    dbs: &IndexMap<String, DocumentDatabase>,
    library: &VectorLibrary,
    embedder: &dyn Embedder,
    clients: &SmartClients,
    config: &SmartConfig,
    log: Option<&TraceLog>,
    previous: &IndexMap<String, SmartTrace>,
) -> Result<Vec<SmartTrace>, SmartError> {
    config.weights.validate()?;
    if !library.is_empty() && (library.provider_tag != embedder.tag() || library.dimension != embedder.dimension()) {
        return Err(RetrievalError::Format {
            path: String::new(),
            message: format!(
                "library built with {}, embedder is {}",
                library.provider_tag,
                embedder.tag()
            ),
        }
        .into());
    }
    let run = Run {
        dbs,
        library,
        embedder,
        clients,
        config,
        log,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.max_in_flight.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        examples
            .par_iter()
            .map(|ex| {
                let start = previous.get(&ex.id).cloned().unwrap_or_else(|| SmartTrace::new(ex));
                run.process(start)
            })
            .collect()
    })
}
