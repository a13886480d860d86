//! Dataset construction: CoT-seeded generation, execution feedback, a
//! debug loop with escalation, question extension and final filtering.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{compare_results, execute_query_with, Comparison, DocumentDatabase, ExecOptions, ResultSet};
use crate::provider::{ChatMessage, ChatModel, ProviderError};
use crate::query::{detect_special_ops_default, normalize_renames, parse_query, serialize_canonical};
use crate::smart::{extract_query, DbSchema, Session, SmartError, Transcript};
use crate::value::{DocValue, Document};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("no query found in the model reply")]
    NoQueryFound,
    #[error("cannot access {path}: {message}")]
    Io { path: String, message: String },
}

/// A question with its pre-executed reference result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedExample {
    pub id: String,
    pub nlq: String,
    pub db_id: String,
    #[serde(default)]
    pub target_schema: Vec<String>,
    pub reference_result: Vec<Document>,
    /// Whether row order of the reference result is significant.
    #[serde(default)]
    pub reference_ordered: bool,
}

impl SeedExample {
    pub fn reference(&self) -> ResultSet {
        ResultSet {
            docs: self.reference_result.clone(),
            ordered: self.reference_ordered,
        }
    }
}

/// A demonstration dialogue turn written by a stronger model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demo {
    pub prompt: String,
    pub response: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotDemos {
    pub generation: Option<Demo>,
    pub feedback: Option<Demo>,
    pub debug: Option<Demo>,
}

fn with_demo(system: &str, demo: Option<&Demo>, prompt: String) -> Vec<ChatMessage> {
    let mut messages = vec![ChatMessage::system(system)];
    if let Some(d) = demo {
        messages.push(ChatMessage::user(d.prompt.clone()));
        messages.push(ChatMessage::assistant(d.response.clone()));
    }
    messages.push(ChatMessage::user(prompt));
    messages
}

pub const BUILDER_SYSTEM_PROMPT: &str =
    "You are an expert in MongoDB. You write MongoDB queries that answer natural language questions.";

const STEP_BY_STEP: &str = "A: Let's think step by step!";

fn question_block(seed: &SeedExample, schema: &DbSchema) -> String {
    format!(
        "## Natural Language Query: `{}`\n## MongoDB Collection and their Fields\n{}\n## Reference Schemas\n   - `{}`\n",
        seed.nlq,
        schema.render(),
        seed.target_schema.join(",")
    )
}

pub fn generation_prompt(seed: &SeedExample, schema: &DbSchema, demo: Option<&Demo>) -> Vec<ChatMessage> {
    let prompt = format!(
        "# Given the MongoDB collections and their fields, the natural language query and the schemas of the expected results, please generate the MongoDB query.\n{}{STEP_BY_STEP}",
        question_block(seed, schema)
    );
    with_demo(BUILDER_SYSTEM_PROMPT, demo, prompt)
}

/// Generate a first query for `seed`. Without a demonstration the prompt is
/// still sent and the session records a warning.
pub fn generate_candidate(
    session: &mut Session,
    client: &dyn ChatModel,
    seed: &SeedExample,
    schema: &DbSchema,
    demo: Option<&Demo>,
) -> Result<String, DatasetError> {
    if demo.is_none() {
        session.warnings.push("generation without demonstration".into());
    }
    let reply = session.call(client, "generate", generation_prompt(seed, schema, demo))?;
    extract_query(&reply).map_err(|_| DatasetError::NoQueryFound)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verification {
    Verified,
    Mismatch {
        /// Set when the candidate ran; `None` when it failed to parse or run.
        comparison: Option<Comparison>,
        error: Option<String>,
        result: Option<DocValue>,
    },
}

impl Verification {
    pub fn is_verified(&self) -> bool {
        matches!(self, Verification::Verified)
    }
}

/// Execute the candidate and compare with the reference result.
pub fn verify_candidate(
    candidate: &str,
    seed: &SeedExample,
    db: &DocumentDatabase,
    exec: &ExecOptions,
) -> Verification {
    let run = parse_query(candidate)
        .map_err(|e| e.to_string())
        .and_then(|ast| execute_query_with(db, &ast, exec).map_err(|e| e.to_string()));
    match run {
        Err(e) => Verification::Mismatch {
            comparison: None,
            error: Some(e),
            result: None,
        },
        Ok(rs) => match compare_results(&rs, &seed.reference()) {
            Comparison::Equal => Verification::Verified,
            c => Verification::Mismatch {
                comparison: Some(c),
                error: None,
                result: Some(rs.to_value()),
            },
        },
    }
}

fn json_block(value: &DocValue) -> String {
    format!(
        "```json\n{}\n```",
        serde_json::to_string_pretty(&value.to_json()).expect("serializable")
    )
}

pub fn feedback_prompt(
    candidate: &str,
    seed: &SeedExample,
    mismatch: &Verification,
    demo: Option<&Demo>,
) -> Vec<ChatMessage> {
    let nosql_results = match mismatch {
        Verification::Mismatch { error: Some(e), .. } => format!("Execution error: {e}"),
        Verification::Mismatch { result: Some(r), .. } => json_block(r),
        _ => "```json\n[]\n```".into(),
    };
    let prompt = format!(
        "# Compare the execution results of the MongoDB query with the execution results of the reference SQL query.\n\
         ## Natural Language Query: `{}`\n\
         ## Required Schemas\n   - `{}`\n\
         ## MongoDB Query\n{candidate}\n\
         ## MongoDB Execution Results\n{nosql_results}\n\
         ## Reference SQL Execution Results\n{}\n\
         ## Steps\n\
         (i) Examine the differences between the data obtained from executing the MongoDB query and the data obtained from executing the reference SQL query.\n\
         (ii) Analyze where these differences may have originated from. Do not give solutions.\n\
         {STEP_BY_STEP}",
        seed.nlq,
        seed.target_schema.join(","),
        json_block(&seed.reference().to_value()),
    );
    with_demo(BUILDER_SYSTEM_PROMPT, demo, prompt)
}

/// Ask the inspector model to explain a mismatch. The reply is kept verbatim.
pub fn generate_feedback(
    session: &mut Session,
    client: &dyn ChatModel,
    candidate: &str,
    seed: &SeedExample,
    mismatch: &Verification,
    demo: Option<&Demo>,
) -> Result<String, DatasetError> {
    Ok(session.call(client, "feedback", feedback_prompt(candidate, seed, mismatch, demo))?)
}

pub fn debug_prompt(
    candidate: &str,
    seed: &SeedExample,
    schema: &DbSchema,
    feedback: &[String],
    demo: Option<&Demo>,
) -> Vec<ChatMessage> {
    let mut prompt = format!(
        "# The MongoDB query below returns results that differ from the reference results. Fix the query using the feedback.\n{}## MongoDB Query\n{candidate}\n## Feedback\n",
        question_block(seed, schema)
    );
    for (i, f) in feedback.iter().enumerate() {
        prompt.push_str(&format!("### Round {}\n{}\n", i + 1, f.trim()));
    }
    prompt.push_str(STEP_BY_STEP);
    with_demo(BUILDER_SYSTEM_PROMPT, demo, prompt)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DebugStatus {
    #[default]
    Pending,
    Verified,
    Abandoned,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DebugState {
    pub candidate_query: String,
    /// Failed verifications of debugged candidates.
    pub attempts: usize,
    pub feedback_history: Vec<String>,
    pub escalated: bool,
    pub status: DebugStatus,
}

impl DebugState {
    pub fn new(candidate: impl Into<String>) -> Self {
        DebugState {
            candidate_query: candidate.into(),
            ..Default::default()
        }
    }
}

/// Second-tier attempts before switching to the top-tier model.
pub const SECOND_TIER_ATTEMPTS: usize = 2;

pub struct DebugClients<'a> {
    pub second_tier: &'a dyn ChatModel,
    pub top_tier: &'a dyn ChatModel,
    pub inspector: &'a dyn ChatModel,
}

/// A provider failure inside the loop, with the state reached so far.
#[derive(Debug, Clone, PartialEq)]
pub struct DebugAbort {
    pub error: DatasetError,
    pub state: DebugState,
}

/// Verify, then alternate feedback and repair until the candidate matches
/// the reference. Two failed second-tier repairs escalate to the top tier;
/// a failed escalated repair abandons the seed. A state returned in an
/// abort can be passed back in to continue.
#[allow(clippy::too_many_arguments)]
pub fn debug_loop(
    session: &mut Session,
    clients: &DebugClients<'_>,
    mut state: DebugState,
    seed: &SeedExample,
    db: &DocumentDatabase,
    schema: &DbSchema,
    demos: &CotDemos,
    exec: &ExecOptions,
) -> Result<DebugState, DebugAbort> {
    if state.status != DebugStatus::Pending {
        return Ok(state);
    }
    let mut verdict = verify_candidate(&state.candidate_query, seed, db, exec);
    if verdict.is_verified() {
        state.status = DebugStatus::Verified;
        return Ok(state);
    }
    loop {
        if state.feedback_history.len() <= state.attempts {
            let fb = generate_feedback(
                session,
                clients.inspector,
                &state.candidate_query,
                seed,
                &verdict,
                demos.feedback.as_ref(),
            );
            match fb {
                Ok(text) => state.feedback_history.push(text),
                Err(error) => return Err(DebugAbort { error, state }),
            }
        }
        let escalate = state.attempts >= SECOND_TIER_ATTEMPTS;
        let (client, stage) = if escalate {
            (clients.top_tier, "debug_top_tier")
        } else {
            (clients.second_tier, "debug")
        };
        let messages = debug_prompt(
            &state.candidate_query,
            seed,
            schema,
            &state.feedback_history,
            demos.debug.as_ref(),
        );
        let reply = match session.call(client, stage, messages) {
            Ok(r) => r,
            Err(e) => return Err(DebugAbort { error: e.into(), state }),
        };
        state.escalated |= escalate;
        match extract_query(&reply) {
            Ok(q) => state.candidate_query = q,
            Err(SmartError::NoQueryFound) => session.warnings.push(format!("{stage}: no query in reply")),
            Err(e) => session.warnings.push(format!("{stage}: {e}")),
        }
        verdict = verify_candidate(&state.candidate_query, seed, db, exec);
        if verdict.is_verified() {
            state.status = DebugStatus::Verified;
            return Ok(state);
        }
        state.attempts += 1;
        if escalate {
            state.status = DebugStatus::Abandoned;
            return Ok(state);
        }
    }
}

/// A question produced by extension, with the provider that wrote it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtendedQuestion {
    pub nlq: String,
    pub provider: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extension {
    pub questions: Vec<ExtendedQuestion>,
    /// Providers that failed, with their error.
    pub failures: Vec<(String, String)>,
}

pub const DEFAULT_EXTENSION_COUNT: usize = 5;

pub fn extension_prompt(
    nosql: &str,
    schema: &DbSchema,
    reference_questions: &[String],
    target_schema: &[String],
) -> Vec<ChatMessage> {
    let mut prompt = format!(
        "# Given the MongoDB query, the collections and their fields and the reference questions, write new natural language questions that the query answers. Write one question per line.\n\
         ## MongoDB Query\n{nosql}\n\
         ## MongoDB Collection and their Fields\n{}\n\
         ## Fields Shown in the Execution Results\n   - `{}`\n\
         ## Reference Questions\n",
        schema.render(),
        target_schema.join(",")
    );
    for q in reference_questions {
        prompt.push_str(&format!("   - {q}\n"));
    }
    vec![ChatMessage::system(BUILDER_SYSTEM_PROMPT), ChatMessage::user(prompt)]
}

/// Lower-cased with whitespace runs collapsed.
pub fn question_key(q: &str) -> String {
    q.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn reply_questions(reply: &str) -> Vec<String> {
    reply
        .lines()
        .map(|l| {
            let l = l.trim();
            let l = l
                .trim_start_matches(|c: char| c.is_ascii_digit())
                .trim_start_matches(['.', ')']);
            let l = l.trim_start_matches(['-', '*', '•']).trim();
            l.trim_matches(['"', '`']).trim().to_string()
        })
        .filter(|l| !l.is_empty())
        .collect()
}

/// Ask every client for new questions and pool the distinct ones, up to `n`.
/// Questions equal to a reference question are skipped. Failing clients are
/// reported and the rest still count.
#[allow(clippy::too_many_arguments)]
pub fn extend_questions(
    session: &mut Session,
    clients: &[Arc<dyn ChatModel>],
    nosql: &str,
    schema: &DbSchema,
    reference_questions: &[String],
    target_schema: &[String],
    n: usize,
) -> Extension {
    let mut out = Extension::default();
    if n == 0 {
        return out;
    }
    let mut seen: HashSet<String> = reference_questions.iter().map(|q| question_key(q)).collect();
    for client in clients {
        let messages = extension_prompt(nosql, schema, reference_questions, target_schema);
        match session.call(client.as_ref(), "extend", messages) {
            Ok(reply) => {
                for q in reply_questions(&reply) {
                    if out.questions.len() < n && seen.insert(question_key(&q)) {
                        out.questions.push(ExtendedQuestion {
                            nlq: q,
                            provider: client.name().to_string(),
                        });
                    }
                }
            }
            Err(e) => out.failures.push((client.name().to_string(), e.to_string())),
        }
    }
    out
}

/// A candidate dataset line before filtering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub nlq: String,
    pub nosql: String,
    pub db_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub record: DatasetRecord,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub records: Vec<DatasetRecord>,
    pub rejections: Vec<Rejection>,
}

/// Parse, drop queries with special operations, normalize renames and
/// serialize canonically.
pub fn finalize_dataset(records: &[DatasetRecord]) -> DatasetBundle {
    let mut bundle = DatasetBundle::default();
    for record in records {
        let reject = |reason: String| Rejection {
            record: record.clone(),
            reason,
        };
        let ast = match parse_query(&record.nosql) {
            Ok(a) => a,
            Err(e) => {
                bundle.rejections.push(reject(format!("parse error: {e}")));
                continue;
            }
        };
        let special = detect_special_ops_default(&ast);
        if !special.is_empty() {
            let ops: Vec<&str> = special.iter().map(String::as_str).collect();
            bundle
                .rejections
                .push(reject(format!("special operations: {}", ops.join(", "))));
            continue;
        }
        match normalize_renames(&ast) {
            Ok(n) => bundle.records.push(DatasetRecord {
                nlq: record.nlq.clone(),
                nosql: serialize_canonical(&n),
                db_id: record.db_id.clone(),
            }),
            Err(e) => bundle.rejections.push(reject(e.to_string())),
        }
    }
    bundle
}

#[derive(Clone)]
pub struct BuilderClients {
    pub second_tier: Arc<dyn ChatModel>,
    pub top_tier: Arc<dyn ChatModel>,
    pub inspector: Arc<dyn ChatModel>,
    pub extenders: Vec<Arc<dyn ChatModel>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuilderConfig {
    pub temperature: f64,
    pub max_in_flight: usize,
    pub questions_per_query: usize,
    #[serde(skip)]
    pub exec: ExecOptions,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        BuilderConfig {
            temperature: 0.0,
            max_in_flight: 4,
            questions_per_query: DEFAULT_EXTENSION_COUNT,
            exec: ExecOptions::default(),
        }
    }
}

/// Progress of one seed through generation, debugging and extension.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedProgress {
    pub id: String,
    pub db_id: String,
    pub nlq: String,
    pub debug: Option<DebugState>,
    pub extension: Option<Extension>,
    /// Set when the seed stopped on a provider error; cleared on resume.
    pub error: Option<String>,
    pub warnings: Vec<String>,
    pub transcripts: Vec<Transcript>,
}

impl SeedProgress {
    pub fn is_finished(&self) -> bool {
        self.error.is_none()
            && match &self.debug {
                Some(d) if d.status == DebugStatus::Verified => self.extension.is_some(),
                Some(d) => d.status == DebugStatus::Abandoned,
                None => false,
            }
    }

    /// The verified query with the seed question and its extensions.
    pub fn records(&self) -> Vec<DatasetRecord> {
        let Some(d) = self.debug.as_ref().filter(|d| d.status == DebugStatus::Verified) else {
            return Vec::new();
        };
        let mut out = vec![DatasetRecord {
            nlq: self.nlq.clone(),
            nosql: d.candidate_query.clone(),
            db_id: self.db_id.clone(),
        }];
        if let Some(ext) = &self.extension {
            out.extend(ext.questions.iter().map(|q| DatasetRecord {
                nlq: q.nlq.clone(),
                nosql: d.candidate_query.clone(),
                db_id: self.db_id.clone(),
            }));
        }
        out
    }
}

/// Append-only JSON-lines log of seed progress snapshots.
pub struct ProgressLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl ProgressLog {
    pub fn open(path: &Path) -> Result<Self, DatasetError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| DatasetError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        Ok(ProgressLog {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn record(&self, progress: &SeedProgress) -> Result<(), DatasetError> {
        let line = serde_json::to_string(progress).expect("serializable progress");
        let mut file = self.file.lock().expect("progress log lock");
        writeln!(file, "{line}")
            .and_then(|_| file.flush())
            .map_err(|e| DatasetError::Io {
                path: self.path.display().to_string(),
                message: e.to_string(),
            })
    }

    /// Latest snapshot per seed id; a torn final line is ignored.
    pub fn load(path: &Path) -> Result<IndexMap<String, SeedProgress>, DatasetError> {
        let mut out = IndexMap::new();
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(e) => {
                return Err(DatasetError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })
            }
        };
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| DatasetError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            if let Ok(p) = serde_json::from_str::<SeedProgress>(&line) {
                out.insert(p.id.clone(), p);
            }
        }
        Ok(out)
    }
}

struct Builder<'a> {
    dbs: &'a IndexMap<String, DocumentDatabase>,
    clients: &'a BuilderClients,
    demos: &'a CotDemos,
    config: &'a BuilderConfig,
    log: Option<&'a ProgressLog>,
}

impl Builder<'_> {
    fn persist(&self, p: &SeedProgress) -> Result<(), DatasetError> {
        self.log.map_or(Ok(()), |log| log.record(p))
    }

    fn process(&self, seed: &SeedExample, mut p: SeedProgress) -> Result<SeedProgress, DatasetError> {
        if p.is_finished() {
            return Ok(p);
        }
        p.error = None;
        let Some(db) = self.dbs.get(&seed.db_id) else {
            p.error = Some(format!("no database named `{}`", seed.db_id));
            self.persist(&p)?;
            return Ok(p);
        };
        let schema = DbSchema::from_database(db);
        let mut session = Session::new(seed.id.clone(), self.config.temperature);
        let finish = |p: &mut SeedProgress, session: &mut Session, error: Option<String>| {
            p.transcripts.append(&mut session.transcripts);
            p.warnings.append(&mut session.warnings);
            p.error = error;
        };

        if p.debug.is_none() {
            let candidate = generate_candidate(
                &mut session,
                self.clients.second_tier.as_ref(),
                seed,
                &schema,
                self.demos.generation.as_ref(),
            );
            match candidate {
                Ok(q) => p.debug = Some(DebugState::new(q)),
                Err(DatasetError::NoQueryFound) => p.debug = Some(DebugState::new("")),
                Err(e) => {
                    finish(&mut p, &mut session, Some(e.to_string()));
                    self.persist(&p)?;
                    return Ok(p);
                }
            }
            finish(&mut p, &mut session, None);
            self.persist(&p)?;
        }

        let state = p.debug.clone().unwrap_or_default();
        if state.status == DebugStatus::Pending {
            let clients = DebugClients {
                second_tier: self.clients.second_tier.as_ref(),
                top_tier: self.clients.top_tier.as_ref(),
                inspector: self.clients.inspector.as_ref(),
            };
            match debug_loop(
                &mut session,
                &clients,
                state,
                seed,
                db,
                &schema,
                self.demos,
                &self.config.exec,
            ) {
                Ok(s) => {
                    p.debug = Some(s);
                    finish(&mut p, &mut session, None);
                }
                Err(abort) => {
                    p.debug = Some(abort.state);
                    finish(&mut p, &mut session, Some(abort.error.to_string()));
                    self.persist(&p)?;
                    return Ok(p);
                }
            }
            self.persist(&p)?;
        }

        let verified = p.debug.as_ref().filter(|d| d.status == DebugStatus::Verified).cloned();
        if let (Some(d), None) = (verified, &p.extension) {
            let ext = extend_questions(
                &mut session,
                &self.clients.extenders,
                &d.candidate_query,
                &schema,
                std::slice::from_ref(&seed.nlq),
                &seed.target_schema,
                self.config.questions_per_query,
            );
            p.extension = Some(ext);
            finish(&mut p, &mut session, None);
            self.persist(&p)?;
        }
        Ok(p)
    }
}

/// Process seeds in parallel, returning progress in input order. Finished
/// seeds in `previous` are kept; unfinished ones continue where they stopped.
pub fn run_builder(
    seeds: &[SeedExample],
    dbs: &IndexMap<String, DocumentDatabase>,
    clients: &BuilderClients,
    demos: &CotDemos,
    config: &BuilderConfig,
    log: Option<&ProgressLog>,
    previous: &IndexMap<String, SeedProgress>,
) -> Result<Vec<SeedProgress>, DatasetError> {
    let builder = Builder {
        dbs,
        clients,
        demos,
        config,
        log,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.max_in_flight.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        seeds
            .par_iter()
            .map(|seed| {
                let start = previous.get(&seed.id).cloned().unwrap_or_else(|| SeedProgress {
                    id: seed.id.clone(),
                    db_id: seed.db_id.clone(),
                    nlq: seed.nlq.clone(),
                    ..Default::default()
                });
                builder.process(seed, start)
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn question_keys_normalize() {
        assert_eq!(question_key("  How   many\tSingers? "), "how many singers?");
    }

    #[test]
    fn reply_lines_strip_list_markers() {
        assert_eq!(
            reply_questions("1. First one?\n- second one\n\n\"third\""),
            vec!["First one?", "second one", "third"]
        );
    }

    #[test]
    fn finalize_empty() {
        assert_eq!(finalize_dataset(&[]), DatasetBundle::default());
    }
}
