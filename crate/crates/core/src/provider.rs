//! Chat-model providers: an echo model, a scripted replay model and an HTTP
//! client for chat-completion endpoints, selectable by name.

use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("provider error{}: {message}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
pub struct ProviderError {
    pub status: Option<u16>,
    pub message: String,
}

impl ProviderError {
    pub fn new(message: impl Into<String>) -> Self {
        ProviderError {
            status: None,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    /// Example the call belongs to, used by scripted providers.
    pub example_id: String,
    /// Pipeline stage label, e.g. `generate` or `feedback`.
    pub stage: String,
}

pub trait ChatModel: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError>;
}

pub const ORIGINAL_QUERY_HEADER: &str = "## Original MongoDB Query";

/// Replies with the prompt's original query, wrapped in a code fence.
/// Empty reply when the prompt has none.
#[derive(Debug, Clone, Default)]
pub struct EchoModel;

impl ChatModel for EchoModel {
    fn name(&self) -> &str {
        "echo"
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let Some(prompt) = request.messages.iter().rev().find(|m| m.role == "user") else {
            return Ok(String::new());
        };
        let Some(start) = prompt.content.find(ORIGINAL_QUERY_HEADER) else {
            return Ok(String::new());
        };
        let body: Vec<&str> = prompt.content[start + ORIGINAL_QUERY_HEADER.len()..]
            .lines()
            .skip(1)
            .take_while(|l| !l.starts_with('#'))
            .collect();
        let query = body.join("\n").trim().to_string();
        if query.is_empty() {
            return Ok(String::new());
        }
        Ok(format!("```javascript\n{query}\n```"))
    }
}

/// One line of a script file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    /// Example id, or `*` for any example.
    pub id: String,
    pub stage: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    /// Simulated provider failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

type ReplyQueues = HashMap<(String, String), VecDeque<Result<String, ProviderError>>>;

/// Replays queued replies keyed by (example id, stage).
pub struct ScriptedModel {
    name: String,
    queues: Mutex<ReplyQueues>,
    fallback: Option<String>,
}

impl ScriptedModel {
    pub fn new(name: impl Into<String>) -> Self {
        ScriptedModel {
            name: name.into(),
            queues: Mutex::new(HashMap::new()),
            fallback: None,
        }
    }

    pub fn with_fallback(mut self, reply: impl Into<String>) -> Self {
        self.fallback = Some(reply.into());
        self
    }

    pub fn push(&self, id: &str, stage: &str, reply: Result<String, ProviderError>) {
        self.queues
            .lock()
            .expect("script lock")
            .entry((id.to_string(), stage.to_string()))
            .or_default()
            .push_back(reply);
    }

    pub fn reply(self, id: &str, stage: &str, text: &str) -> Self {
        self.push(id, stage, Ok(text.to_string()));
        self
    }

    pub fn fail(self, id: &str, stage: &str, message: &str) -> Self {
        self.push(id, stage, Err(ProviderError::new(message)));
        self
    }

    pub fn from_entries(name: impl Into<String>, entries: impl IntoIterator<Item = ScriptEntry>) -> Self {
        let model = ScriptedModel::new(name);
        for e in entries {
            let reply = match (e.reply, e.error) {
                (_, Some(err)) => Err(ProviderError::new(err)),
                (Some(r), None) => Ok(r),
                (None, None) => Ok(String::new()),
            };
            model.push(&e.id, &e.stage, reply);
        }
        model
    }

    /// Load a JSON-lines script; blank lines are skipped.
    pub fn from_jsonl(name: impl Into<String>, path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::new(format!("cannot read script {}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let entry: ScriptEntry = serde_json::from_str(line)
                .map_err(|e| ProviderError::new(format!("{}:{}: {e}", path.display(), i + 1)))?;
            entries.push(entry);
        }
        Ok(ScriptedModel::from_entries(name, entries))
    }

    pub fn remaining(&self) -> usize {
        self.queues
            .lock()
            .expect("script lock")
            .values()
            .map(VecDeque::len)
            .sum()
    }
}

impl ChatModel for ScriptedModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let mut queues = self.queues.lock().expect("script lock");
        for id in [request.example_id.as_str(), "*"] {
            if let Some(q) = queues.get_mut(&(id.to_string(), request.stage.clone())) {
                if let Some(reply) = q.pop_front() {
                    return reply;
                }
            }
        }
        self.fallback.clone().ok_or_else(|| {
            ProviderError::new(format!(
                "no scripted reply for {}/{}",
                request.example_id, request.stage
            ))
        })
    }
}

/// Client for an OpenAI-style chat-completion endpoint.
pub struct HttpChatModel {
    pub url: String,
    pub model: String,
    pub token_env: Option<String>,
    pub timeout: Duration,
}

impl ChatModel for HttpChatModel {
    fn name(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": request.messages,
            "temperature": request.temperature,
        });
        log::debug!("chat call {} {}/{}", self.model, request.example_id, request.stage);
        let reply = post_json(&self.url, self.token_env.as_deref(), &body, self.timeout)?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| ProviderError::new("response has no choices[0].message.content"))
    }
}

/// POST a JSON body, with a bearer token read from `token_env` when given.
pub fn post_json(
    url: &str,
    token_env: Option<&str>,
    body: &serde_json::Value,
    timeout: Duration,
) -> Result<serde_json::Value, ProviderError> {
    let client = reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| ProviderError::new(e.to_string()))?;
    let mut req = client.post(url).json(body);
    if let Some(var) = token_env {
        let token =
            std::env::var(var).map_err(|_| ProviderError::new(format!("environment variable {var} is not set")))?;
        req = req.bearer_auth(token);
    }
    let resp = req.send().map_err(|e| ProviderError::new(e.to_string()))?;
    let status = resp.status();
    let text = resp.text().map_err(|e| ProviderError::new(e.to_string()))?;
    if !status.is_success() {
        return Err(ProviderError {
            status: Some(status.as_u16()),
            message: text,
        });
    }
    serde_json::from_str(&text).map_err(|e| ProviderError {
        status: Some(status.as_u16()),
        message: e.to_string(),
    })
}

/// Provider settings as they appear in run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSpec {
    pub kind: String,
    pub url: Option<String>,
    pub model: Option<String>,
    /// Name of the environment variable holding the API token.
    pub token_env: Option<String>,
    pub timeout_secs: u64,
    /// Script file for the `scripted` kind.
    pub script: Option<PathBuf>,
    pub fallback: Option<String>,
}

impl Default for ProviderSpec {
    fn default() -> Self {
        ProviderSpec {
            kind: "echo".into(),
            url: None,
            model: None,
            token_env: None,
            timeout_secs: 120,
            script: None,
            fallback: None,
        }
    }
}

impl ProviderSpec {
    pub fn of_kind(kind: &str) -> Self {
        ProviderSpec {
            kind: kind.into(),
            ..Default::default()
        }
    }
}

type ChatFactory = Box<dyn Fn(&ProviderSpec) -> Result<Arc<dyn ChatModel>, ProviderError> + Send + Sync>;

/// Chat-model constructors by kind name.
pub struct ChatModelRegistry {
    factories: HashMap<String, ChatFactory>,
}

impl ChatModelRegistry {
    pub fn empty() -> Self {
        ChatModelRegistry {
            factories: HashMap::new(),
        }
    }

    pub fn register(
        &mut self,
        kind: &str,
        factory: impl Fn(&ProviderSpec) -> Result<Arc<dyn ChatModel>, ProviderError> + Send + Sync + 'static,
    ) {
        self.factories.insert(kind.to_string(), Box::new(factory));
    }

    pub fn kinds(&self) -> Vec<&str> {
        let mut k: Vec<&str> = self.factories.keys().map(String::as_str).collect();
        k.sort();
        k
    }

    pub fn build(&self, spec: &ProviderSpec) -> Result<Arc<dyn ChatModel>, ProviderError> {
        let factory = self
            .factories
            .get(&spec.kind)
            .ok_or_else(|| ProviderError::new(format!("unknown chat provider kind `{}`", spec.kind)))?;
        factory(spec)
    }
}

impl Default for ChatModelRegistry {
    fn default() -> Self {
        let mut r = ChatModelRegistry::empty();
        r.register("echo", |_| Ok(Arc::new(EchoModel)));
        r.register("scripted", |spec| {
            let path = spec
                .script
                .as_ref()
                .ok_or_else(|| ProviderError::new("scripted provider needs `script`"))?;
            let mut model = ScriptedModel::from_jsonl("scripted", path)?;
            if let Some(f) = &spec.fallback {
                model = model.with_fallback(f.clone());
            }
            Ok(Arc::new(model))
        });
        r.register("http", |spec| {
            Ok(Arc::new(HttpChatModel {
                url: spec
                    .url
                    .clone()
                    .ok_or_else(|| ProviderError::new("http provider needs `url`"))?,
                model: spec
                    .model
                    .clone()
                    .ok_or_else(|| ProviderError::new("http provider needs `model`"))?,
                token_env: spec.token_env.clone(),
                timeout: Duration::from_secs(spec.timeout_secs),
            }))
        });
        r
    }
}
