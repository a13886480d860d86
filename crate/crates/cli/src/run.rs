use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::Utc;
use indexmap::IndexMap;
use serde::de::DeserializeOwned;
use serde::Serialize;
use text2nosql::engine::{load_database, DocumentDatabase};

use crate::config::RunConfig;
use crate::CliError;

/// Output directory of one run with its manifest.
pub struct RunDir {
    pub id: String,
    pub path: PathBuf,
    command: String,
    started_at: String,
    resumed: bool,
    inputs: IndexMap<String, String>,
}

impl RunDir {
    pub fn open(root: &Path, id: Option<&str>, resume: bool, command: &str) -> Result<Self, CliError> {
        let now = Utc::now();
        let id = match id {
            Some(id) => id.to_string(),
            None if resume => return Err(CliError::Usage("--resume needs --run-id".into())),
            None => format!("{command}-{}", now.format("%Y%m%dT%H%M%S%.3fZ")),
        };
        if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
            return Err(CliError::Usage(format!("invalid run id `{id}`")));
        }
        let path = root.join(&id);
        match (path.exists(), resume) {
            (true, false) => {
                return Err(CliError::Usage(format!(
                    "run `{id}` already exists; pass --resume to continue it"
                )))
            }
            (false, true) => return Err(CliError::Missing(format!("no run `{id}` under {}", root.display()))),
            _ => {}
        }
        fs::create_dir_all(&path).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
        Ok(RunDir {
            id,
            path,
            command: command.into(),
            started_at: now.to_rfc3339(),
            resumed: resume,
            inputs: IndexMap::new(),
        })
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.inputs.insert(name.into(), path.display().to_string());
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Write `manifest.json`; called at start with no outcome and again at the end.
    pub fn write_manifest(
        &self,
        config: &RunConfig,
        outcome: Option<(i32, serde_json::Value)>,
    ) -> Result<(), CliError> {
        let (status, exit_code, summary) = match outcome {
            None => ("running", None, serde_json::Value::Null),
            Some((0, s)) => ("complete", Some(0), s),
            Some((c, s)) => ("failed", Some(c), s),
        };
        let manifest = serde_json::json!({
            "run_id": self.id,
            "command": self.command,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "started_at": self.started_at,
            "finished_at": outcome_time(exit_code),
            "resumed": self.resumed,
            "status": status,
            "exit_code": exit_code,
            "inputs": self.inputs,
            "config": config,
            "summary": summary,
        });
        write_json(&self.file("manifest.json"), &manifest)
    }
}

fn outcome_time(code: Option<i32>) -> Option<String> {
    code.map(|_| Utc::now().to_rfc3339())
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Missing(format!("{}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::Missing(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| CliError::Usage(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let fail = |e: std::io::Error| CliError::Failed(format!("{}: {e}", path.display()));
    let mut file = std::io::BufWriter::new(fs::File::create(path).map_err(fail)?);
    for item in items {
        serde_json::to_writer(&mut file, item).expect("serializable");
        file.write_all(b"\n").map_err(fail)?;
    }
    file.flush().map_err(fail)
}

/// Every subdirectory or `.json` file of `dir` is one database, named by its stem.
pub fn load_databases(dir: &Path) -> Result<IndexMap<String, DocumentDatabase>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Missing(format!("databases {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_dir() || p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut out = IndexMap::new();
    for path in paths {
        let db = load_database(&path).map_err(|e| CliError::Usage(e.to_string()))?;
        out.insert(db.name.clone(), db);
    }
    Ok(out)
}
