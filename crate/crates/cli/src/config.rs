use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use text2nosql::provider::ProviderSpec;
use text2nosql::retrieval::{EmbedderSpec, RetrievalWeights, DEFAULT_K};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub temperature: f64,
    pub max_in_flight: usize,
    pub k: usize,
    pub excerpt_rows: usize,
    pub questions_per_query: usize,
    pub weights: RetrievalWeights,
    pub paths: Paths,
    pub chat: ChatTiers,
    pub embedding: EmbedderSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            temperature: 0.0,
            max_in_flight: 4,
            k: DEFAULT_K,
            excerpt_rows: 5,
            questions_per_query: 5,
            weights: RetrievalWeights::default(),
            paths: Paths::default(),
            chat: ChatTiers::default(),
            embedding: EmbedderSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub databases: PathBuf,
    pub library: PathBuf,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            databases: "databases".into(),
            library: "library.bin".into(),
            output: "runs".into(),
        }
    }
}

/// `small` serves schema prediction, initial generation and second-tier
/// debugging; `large` serves refinement, optimization and the top tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChatTiers {
    pub small: ProviderSpec,
    pub large: ProviderSpec,
    /// Question-extension providers; empty means `small` and `large`.
    pub extenders: Vec<ProviderSpec>,
}

impl Default for ChatTiers {
    fn default() -> Self {
        ChatTiers {
            small: ProviderSpec::of_kind("echo"),
            large: ProviderSpec::of_kind("echo"),
            extenders: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Missing(format!("config {}: {e}", path.display())))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        config.resolve_relative(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    /// Paths in a config file are relative to the file.
    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.databases);
        fix(&mut self.paths.library);
        fix(&mut self.paths.output);
        for spec in [&mut self.chat.small, &mut self.chat.large]
            .into_iter()
            .chain(self.chat.extenders.iter_mut())
        {
            if let Some(s) = spec.script.as_mut() {
                fix(s);
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.weights.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(CliError::Usage(format!(
                "temperature {} is outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_in_flight == 0 {
            return Err(CliError::Usage("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c: RunConfig = toml::from_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.k, 20);
        assert_eq!(
            c.weights,
            RetrievalWeights {
                w_nlq: 1.0,
                w_other: 0.3
            }
        );
        assert_eq!(c.temperature, 0.0);
    }

    #[test]
    fn nested_tables() {
        let c: RunConfig = toml::from_str(
            "k = 5\n[weights]\nw_nlq = 2.0\nw_other = 0.5\n[chat.large]\nkind = \"http\"\nurl = \"http://x\"\ntoken_env = \"KEY\"\n",
        )
        .unwrap();
        assert_eq!(c.k, 5);
        assert_eq!(c.weights.w_other, 0.5);
        assert_eq!(c.chat.large.kind, "http");
        assert_eq!(c.chat.small.kind, "echo");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("colour = 1").is_err());
    }
}
