//! Run configuration file.
//!
//! One JSON document. Relative paths are resolved against the directory
//! holding the file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slrx_core::{ChunkingParams, EmbeddingProviderSpec, HashEmbedder};
use thiserror::Error;

use crate::llm::{LlmConfig, DEFAULT_ENDPOINT};

#[derive(Debug, Error)]
#[error("config error: {0}")]
pub struct ConfigError(pub String);

/// Which embedding backend to use. `name = "hash"` without an endpoint
/// selects the built-in hashing embedder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub name: String,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_max_input_tokens")]
    pub max_input_tokens: usize,
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Model name sent to the endpoint; defaults to `name`.
    #[serde(default)]
    pub model: Option<String>,
    /// Environment variable holding the endpoint's key; defaults to the
    /// run's `api_key_env`.
    #[serde(default)]
    pub api_key_env: Option<String>,
}

fn default_dim() -> usize {
    HashEmbedder::DIM
}
fn default_max_input_tokens() -> usize {
    512
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            name: HashEmbedder::NAME.to_string(),
            dim: default_dim(),
            max_input_tokens: default_max_input_tokens(),
            endpoint: None,
            model: None,
            api_key_env: None,
        }
    }
}

impl EmbeddingConfig {
    pub fn is_builtin_hash(&self) -> bool {
        self.endpoint.is_none() && self.name == HashEmbedder::NAME
    }

    pub fn spec(&self) -> EmbeddingProviderSpec {
        EmbeddingProviderSpec {
            name: self.name.clone(),
            dim: self.dim,
            max_input_tokens: self.max_input_tokens,
            endpoint: self.endpoint.clone(),
        }
    }
}

/// Request settings shared by every model in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSettings {
    pub endpoint: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
}

impl Default for LlmSettings {
    fn default() -> Self {
        let base = LlmConfig::new("");
        Self {
            endpoint: DEFAULT_ENDPOINT.to_string(),
            temperature: base.temperature,
            max_output_tokens: base.max_output_tokens,
            timeout_secs: base.timeout_secs,
            max_retries: base.max_retries,
            backoff_base_ms: base.backoff_base_ms,
        }
    }
}

impl LlmSettings {
    pub fn for_model(&self, model_id: &str) -> LlmConfig {
        LlmConfig {
            model_id: model_id.to_string(),
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
            timeout_secs: self.timeout_secs,
            max_retries: self.max_retries,
            backoff_base_ms: self.backoff_base_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus_path: PathBuf,
    pub entries_path: PathBuf,
    pub model_ids: Vec<String>,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub chunking: ChunkingParams,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default = "default_output_path")]
    pub output_path: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub llm: LlmSettings,
    /// Scripted replies for `--offline` runs.
    #[serde(default)]
    pub offline_fixtures: Option<PathBuf>,
}

fn default_k() -> usize {
    3
}
fn default_cache_dir() -> PathBuf {
    PathBuf::from("cache")
}
fn default_output_path() -> PathBuf {
    PathBuf::from("results.jsonl")
}
fn default_parallelism() -> usize {
    4
}
fn default_api_key_env() -> String {
    "OPENROUTER_API_KEY".to_string()
}

impl RunConfig {
    /// A config with defaults for everything but the inputs and models.
    pub fn new(
        corpus_path: impl Into<PathBuf>,
        entries_path: impl Into<PathBuf>,
        model_ids: Vec<String>,
    ) -> Self {
        Self {
            corpus_path: corpus_path.into(),
            entries_path: entries_path.into(),
            model_ids,
            embedding: EmbeddingConfig::default(),
            chunking: ChunkingParams::default(),
            k: default_k(),
            cache_dir: default_cache_dir(),
            output_path: default_output_path(),
            parallelism: default_parallelism(),
            api_key_env: default_api_key_env(),
            llm: LlmSettings::default(),
            offline_fixtures: None,
        }
    }

    /// Read a config file and resolve its relative paths.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let mut config: Self = serde_json::from_str(&text)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.corpus_path,
            &mut self.entries_path,
            &mut self.cache_dir,
            &mut self.output_path,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(p) = &mut self.offline_fixtures {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Check invariants and that input paths exist.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.model_ids.is_empty() {
            return Err(ConfigError("model_ids must not be empty".into()));
        }
        if let Some(m) = self.model_ids.iter().find(|m| m.trim().is_empty()) {
            return Err(ConfigError(format!("invalid model id {m:?}")));
        }
        if self.k == 0 {
            return Err(ConfigError("k must be at least 1".into()));
        }
        if self.parallelism == 0 {
            return Err(ConfigError("parallelism must be at least 1".into()));
        }
        self.chunking
            .validate()
            .map_err(|e| ConfigError(e.to_string()))?;
        if self.embedding.dim == 0 || self.embedding.max_input_tokens == 0 {
            return Err(ConfigError(
                "embedding dim and max_input_tokens must be positive".into(),
            ));
        }
        if self.llm.temperature.is_nan() || self.llm.temperature < 0.0 {
            return Err(ConfigError("temperature must be >= 0".into()));
        }
        for (what, p) in [
            ("corpus_path", &self.corpus_path),
            ("entries_path", &self.entries_path),
        ] {
            if !p.exists() {
                return Err(ConfigError(format!(
                    "{what} {} does not exist",
                    p.display()
                )));
            }
        }
        if let Some(p) = &self.offline_fixtures {
            if !p.exists() {
                return Err(ConfigError(format!(
                    "offline_fixtures {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}
