//! Chat-completion backends and the cached query path.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::json;
use slrx_core::PromptBundle;
use thiserror::Error;

use crate::cache::{completion_key, CachedCompletion, CompletionCache, Usage};
use crate::transport::{JsonClient, RetryPolicy, TransportError};

pub const DEFAULT_ENDPOINT: &str = "https://openrouter.ai/api/v1";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("provider error: {0}")]
    Provider(String),
    #[error("request rejected with HTTP {status}: {body}")]
    Request { status: u16, body: String },
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl LlmError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Provider(_) => "ProviderError",
            Self::Request { .. } => "RequestError",
            Self::Timeout(_) => "TimeoutError",
            Self::Config(_) => "ConfigError",
        }
    }
}

impl From<TransportError> for LlmError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Timeout(m) => Self::Timeout(m),
            TransportError::Status { status, body } if status != 429 && status < 500 => {
                Self::Request { status, body }
            }
            other => Self::Provider(other.to_string()),
        }
    }
}

/// Per-model request settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_base_ms")]
    pub backoff_base_ms: u64,
}

fn default_max_output_tokens() -> u32 {
    256
}
fn default_timeout_secs() -> u64 {
    120
}
fn default_max_retries() -> u32 {
    3
}
fn default_backoff_base_ms() -> u64 {
    1000
}

impl LlmConfig {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            temperature: 0.0,
            max_output_tokens: default_max_output_tokens(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            backoff_base_ms: default_backoff_base_ms(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.model_id.trim().is_empty() {
            return Err(LlmError::Config("model_id must not be empty".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::Config("temperature must be >= 0".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(LlmError::Config(
                "max_output_tokens must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            backoff_base_ms: self.backoff_base_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCompletion {
    pub text: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub latency_ms: u64,
    pub from_cache: bool,
}

/// A backend that answers one prompt.
pub trait ChatModel: Send + Sync {
    fn complete(
        &self,
        config: &LlmConfig,
        prompt: &PromptBundle,
    ) -> Result<RawCompletion, LlmError>;

    /// Requests sent over the network so far.
    fn network_calls(&self) -> u64 {
        0
    }
}

/// OpenAI-compatible `/chat/completions` client (OpenRouter by default).
#[derive(Debug)]
pub struct HttpChatModel {
    client: JsonClient,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

impl HttpChatModel {
    pub fn new(
        endpoint: &str,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, LlmError> {
        let client = JsonClient::new(endpoint, api_key, timeout)
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self { client })
    }

    pub fn request_body(config: &LlmConfig, prompt: &PromptBundle) -> serde_json::Value {
        json!({
            "model": config.model_id,
            "temperature": config.temperature,
            "max_tokens": config.max_output_tokens,
            "messages": [
                {"role": "system", "content": prompt.system_text},
                {"role": "user", "content": prompt.user_text},
            ],
        })
    }
}

impl ChatModel for HttpChatModel {
    fn complete(
        &self,
        config: &LlmConfig,
        prompt: &PromptBundle,
    ) -> Result<RawCompletion, LlmError> {
        let started = Instant::now();
        let body = Self::request_body(config, prompt);
        let resp: ChatResponse =
            self.client
                .post_json("chat/completions", &body, &config.retry_policy())?;
        let text = resp
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| LlmError::Provider("response has no choices".into()))?
            .message
            .content
            .unwrap_or_default();
        let usage = resp.usage;
        Ok(RawCompletion {
            text,
            prompt_tokens: usage.as_ref().and_then(|u| u.prompt_tokens),
            completion_tokens: usage.as_ref().and_then(|u| u.completion_tokens),
            latency_ms: started.elapsed().as_millis() as u64,
            from_cache: false,
        })
    }

    fn network_calls(&self) -> u64 {
        self.client.attempts()
    }
}

/// Splits a rendered user message back into its option ids/labels and its
/// context text. Only understands prompts produced by `build_prompt`.
fn prompt_parts(user_text: &str) -> Option<(Vec<(String, String)>, String)> {
    let answers_start = user_text.find("\n\nANSWERS:\n")? + "\n\nANSWERS:\n".len();
    let answers_end = answers_start + user_text[answers_start..].find("\n\nCONTEXT:")?;
    let items: Vec<String> = serde_json::from_str(&user_text[answers_start..answers_end]).ok()?;
    let plain = !items.iter().any(|i| i.contains(": "));
    let options = items
        .into_iter()
        .map(|item| match item.split_once(": ") {
            Some((id, label)) if !plain => (id.to_string(), label.to_string()),
            _ => (item.clone(), item),
        })
        .collect();
    let context = user_text[answers_end + "\n\nCONTEXT:".len()..]
        .lines()
        .filter(|l| !l.starts_with("--- CHUNK "))
        .collect::<Vec<_>>()
        .join("\n");
    Some((options, context))
}

/// True if `needle` occurs in `hay` with no alphanumeric character directly
/// on either side.
fn contains_word(hay: &str, needle: &str) -> bool {
    hay.match_indices(needle).any(|(i, m)| {
        let before = hay[..i].chars().next_back();
        let after = hay[i + m.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    })
}

/// Offline stand-in that selects every option whose label appears verbatim
/// in the prompt's context.
#[derive(Debug, Default)]
pub struct RuleBasedModel {
    calls: AtomicU64,
}

impl RuleBasedModel {
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn answer(user_text: &str) -> String {
        match prompt_parts(user_text) {
            Some((options, context)) => slrx_core::extraction::json_string_array(
                options
                    .iter()
                    .filter(|(_, label)| contains_word(&context, label))
                    .map(|(id, _)| id),
            ),
            None => "I could not read the prompt.".to_string(),
        }
    }
}

impl ChatModel for RuleBasedModel {
    fn complete(
        &self,
        _config: &LlmConfig,
        prompt: &PromptBundle,
    ) -> Result<RawCompletion, LlmError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(RawCompletion {
            text: Self::answer(&prompt.user_text),
            prompt_tokens: None,
            completion_tokens: None,
            latency_ms: 0,
            from_cache: false,
        })
    }
}

/// One canned reply for the scripted model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    /// Only applies to this model when set.
    #[serde(default)]
    pub model_id: Option<String>,
    /// Substring that must occur in the user message; empty matches all.
    #[serde(default)]
    pub contains: String,
    pub response: String,
}

/// Offline fixtures file: `{"rules": [...]}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
}

/// Replies with the first matching scripted rule and falls back to
/// [`RuleBasedModel`].
#[derive(Debug, Default)]
pub struct ScriptedModel {
    script: MockScript,
    calls: AtomicU64,
}

impl ScriptedModel {
    pub fn new(script: MockScript) -> Self {
        Self {
            script,
            calls: AtomicU64::new(0),
        }
    }

    /// A model that always answers `text`.
    pub fn canned(text: impl Into<String>) -> Self {
        Self::new(MockScript {
            rules: vec![ScriptRule {
                model_id: None,
                contains: String::new(),
                response: text.into(),
            }],
        })
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl ChatModel for ScriptedModel {
    fn complete(
        &self,
        config: &LlmConfig,
        prompt: &PromptBundle,
    ) -> Result<RawCompletion, LlmError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let text = self
            .script
            .rules
            .iter()
            .find(|r| {
                r.model_id.as_deref().is_none_or(|m| m == config.model_id)
                    && prompt.user_text.contains(&r.contains)
            })
            .map(|r| r.response.clone())
            .unwrap_or_else(|| RuleBasedModel::answer(&prompt.user_text));
        Ok(RawCompletion {
            text,
            prompt_tokens: None,
            completion_tokens: None,
            latency_ms: 0,
            from_cache: false,
        })
    }
}

/// A chat model behind the completion cache.
#[derive(Clone)]
pub struct LlmClient {
    model: Arc<dyn ChatModel>,
    cache: Option<Arc<CompletionCache>>,
}

impl LlmClient {
    pub fn new(model: Arc<dyn ChatModel>, cache: Option<Arc<CompletionCache>>) -> Self {
        Self { model, cache }
    }

    pub fn model(&self) -> &Arc<dyn ChatModel> {
        &self.model
    }

    pub fn cache(&self) -> Option<&Arc<CompletionCache>> {
        self.cache.as_ref()
    }

    /// Answer `prompt`, consulting the cache before touching the backend and
    /// storing successful replies after.
    pub fn query_llm(
        &self,
        config: &LlmConfig,
        prompt: &PromptBundle,
    ) -> Result<RawCompletion, LlmError> {
        config.validate()?;
        let Some(cache) = &self.cache else {
            return self.model.complete(config, prompt);
        };
        let key = completion_key(&config.model_id, &prompt.system_text, &prompt.user_text);
        let (entry, hit) = cache.get_or_compute(&key, || {
            let raw = self.model.complete(config, prompt)?;
            Ok::<_, LlmError>(CachedCompletion {
                request_digest: key.clone(),
                model_id: config.model_id.clone(),
                response_text: raw.text,
                usage: Usage {
                    prompt_tokens: raw.prompt_tokens,
                    completion_tokens: raw.completion_tokens,
                },
                latency_ms: raw.latency_ms,
                timestamp: Utc::now(),
            })
        })?;
        Ok(RawCompletion {
            text: entry.response_text,
            prompt_tokens: entry.usage.prompt_tokens,
            completion_tokens: entry.usage.completion_tokens,
            latency_ms: if hit { 0 } else { entry.latency_ms },
            from_cache: hit,
        })
    }
}
