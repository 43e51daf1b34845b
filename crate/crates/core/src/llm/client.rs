//! A minimal chat-completion client with retries.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::LlmError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: "assistant".into(), content: content.into() }
    }
}

/// Where and how to reach the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: f64,
    /// Attempts after the first on transient failures.
    pub max_retries: u32,
    pub backoff_ms: u64,
    /// Longer replies are cut to this many characters before parsing.
    pub max_response_chars: usize,
    pub api_key: Option<String>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://localhost:11434/v1".into(),
            model: "gpt-oss:20b".into(),
            temperature: 0.7,
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_ms: 500,
            max_response_chars: 4000,
            api_key: None,
        }
    }
}

impl EndpointConfig {
    /// Defaults overridden by `ANCHORNEG_LLM_BASE_URL`, `_MODEL`,
    /// `_TEMPERATURE`, `_TIMEOUT_SECS`, `_MAX_RETRIES` and `_API_KEY`.
    pub fn from_env() -> Result<Self, LlmError> {
        let mut cfg = EndpointConfig::default();
        let var = |name: &str| std::env::var(format!("ANCHORNEG_LLM_{name}")).ok();
        let bad = |name: &str, v: &str| LlmError::Config(format!("ANCHORNEG_LLM_{name}={v} is not valid"));
        if let Some(v) = var("BASE_URL") {
            cfg.base_url = v;
        }
        if let Some(v) = var("MODEL") {
            cfg.model = v;
        }
        if let Some(v) = var("TEMPERATURE") {
            cfg.temperature = v.parse().map_err(|_| bad("TEMPERATURE", &v))?;
        }
        if let Some(v) = var("TIMEOUT_SECS") {
            cfg.timeout_secs = v.parse().map_err(|_| bad("TIMEOUT_SECS", &v))?;
        }
        if let Some(v) = var("MAX_RETRIES") {
            cfg.max_retries = v.parse().map_err(|_| bad("MAX_RETRIES", &v))?;
        }
        cfg.api_key = var("API_KEY");
        Ok(cfg)
    }

    pub fn url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// A failed HTTP exchange, before retry policy is applied.
#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    Timeout,
    Connect(String),
    Status { code: u16, body: String },
}

impl TransportError {
    fn transient(&self) -> bool {
        match self {
            TransportError::Timeout | TransportError::Connect(_) => true,
            TransportError::Status { code, .. } => *code == 429 || *code >= 500,
        }
    }
}

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportError::Timeout => f.write_str("timed out"),
            TransportError::Connect(e) => write!(f, "connection failed: {e}"),
            TransportError::Status { code, body } => write!(f, "HTTP {code}: {body}"),
        }
    }
}

/// Sends one JSON body and returns the response body.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, body: &str, config: &EndpointConfig) -> Result<String, TransportError>;
}

/// HTTP transport.
#[derive(Debug, Default)]
pub struct UreqTransport;

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, body: &str, config: &EndpointConfig) -> Result<String, TransportError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let mut request = agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = &config.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            other => TransportError::Connect(other.to_string()),
        })?;
        let code = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            other => TransportError::Connect(other.to_string()),
        })?;
        if (200..300).contains(&code) {
            Ok(text)
        } else {
            Err(TransportError::Status { code, body: text.chars().take(500).collect() })
        }
    }
}

/// Replays canned transport results and records every request body.
#[derive(Debug, Default)]
pub struct ScriptedTransport {
    replies: Mutex<VecDeque<Result<String, TransportError>>>,
    requests: Mutex<Vec<String>>,
}

impl ScriptedTransport {
    pub fn new(replies: impl IntoIterator<Item = Result<String, TransportError>>) -> Self {
        ScriptedTransport { replies: Mutex::new(replies.into_iter().collect()), requests: Mutex::default() }
    }

    /// Wraps assistant texts in well-formed completion bodies.
    pub fn with_contents<S: AsRef<str>>(contents: impl IntoIterator<Item = S>) -> Self {
        Self::new(contents.into_iter().map(|c| Ok(completion_body(c.as_ref()))))
    }

    pub fn requests(&self) -> Vec<String> {
        self.requests.lock().expect("lock").clone()
    }
}

impl Transport for ScriptedTransport {
    fn post_json(&self, _url: &str, body: &str, _config: &EndpointConfig) -> Result<String, TransportError> {
        self.requests.lock().expect("lock").push(body.to_string());
        self.replies
            .lock()
            .expect("lock")
            .pop_front()
            .unwrap_or_else(|| Err(TransportError::Connect("script exhausted".into())))
    }
}

/// A response body in the common chat-completion shape.
pub fn completion_body(content: &str) -> String {
    serde_json::json!({ "choices": [{ "message": { "role": "assistant", "content": content } }] }).to_string()
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: &'a [ChatMessage],
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

pub struct ChatClient {
    pub config: EndpointConfig,
    transport: Box<dyn Transport>,
}

impl std::fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatClient").field("config", &self.config).finish_non_exhaustive()
    }
}

impl ChatClient {
    pub fn new(config: EndpointConfig, transport: Box<dyn Transport>) -> Self {
        ChatClient { config, transport }
    }

    pub fn http(config: EndpointConfig) -> Self {
        Self::new(config, Box::new(UreqTransport))
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.config.temperature = temperature;
        self
    }

    /// One assistant reply for `messages`.
    pub fn chat_complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        chat_complete(&self.config, self.transport.as_ref(), messages)
    }
}

/// Posts `messages` and returns the first choice's content. Transient
/// failures are retried with doubling backoff up to `max_retries` times.
pub fn chat_complete(
    config: &EndpointConfig,
    transport: &dyn Transport,
    messages: &[ChatMessage],
) -> Result<String, LlmError> {
    let body =
        serde_json::to_string(&CompletionRequest { model: &config.model, temperature: config.temperature, messages })
            .map_err(|e| LlmError::Config(e.to_string()))?;
    let url = config.url();
    let attempts = config.max_retries + 1;
    let mut delay = Duration::from_millis(config.backoff_ms);
    let mut last = TransportError::Timeout;
    for attempt in 1..=attempts {
        match transport.post_json(&url, &body, config) {
            Ok(text) => return extract_content(&text, config.max_response_chars),
            Err(e) if e.transient() => {
                log::warn!("chat completion attempt {attempt}/{attempts} failed: {e}");
                last = e;
                if attempt < attempts {
                    std::thread::sleep(delay);
                    delay *= 2;
                }
            }
            Err(TransportError::Status { code, body }) => return Err(LlmError::Status { code, body }),
            Err(e) => return Err(LlmError::Transport(e.to_string())),
        }
    }
    Err(match last {
        TransportError::Timeout => LlmError::Timeout { attempts },
        other => LlmError::RetriesExhausted { attempts, last: other.to_string() },
    })
}

fn extract_content(text: &str, limit: usize) -> Result<String, LlmError> {
    let parsed: CompletionResponse =
        serde_json::from_str(text).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
    let content = parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| LlmError::MalformedResponse("no choices[0].message.content".into()))?;
    if content.chars().count() > limit {
        log::warn!("truncating {}-character reply to {limit}", content.chars().count());
        return Ok(content.chars().take(limit).collect());
    }
    Ok(content)
}
