//! Model gateway: a scripted mock for tests and offline runs, and an
//! OpenAI-compatible HTTP client for chat completions and embeddings.
//!
//! All network traffic to model endpoints goes through this module.

use std::fs;
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::retriever::{EmbeddingBackend, RetrieveError};

pub const BASE_URL_ENV: &str = "SOLFIX_LLM_BASE_URL";
pub const MODEL_ENV: &str = "SOLFIX_LLM_MODEL";
pub const API_KEY_ENV: &str = "SOLFIX_LLM_API_KEY";
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;
pub const MAX_RETRIES: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub prompt: String,
    pub model: String,
    pub temperature: f64,
    pub max_output: Option<u32>,
}

impl LlmRequest {
    pub fn new(prompt: impl Into<String>, model: impl Into<String>) -> Self {
        LlmRequest {
            prompt: prompt.into(),
            model: model.into(),
            temperature: 0.0,
            max_output: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    pub provider: String,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LlmError {
    #[error("model provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("mock transcript exhausted after {0} response(s)")]
    TranscriptExhausted(usize),
    #[error("mock transcript entry {index} expects the prompt to contain `{hint}`")]
    TranscriptMismatch { index: usize, hint: String },
    #[error("invalid mock transcript {path}: {reason}")]
    BadTranscript { path: String, reason: String },
}

pub trait LlmProvider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_hint: Option<String>,
    pub response: String,
}

/// Replays scripted responses strictly in order.
#[derive(Debug)]
pub struct MockProvider {
    entries: Vec<TranscriptEntry>,
    cursor: Mutex<usize>,
}

impl MockProvider {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        MockProvider {
            entries,
            cursor: Mutex::new(0),
        }
    }

    pub fn from_responses<S: AsRef<str>>(responses: &[S]) -> Self {
        Self::new(
            responses
                .iter()
                .map(|r| TranscriptEntry {
                    match_hint: None,
                    response: r.as_ref().to_string(),
                })
                .collect(),
        )
    }

    /// Line-delimited JSON of [`TranscriptEntry`]; blank lines are ignored.
    pub fn parse(jsonl: &str, origin: &str) -> Result<Self, LlmError> {
        let mut entries = Vec::new();
        for (i, line) in jsonl.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: TranscriptEntry = serde_json::from_str(line).map_err(|err| LlmError::BadTranscript {
                path: origin.to_string(),
                reason: format!("line {}: {err}", i + 1),
            })?;
            entries.push(e);
        }
        Ok(Self::new(entries))
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path).map_err(|e| LlmError::BadTranscript {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn consumed(&self) -> usize {
        *self.cursor.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl LlmProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let mut cursor = self.cursor.lock().unwrap_or_else(|e| e.into_inner());
        let entry = self
            .entries
            .get(*cursor)
            .ok_or(LlmError::TranscriptExhausted(*cursor))?;
        if let Some(hint) = &entry.match_hint {
            if !req.prompt.contains(hint.as_str()) {
                return Err(LlmError::TranscriptMismatch {
                    index: *cursor + 1,
                    hint: hint.clone(),
                });
            }
        }
        *cursor += 1;
        Ok(LlmResponse {
            text: entry.response.clone(),
            provider: self.name().to_string(),
            latency_ms: 0,
        })
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct InFlight {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(n: usize) -> Self {
        InFlight {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpSettings {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl HttpSettings {
    /// Reads base URL, model and key from the environment, falling back to
    /// the given values.
    pub fn from_env(base_url: Option<String>, model: Option<String>, api_key: Option<String>) -> Option<Self> {
        let base_url = std::env::var(BASE_URL_ENV).ok().or(base_url)?;
        let model = std::env::var(MODEL_ENV).ok().or(model)?;
        Some(HttpSettings {
            base_url,
            model,
            api_key: std::env::var(API_KEY_ENV).ok().or(api_key),
            timeout: Duration::from_secs(120),
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
        })
    }
}

#[derive(Debug)]
enum Failure {
    Transient(String),
    Fatal(String),
}

/// JSON POST client with retries and a shared in-flight cap.
#[derive(Debug)]
struct HttpClient {
    settings: HttpSettings,
    client: reqwest::blocking::Client,
    in_flight: InFlight,
    backoff: Duration,
}

impl HttpClient {
    fn new(settings: HttpSettings) -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(settings.timeout)
            .build()
            .map_err(|e| e.to_string())?;
        Ok(HttpClient {
            in_flight: InFlight::new(settings.max_in_flight),
            settings,
            client,
            backoff: Duration::from_millis(500),
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.settings.base_url.trim_end_matches('/'), path)
    }

    fn post_once(&self, url: &str, body: &serde_json::Value) -> Result<serde_json::Value, Failure> {
        let mut req = self.client.post(url).json(body);
        if let Some(key) = &self.settings.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Failure::Transient(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Failure::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(Failure::Fatal(format!(
                "HTTP {status}: {}",
                text.chars().take(300).collect::<String>()
            )));
        }
        resp.json()
            .map_err(|e| Failure::Fatal(format!("invalid JSON response: {e}")))
    }

    fn post(&self, path: &str, body: &serde_json::Value) -> Result<serde_json::Value, String> {
        let _permit = self.in_flight.acquire();
        let url = self.url(path);
        let mut attempt = 0;
        loop {
            match self.post_once(&url, body) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transient(e)) if attempt >= MAX_RETRIES => {
                    return Err(format!("{e} (after {MAX_RETRIES} retries)"))
                }
                Err(Failure::Transient(e)) => {
                    let wait = self.backoff * 2u32.pow(attempt);
                    log::warn!("request to {url} failed ({e}); retrying in {wait:?}");
                    thread::sleep(wait);
                    attempt += 1;
                }
            }
        }
    }
}

/// Chat-completion provider for OpenAI-compatible endpoints.
#[derive(Debug)]
pub struct HttpChatProvider {
    http: HttpClient,
}

impl HttpChatProvider {
    pub fn new(settings: HttpSettings) -> Result<Self, LlmError> {
        Ok(HttpChatProvider {
            http: HttpClient::new(settings).map_err(LlmError::ProviderUnavailable)?,
        })
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.http.backoff = backoff;
        self
    }

    pub fn model(&self) -> &str {
        &self.http.settings.model
    }
}

impl LlmProvider for HttpChatProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let model = if req.model.is_empty() {
            self.model()
        } else {
            req.model.as_str()
        };
        let mut body = json!({
            "model": model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
        });
        if let Some(max) = req.max_output {
            body["max_tokens"] = json!(max);
        }
        let started = Instant::now();
        let v = self
            .http
            .post("chat/completions", &body)
            .map_err(LlmError::ProviderUnavailable)?;
        let text = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| LlmError::ProviderUnavailable("response has no choices[0].message.content".into()))?;
        Ok(LlmResponse {
            text: text.to_string(),
            provider: format!("http:{model}"),
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}

/// Embedding backend for OpenAI-compatible `/embeddings` endpoints.
#[derive(Debug)]
pub struct HttpEmbeddings {
    http: HttpClient,
}

impl HttpEmbeddings {
    pub fn new(settings: HttpSettings) -> Result<Self, RetrieveError> {
        Ok(HttpEmbeddings {
            http: HttpClient::new(settings).map_err(RetrieveError::BackendUnavailable)?,
        })
    }
}

impl EmbeddingBackend for HttpEmbeddings {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, RetrieveError> {
        let body = json!({"model": self.http.settings.model, "input": texts});
        let v = self
            .http
            .post("embeddings", &body)
            .map_err(RetrieveError::BackendUnavailable)?;
        let data = v["data"]
            .as_array()
            .ok_or_else(|| RetrieveError::BackendUnavailable("response has no data array".into()))?;
        data.iter()
            .map(|d| {
                d["embedding"]
                    .as_array()
                    .and_then(|xs| {
                        xs.iter()
                            .map(|x| x.as_f64().map(|f| f as f32))
                            .collect::<Option<Vec<_>>>()
                    })
                    .ok_or_else(|| RetrieveError::BackendUnavailable("malformed embedding".into()))
            })
            .collect()
    }
}
