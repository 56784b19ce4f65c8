//! Chat-completion backend over HTTP.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use super::{Backend, BackendError, Completion, CompletionRequest, LlmParams, PricingTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HttpBackendConfig {
    pub endpoint_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// First backoff delay; doubles with each retry.
    #[serde(default = "default_backoff")]
    pub retry_backoff_ms: u64,
    #[serde(default)]
    pub pricing: PricingTable,
    /// Append every exchange to this JSONL file.
    #[serde(default)]
    pub record_path: Option<PathBuf>,
}

fn default_timeout() -> f64 {
    120.0
}

fn default_retries() -> u32 {
    3
}

fn default_backoff() -> u64 {
    500
}

impl HttpBackendConfig {
    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        HttpBackendConfig {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            api_key_env: None,
            request_timeout_secs: default_timeout(),
            max_retries: default_retries(),
            retry_backoff_ms: default_backoff(),
            pricing: PricingTable::default(),
            record_path: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.endpoint_url.trim().is_empty() {
            return Err("endpointUrl is empty".into());
        }
        if !(self.request_timeout_secs > 0.0) || !self.request_timeout_secs.is_finite() {
            return Err("requestTimeout must be positive".into());
        }
        if self.model_name.trim().is_empty() {
            return Err("modelName is empty".into());
        }
        Ok(())
    }
}

/// Provider constraints applied to a request before it is sent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelRule {
    pub supports_thinking: bool,
    /// Temperature the provider requires whenever thinking is on.
    pub thinking_temperature: Option<f64>,
}

impl ModelRule {
    pub fn for_model(model: &str) -> ModelRule {
        let m = model.to_ascii_lowercase();
        if m.contains("claude") {
            ModelRule { supports_thinking: true, thinking_temperature: Some(1.0) }
        } else if m.contains("qwen") || m.contains("gpt-oss") {
            ModelRule { supports_thinking: true, thinking_temperature: None }
        } else {
            ModelRule { supports_thinking: false, thinking_temperature: None }
        }
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    recorder: Option<Mutex<File>>,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        config.validate().map_err(BackendError::Config)?;
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| BackendError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.request_timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        let recorder = match &config.record_path {
            Some(path) => Some(Mutex::new(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?,
            )),
            None => None,
        };
        Ok(HttpBackend { config, client, api_key, recorder })
    }

    /// JSON body sent for a request.
    pub fn request_body(&self, req: &CompletionRequest<'_>) -> Json {
        build_body(&self.config.model_name, req.messages, req.params, req.seed)
    }

    fn record(&self, body: &Json, status: u16, response: &str) {
        let Some(rec) = &self.recorder else { return };
        let response: Json = serde_json::from_str(response).unwrap_or_else(|_| Json::String(response.into()));
        let line = json!({ "request": body, "status": status, "response": response });
        let mut f = rec.lock().unwrap_or_else(|p| p.into_inner());
        if let Err(e) = writeln!(f, "{line}") {
            log::warn!("could not record exchange: {e}");
        }
    }

    fn send_once(&self, body: &Json) -> Result<(u16, String), BackendError> {
        let mut rb = self.client.post(&self.config.endpoint_url).json(body);
        if let Some(key) = &self.api_key {
            rb = rb.bearer_auth(key);
        }
        let resp = rb.send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok((status, text))
    }
}

pub(crate) fn build_body(model: &str, messages: &[crate::semantics::ChatMessage], params: &LlmParams, seed: u64) -> Json {
    let rule = ModelRule::for_model(model);
    let mut temperature = params.temperature;
    let mut thinking = None;
    if params.thinking {
        if rule.supports_thinking {
            if let Some(t) = rule.thinking_temperature {
                if t != temperature {
                    log::warn!("{model} requires temperature {t} with thinking; overriding {temperature}");
                    temperature = t;
                }
            }
            thinking = Some(json!({ "type": "enabled", "budget_tokens": params.thinking_budget }));
        } else {
            log::warn!("{model} has no thinking mode; ignoring the thinking flag");
        }
    }
    let mut body = json!({
        "model": model,
        "messages": messages,
        "temperature": temperature,
        "max_tokens": params.max_tokens,
        "seed": seed,
    });
    if let Some(t) = thinking {
        body["thinking"] = t;
    }
    body
}

/// Extracts the reply text and usage counts from a response body.
pub(crate) fn parse_response(text: &str) -> Result<Completion, BackendError> {
    let v: Json = serde_json::from_str(text).map_err(|e| BackendError::Malformed(e.to_string()))?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(Json::as_str)
        .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))?;
    let usage = |key: &str| {
        v.pointer(&format!("/usage/{key}"))
            .and_then(Json::as_u64)
            .ok_or_else(|| BackendError::Malformed(format!("missing usage.{key}")))
    };
    Ok(Completion::new(content, usage("prompt_tokens")?, usage("completion_tokens")?))
}

fn retryable(err: &BackendError) -> bool {
    match err {
        BackendError::Status { status, .. } => *status == 429 || *status >= 500,
        BackendError::Transport(_) | BackendError::Timeout => true,
        _ => false,
    }
}

impl Backend for HttpBackend {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        req.params.validate().map_err(BackendError::Config)?;
        let body = self.request_body(req);
        let mut attempt = 0;
        loop {
            let outcome = self.send_once(&body).and_then(|(status, text)| {
                self.record(&body, status, &text);
                if status >= 400 {
                    Err(BackendError::Status { status, body: text.chars().take(500).collect() })
                } else {
                    parse_response(&text)
                }
            });
            match outcome {
                Err(e) if retryable(&e) && attempt < self.config.max_retries => {
                    let delay = self.config.retry_backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::warn!("request failed ({e}); retry {} in {delay} ms", attempt + 1);
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn pricing(&self) -> PricingTable {
        self.config.pricing
    }
}
