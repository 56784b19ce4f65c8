//! LLM backends and pricing.

mod http;
mod pricing;
mod scripted;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use http::{HttpBackend, HttpBackendConfig, ModelRule};
pub use pricing::{price, PricingTable};
pub use scripted::{load_script, ScriptEntry, ScriptedBackend};

use crate::semantics::ChatMessage;

/// Sampling parameters for one LLM call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LlmParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub thinking: bool,
    pub thinking_budget: u32,
}

impl Default for LlmParams {
    fn default() -> Self {
        LlmParams { temperature: 0.0, max_tokens: 20_000, thinking: false, thinking_budget: 10_000 }
    }
}

impl LlmParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.max_tokens == 0 {
            return Err("maxTokens must be at least 1".into());
        }
        if self.thinking_budget > self.max_tokens {
            return Err(format!(
                "thinkingBudget {} exceeds maxTokens {}",
                self.thinking_budget, self.max_tokens
            ));
        }
        Ok(())
    }
}

pub struct CompletionRequest<'a> {
    pub messages: &'a [ChatMessage],
    pub params: &'a LlmParams,
    /// Routing label, `/`-separated, e.g. `exec/task-3/2`.
    pub partition: &'a str,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Completion {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl Completion {
    pub fn new(text: impl Into<String>, input_tokens: u64, output_tokens: u64) -> Self {
        Completion { text: text.into(), input_tokens, output_tokens }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("queue exhausted for partition `{0}`")]
    QueueExhausted(String),
    #[error("request timed out")]
    Timeout,
    #[error("HTTP status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
    #[error("{0}")]
    Other(String),
}

pub trait Backend: Send + Sync {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, BackendError>;

    fn pricing(&self) -> PricingTable;

    /// True when replies depend on the order calls arrive in, so callers
    /// must issue calls in a fixed order to stay deterministic.
    fn is_order_sensitive(&self) -> bool {
        false
    }
}

type Responder = dyn Fn(&CompletionRequest<'_>) -> Result<Completion, BackendError> + Send + Sync;

/// Backend answering with a closure. Replies depend only on the request.
pub struct FnBackend {
    responder: Box<Responder>,
    pricing: PricingTable,
}

impl FnBackend {
    pub fn new(
        pricing: PricingTable,
        f: impl Fn(&CompletionRequest<'_>) -> Result<Completion, BackendError> + Send + Sync + 'static,
    ) -> Self {
        FnBackend { responder: Box::new(f), pricing }
    }

    pub fn shared(self) -> Arc<dyn Backend> {
        Arc::new(self)
    }
}

impl Backend for FnBackend {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        (self.responder)(req)
    }

    fn pricing(&self) -> PricingTable {
        self.pricing
    }
}
