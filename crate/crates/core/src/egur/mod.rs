//! The experience-guided reasoning loop.
//!
//! For each question a guide model writes `k` candidate strategies, every
//! candidate runs from a fresh state and is verified, the first candidate's
//! answer is returned, and a consolidator model turns the resulting
//! experiences into edits of a persistent [`Context`].

mod consolidate;
mod context;
mod edits;
mod episode;
mod guide;
mod prompts;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use consolidate::{render_experiences, ConsolidationRecord};
pub use context::{
    canonical_strategy, task_signature, Context, ContextError, EntryStats, LibraryEntry, Note, RetentionPolicy,
    DEFAULT_MAX_ENTRIES, DEFAULT_MAX_NOTES,
};
pub use edits::{apply_edits, parse_edit_script, ApplyReport, Edit, EditParseError, Outcome};
pub use episode::{AnswerPhase, ContinualOutcome, EpisodeRecord, Experience, ExperienceLog, PhaseRecord};
pub use guide::{extract_strategy, GuideAttempt, GuideRecord};
pub use prompts::{
    describe_processes, render, PromptError, Prompts, CONSOLIDATOR_FILE, DEFAULT_CONSOLIDATOR_TEMPLATE,
    DEFAULT_GUIDE_TEMPLATE, DSL_GRAMMAR, GUIDE_EXAMPLES, GUIDE_FILE,
};

use crate::backends::{price, Backend, BackendError, CompletionRequest, LlmParams};
use crate::processes::ProcessRegistry;
use crate::semantics::{ChatMessage, CostLedger, FixBudget};

pub const DEFAULT_K: usize = 3;
pub const DEFAULT_BATCH_SIZE: usize = 10;
pub const DEFAULT_GUIDE_RETRIES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EgurConfig {
    /// Candidates per question.
    pub k: usize,
    pub batch_size: usize,
    pub fix_budget: FixBudget,
    /// Extra guide calls per slot after an unusable strategy.
    pub guide_retries: usize,
    pub seed: u64,
    /// Shuffle the stream before batching.
    pub shuffle: bool,
    /// Run candidates and batch members concurrently when the backend
    /// allows it.
    pub parallel: bool,
    pub guide_params: LlmParams,
    pub consolidator_params: LlmParams,
}

impl Default for EgurConfig {
    fn default() -> Self {
        let sampled = LlmParams { temperature: 1.0, ..LlmParams::default() };
        EgurConfig {
            k: DEFAULT_K,
            batch_size: DEFAULT_BATCH_SIZE,
            fix_budget: FixBudget::default(),
            guide_retries: DEFAULT_GUIDE_RETRIES,
            seed: 0,
            shuffle: true,
            parallel: true,
            guide_params: sampled,
            consolidator_params: LlmParams::default(),
        }
    }
}

impl EgurConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err("k must be at least 1".into());
        }
        if self.batch_size == 0 {
            return Err("batch size must be at least 1".into());
        }
        self.guide_params.validate().map_err(|e| format!("guide: {e}"))?;
        self.consolidator_params.validate().map_err(|e| format!("consolidator: {e}"))
    }
}

/// Everything the loop needs. `backend` serves the guide and the
/// consolidator; strategies call whatever backends `registry` holds.
#[derive(Clone)]
pub struct Egur {
    pub backend: Arc<dyn Backend>,
    pub registry: Arc<ProcessRegistry>,
    pub prompts: Prompts,
    pub config: EgurConfig,
}

impl Egur {
    pub fn new(backend: Arc<dyn Backend>, registry: Arc<ProcessRegistry>) -> Self {
        Egur { backend, registry, prompts: Prompts::default(), config: EgurConfig::default() }
    }

    pub fn with_config(mut self, config: EgurConfig) -> Self {
        self.config = config;
        self
    }

    pub fn with_prompts(mut self, prompts: Prompts) -> Self {
        self.prompts = prompts;
        self
    }

    fn concurrent(&self) -> bool {
        self.config.parallel && !self.backend.is_order_sensitive()
    }

    fn system_call(
        &self,
        messages: &[ChatMessage],
        params: &LlmParams,
        partition: &str,
        seed: u64,
        label: &str,
        ledger: &mut CostLedger,
    ) -> Result<String, BackendError> {
        let c = self.backend.complete(&CompletionRequest { messages, params, partition, seed })?;
        let usd = price(c.input_tokens, c.output_tokens, &self.backend.pricing());
        ledger.record(label, c.input_tokens, c.output_tokens, usd);
        Ok(c.text)
    }
}

/// Seed derived from a base seed and a path of labels.
pub fn derive_seed(base: u64, parts: &[&str]) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}
