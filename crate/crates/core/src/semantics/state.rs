//! Per-episode run state.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::cost::CostLedger;
use super::expr::RtValue;
use super::trace::TraceEvent;
use crate::lang::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

/// Code-runner environment. Definitions made by one execution stay visible
/// to later executions in the same episode.
#[derive(Debug, Clone, Default)]
pub struct ExecEnv {
    pub(crate) bindings: BTreeMap<String, RtValue>,
    /// Source accepted so far by an external runner, replayed before each
    /// new snippet.
    pub(crate) prelude: String,
    /// Output the prelude produced when it last ran.
    pub(crate) prelude_output: String,
    pub(crate) executions: usize,
}

impl ExecEnv {
    pub fn executions(&self) -> usize {
        self.executions
    }

    pub fn binding_names(&self) -> impl Iterator<Item = &str> {
        self.bindings.keys().map(String::as_str)
    }
}

/// State threaded through a run: conversation log, code-runner environment,
/// trace, cost ledger and the user state read by `get` and written by `put`.
#[derive(Debug, Clone)]
pub struct RunState {
    pub conversation: Vec<ChatMessage>,
    pub exec_env: ExecEnv,
    pub trace: Vec<TraceEvent>,
    pub cost: CostLedger,
    pub user_state: Value,
    /// Seed from which every stochastic call's seed is derived.
    pub seed: u64,
    /// Label routing backend calls, e.g. to a scripted queue.
    pub partition: String,
    /// Keep rendered inputs and outputs on trace events for replay.
    pub retain_payloads: bool,
    /// Position of the current branch inside nested forks, e.g. `LR`.
    pub(crate) branch_path: String,
}

impl Default for RunState {
    fn default() -> Self {
        RunState::new(0)
    }
}

impl RunState {
    pub fn new(seed: u64) -> Self {
        RunState {
            conversation: Vec::new(),
            exec_env: ExecEnv::default(),
            trace: Vec::new(),
            cost: CostLedger::zero(),
            user_state: Value::Null,
            seed,
            partition: String::new(),
            retain_payloads: true,
            branch_path: String::new(),
        }
    }

    pub fn with_user_state(mut self, v: Value) -> Self {
        self.user_state = v;
        self
    }

    pub fn with_partition(mut self, p: impl Into<String>) -> Self {
        self.partition = p.into();
        self
    }

    pub fn with_retention(mut self, retain: bool) -> Self {
        self.retain_payloads = retain;
        self
    }

    /// Seed for the next call, a function of the run seed, the branch path
    /// and the trace position only.
    pub fn call_seed(&self) -> u64 {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(self.branch_path.as_bytes());
        h.update((self.trace.len() as u64).to_le_bytes());
        let out = h.finalize();
        u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
    }

    /// Number of assistant turns in the conversation.
    pub fn assistant_turns(&self) -> usize {
        self.conversation.iter().filter(|m| m.role == Role::Assistant).count()
    }

    /// Fresh state for one side of a fork: deep copies of everything
    /// except the trace and ledger, which start empty.
    pub(crate) fn fork(&self, side: char) -> RunState {
        RunState {
            conversation: self.conversation.clone(),
            exec_env: self.exec_env.clone(),
            trace: Vec::new(),
            cost: CostLedger::zero(),
            user_state: self.user_state.clone(),
            seed: self.seed,
            partition: self.partition.clone(),
            retain_payloads: self.retain_payloads,
            branch_path: format!("{}{}{side}", self.branch_path, self.trace.len()),
        }
    }
}
