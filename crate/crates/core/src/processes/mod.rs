//! Base processes: the registry and its standard entries.

mod code;
mod llm;
mod text;
mod verify;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

pub use code::{exec_code, CodeRunner, ExecError, ExternalRunner, DEFAULT_EXEC_TIMEOUT};
pub use llm::{llm_call, LlmProcess, LlmRole, FORCED_FINAL_PROMPT, REPROMPT_TEXT};
pub use text::{
    answer_text, extract_code_blocks, extract_final_answer, majority_vote, normalize_answer,
    normalize_ws, CodeBlocks,
};
pub use verify::{parse_assignment, verify_3sat, verify_exact, BinaryVerdict, VerifyError};

use crate::backends::{Backend, BackendError, LlmParams};
use crate::lang::Value;
use crate::semantics::{CostLedger, RunState, Usd};

#[derive(Debug, thiserror::Error)]
pub enum ProcessError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("token budget exceeded: {used} output tokens > maxTokens {max}")]
    TokenBudgetExceeded { used: u64, max: u32 },
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("{0}")]
    Failed(String),
}

/// Handle a base process receives for one invocation.
pub struct ProcessCall<'a> {
    pub state: &'a mut RunState,
    /// Seed for any sampling done by this call.
    pub seed: u64,
    pub name: &'a str,
    cost: CostLedger,
}

impl<'a> ProcessCall<'a> {
    pub fn new(state: &'a mut RunState, seed: u64, name: &'a str) -> Self {
        ProcessCall { state, seed, name, cost: CostLedger::zero() }
    }

    /// Adds a charge to this invocation's cost.
    pub fn charge(&mut self, input_tokens: u64, output_tokens: u64, usd: Usd) {
        self.cost.record(self.name, input_tokens, output_tokens, usd);
    }

    pub fn cost(&self) -> &CostLedger {
        &self.cost
    }

    pub fn into_cost(self) -> CostLedger {
        self.cost
    }
}

/// A stateful primitive: `(input, state) -> (output, state)`.
pub trait BaseProcess: Send + Sync {
    fn call(&self, input: &Value, call: &mut ProcessCall<'_>) -> Result<Value, ProcessError>;
}

impl<F> BaseProcess for F
where
    F: Fn(&Value, &mut ProcessCall<'_>) -> Result<Value, ProcessError> + Send + Sync,
{
    fn call(&self, input: &Value, call: &mut ProcessCall<'_>) -> Result<Value, ProcessError> {
        self(input, call)
    }
}

/// Tool classes used to classify strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ToolKind {
    #[serde(rename = "LLM")]
    Llm,
    /// Code interpreter.
    #[serde(rename = "CI")]
    Ci,
}

impl fmt::Display for ToolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ToolKind::Llm => "LLM",
            ToolKind::Ci => "CI",
        })
    }
}

/// Tool class of every standard process that uses a tool.
pub const STANDARD_TOOLS: &[(&str, ToolKind)] = &[
    ("CallLLM", ToolKind::Llm),
    ("CallOptLLM", ToolKind::Llm),
    ("EvalLLM", ToolKind::Llm),
    ("ExecCode", ToolKind::Ci),
];

/// Names of the standard processes.
pub const STANDARD_PROCESSES: &[&str] =
    &["CallLLM", "CallOptLLM", "ContainsCode", "EvalLLM", "ExecCode", "ExtractAnswer", "MajorityVote"];

/// State components a process may touch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Access {
    pub conversation: bool,
    pub exec_env: bool,
    pub user_state: bool,
}

impl Access {
    pub const NONE: Access = Access { conversation: false, exec_env: false, user_state: false };
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Footprint {
    pub reads: Access,
    pub writes: Access,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: &'static str,
    pub doc: &'static str,
}

#[derive(Clone)]
pub struct ProcessEntry {
    pub handler: Arc<dyn BaseProcess>,
    /// Charged on every invocation in addition to any token cost.
    pub flat_cost: Usd,
    pub footprint: Footprint,
    pub tool: Option<ToolKind>,
    pub description: String,
    pub params: Vec<ParamSpec>,
}

impl ProcessEntry {
    pub fn new(handler: impl BaseProcess + 'static) -> Self {
        ProcessEntry {
            handler: Arc::new(handler),
            flat_cost: Usd::ZERO,
            footprint: Footprint::default(),
            tool: None,
            description: String::new(),
            params: Vec::new(),
        }
    }

    pub fn describe(mut self, d: impl Into<String>) -> Self {
        self.description = d.into();
        self
    }

    pub fn tool(mut self, t: ToolKind) -> Self {
        self.tool = Some(t);
        self
    }

    pub fn footprint(mut self, reads: Access, writes: Access) -> Self {
        self.footprint = Footprint { reads, writes };
        self
    }

    pub fn flat_cost(mut self, usd: Usd) -> Self {
        self.flat_cost = usd;
        self
    }

    pub fn params(mut self, params: Vec<ParamSpec>) -> Self {
        self.params = params;
        self
    }
}

/// Name-indexed base processes.
#[derive(Clone, Default)]
pub struct ProcessRegistry {
    entries: BTreeMap<String, ProcessEntry>,
}

impl fmt::Debug for ProcessRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.entries.keys()).finish()
    }
}

/// Shared dependencies of the standard processes.
#[derive(Clone)]
pub struct ProcessDeps {
    pub backend: Arc<dyn Backend>,
    pub params: LlmParams,
    pub runner: CodeRunner,
}

impl ProcessDeps {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        ProcessDeps { backend, params: LlmParams::default(), runner: CodeRunner::default() }
    }
}

const STATE_PARAMS: &[ParamSpec] = &[
    ParamSpec { name: "system", kind: "text", doc: "system prompt for a fresh conversation" },
    ParamSpec { name: "temperature", kind: "number", doc: "sampling temperature in [0, 2]" },
    ParamSpec { name: "max_tokens", kind: "number", doc: "reply token limit" },
    ParamSpec { name: "thinking", kind: "bool", doc: "enable extended thinking" },
    ParamSpec { name: "thinking_budget", kind: "number", doc: "thinking token limit" },
    ParamSpec { name: "max_rounds", kind: "number", doc: "round after which a final answer is demanded" },
    ParamSpec { name: "reprompt", kind: "bool", doc: "re-ask once when a reply has neither code nor an answer" },
    ParamSpec { name: "prompt_template", kind: "text", doc: "first user turn, with {input} replaced by the input" },
    ParamSpec { name: "followup_template", kind: "text", doc: "later user turns, with {input} replaced by the input" },
];

impl ProcessRegistry {
    pub fn new() -> Self {
        ProcessRegistry::default()
    }

    /// The standard processes: `CallLLM`, `CallOptLLM`, `EvalLLM`,
    /// `ContainsCode`, `ExecCode`, `ExtractAnswer` and `MajorityVote`.
    pub fn standard(deps: ProcessDeps) -> Self {
        let mut r = ProcessRegistry::new();
        let conv = Access { conversation: true, ..Access::NONE };
        let conv_state = Access { conversation: true, user_state: true, ..Access::NONE };
        for (name, role, doc) in [
            ("CallLLM", LlmRole::Plain, "send the input as a user turn; output the reply"),
            ("CallOptLLM", LlmRole::Optimizer, "like CallLLM, but answers pending feedback instead of adding a turn"),
            ("EvalLLM", LlmRole::Evaluator, "ask a judge about the latest reply; output true on PASS, else append its critique"),
        ] {
            let proc = LlmProcess::new(Arc::clone(&deps.backend), deps.params, role);
            r.register(
                name,
                ProcessEntry::new(proc)
                    .describe(doc)
                    .tool(ToolKind::Llm)
                    .footprint(conv_state, conv)
                    .params(STATE_PARAMS.to_vec()),
            );
        }
        r.register(
            "ContainsCode",
            ProcessEntry::new(|input: &Value, _: &mut ProcessCall<'_>| {
                Ok(Value::Bool(!extract_code_blocks(&input.render_plain()).blocks.is_empty()))
            })
            .describe("true when the input holds a fenced code block"),
        );
        let runner = deps.runner.clone();
        r.register(
            "ExecCode",
            ProcessEntry::new(move |input: &Value, call: &mut ProcessCall<'_>| {
                let text = input.render_plain();
                let blocks = extract_code_blocks(&text);
                let code = if blocks.blocks.is_empty() { text } else { blocks.blocks.join("\n") };
                let out = exec_code(&runner, &code, &mut call.state.exec_env)?;
                Ok(Value::Text(out))
            })
            .describe("run the input's code blocks; output what they print")
            .tool(ToolKind::Ci)
            .footprint(
                Access { exec_env: true, ..Access::NONE },
                Access { exec_env: true, ..Access::NONE },
            ),
        );
        r.register(
            "ExtractAnswer",
            ProcessEntry::new(|input: &Value, _: &mut ProcessCall<'_>| Ok(Value::Text(answer_text(input))))
                .describe("output the text after the last FINAL ANSWER: marker"),
        );
        r.register(
            "MajorityVote",
            ProcessEntry::new(|input: &Value, _: &mut ProcessCall<'_>| {
                let mut answers = Vec::new();
                flatten_answers(input, &mut answers);
                majority_vote(&answers)
                    .map(Value::Text)
                    .map_err(|e| ProcessError::InvalidInput(e.to_string()))
            })
            .describe("most common final answer among the (nested) list of replies"),
        );
        r
    }

    pub fn register(&mut self, name: impl Into<String>, entry: ProcessEntry) -> &mut Self {
        self.entries.insert(name.into(), entry);
        self
    }

    pub fn get(&self, name: &str) -> Option<&ProcessEntry> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ProcessEntry> {
        self.entries.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> BTreeSet<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &ProcessEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Tool classes used by the named processes.
    pub fn tools_of<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> BTreeSet<ToolKind> {
        names.into_iter().filter_map(|n| self.get(n).and_then(|e| e.tool)).collect()
    }
}

fn flatten_answers(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::List(items) => items.iter().for_each(|i| flatten_answers(i, out)),
        other => out.push(answer_text(other)),
    }
}
