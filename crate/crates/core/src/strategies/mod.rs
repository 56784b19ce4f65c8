//! The builtin strategies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::backends::LlmParams;
use crate::lang::{Expr, Program, Value};
use crate::processes::{ParamSpec, ToolKind, STANDARD_TOOLS};

pub const DEFAULT_SAMPLES: usize = 10;
pub const DEFAULT_EVAL_OPT_ROUNDS: usize = 5;
pub const DEFAULT_CODEACT_ROUNDS: usize = 20;

pub const COT_SYSTEM: &str = "Solve the problem. Think step by step, then give your final answer \
on a single line as 'FINAL ANSWER: <answer>' with no trailing text.";

pub const CODE_SYSTEM: &str = "Solve the problem by writing a program. Reply with the program in a \
single fenced code block. It will be executed once and its printed output is your answer, so it \
must print a line of the form 'FINAL ANSWER: <answer>'.";

pub const EVAL_OPT_SYSTEM: &str = "Solve the problem. Think step by step, then give your final \
answer on a single line as 'FINAL ANSWER: <answer>' with no trailing text. If a reviewer points \
out problems, address them and give a corrected final answer in the same format.";

pub const CODEACT_SYSTEM: &str = "Solve the problem by iteratively writing and executing code.

Rules:
- Reply with code inside a single fenced code block. The code will be executed for you; anything \
you print will be returned to you next round.
- Read the execution result, then decide how to proceed. Iterate until you have solved the problem.
- When ready, return the solution exactly as: FINAL ANSWER: <answer>
  (Write it directly, outside any code block.)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinName {
    Cot,
    SelfConsistency,
    Code,
    EvalOpt,
    Codeact,
}

impl BuiltinName {
    pub const ALL: [BuiltinName; 5] =
        [BuiltinName::Cot, BuiltinName::SelfConsistency, BuiltinName::Code, BuiltinName::EvalOpt, BuiltinName::Codeact];

    pub fn as_str(self) -> &'static str {
        match self {
            BuiltinName::Cot => "cot",
            BuiltinName::SelfConsistency => "self_consistency",
            BuiltinName::Code => "code",
            BuiltinName::EvalOpt => "eval_opt",
            BuiltinName::Codeact => "codeact",
        }
    }
}

impl fmt::Display for BuiltinName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StrategyError {
    #[error("unknown builtin strategy `{0}` (expected cot, self_consistency, code, eval_opt or codeact)")]
    UnknownName(String),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
}

impl FromStr for BuiltinName {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        BuiltinName::ALL
            .into_iter()
            .find(|n| n.as_str() == key)
            .ok_or_else(|| StrategyError::UnknownName(s.to_owned()))
    }
}

/// A builtin strategy and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinSpec {
    pub name: BuiltinName,
    /// Parallel samples (self-consistency only).
    pub samples: Option<usize>,
    /// Round limit (eval_opt and codeact only).
    pub max_rounds: Option<usize>,
    pub llm: Option<LlmParams>,
}

impl BuiltinSpec {
    pub fn new(name: BuiltinName) -> Self {
        BuiltinSpec { name, samples: None, max_rounds: None, llm: None }
    }

    pub fn samples(mut self, n: usize) -> Self {
        self.samples = Some(n);
        self
    }

    pub fn max_rounds(mut self, n: usize) -> Self {
        self.max_rounds = Some(n);
        self
    }

    pub fn llm(mut self, p: LlmParams) -> Self {
        self.llm = Some(p);
        self
    }

    pub fn validate(&self) -> Result<(), StrategyError> {
        let bad = |m: String| Err(StrategyError::InvalidParams(m));
        match (self.name, self.samples, self.max_rounds) {
            (BuiltinName::SelfConsistency, Some(0), _) => return bad("samples must be at least 1".into()),
            (n, Some(_), _) if n != BuiltinName::SelfConsistency => {
                return bad(format!("{n} takes no samples parameter"));
            }
            (BuiltinName::EvalOpt | BuiltinName::Codeact, _, Some(0)) => {
                return bad("maxRounds must be at least 1".into());
            }
            (n, _, Some(_)) if !matches!(n, BuiltinName::EvalOpt | BuiltinName::Codeact) => {
                return bad(format!("{n} takes no maxRounds parameter"));
            }
            _ => {}
        }
        if let Some(p) = &self.llm {
            p.validate().map_err(StrategyError::InvalidParams)?;
        }
        Ok(())
    }

    /// User state the strategy expects at start: prompts, round limits and
    /// sampling parameters, read by the LLM processes.
    pub fn initial_state(&self) -> Value {
        let mut m: BTreeMap<String, Value> = BTreeMap::new();
        let mut set = |k: &str, v: Value| {
            m.insert(k.to_owned(), v);
        };
        match self.name {
            BuiltinName::Cot => set("system", COT_SYSTEM.into()),
            BuiltinName::SelfConsistency => {
                set("system", COT_SYSTEM.into());
                set("temperature", 0.7.into());
            }
            BuiltinName::Code => set("system", CODE_SYSTEM.into()),
            BuiltinName::EvalOpt => {
                set("system", EVAL_OPT_SYSTEM.into());
                set("max_rounds", (self.max_rounds.unwrap_or(DEFAULT_EVAL_OPT_ROUNDS) as f64).into());
            }
            BuiltinName::Codeact => {
                set("system", CODEACT_SYSTEM.into());
                set("max_rounds", (self.max_rounds.unwrap_or(DEFAULT_CODEACT_ROUNDS) as f64).into());
                set("reprompt", true.into());
                set("prompt_template", "Problem: {input}".into());
                set("followup_template", "The output of executing the generated code is:\n{input}".into());
            }
        }
        if let Some(p) = &self.llm {
            set("temperature", p.temperature.into());
            set("max_tokens", (p.max_tokens as f64).into());
            set("thinking", p.thinking.into());
            set("thinking_budget", (p.thinking_budget as f64).into());
        }
        Value::Map(m)
    }
}

/// The bare program of a builtin strategy.
pub fn build_builtin(spec: &BuiltinSpec) -> Result<Program, StrategyError> {
    spec.validate()?;
    let call = || Program::base("CallLLM");
    Ok(match spec.name {
        BuiltinName::Cot => call(),
        BuiltinName::SelfConsistency => {
            let n = spec.samples.unwrap_or(DEFAULT_SAMPLES);
            Program::seq(balanced_par(n, &call), Program::base("MajorityVote"))
        }
        BuiltinName::Code => Program::seq(
            call(),
            Program::if_(Program::base("ContainsCode"), Program::base("ExecCode"), Program::ret()),
        ),
        BuiltinName::EvalOpt => Program::fix(
            "Eval-Opt",
            Program::seq(
                Program::base("CallOptLLM"),
                Program::if_(Program::base("EvalLLM"), Program::ret(), Program::rec("Eval-Opt")),
            ),
        ),
        BuiltinName::Codeact => Program::fix(
            "CodeAct",
            Program::seq(
                call(),
                Program::if_(
                    Program::base("ContainsCode"),
                    Program::seq(Program::base("ExecCode"), Program::rec("CodeAct")),
                    Program::ret(),
                ),
            ),
        ),
    })
}

/// The builtin preceded by `put` of its initial state, so it runs
/// self-contained from an empty state.
pub fn build_with_prelude(spec: &BuiltinSpec) -> Result<Program, StrategyError> {
    Ok(with_prelude(spec.initial_state(), build_builtin(spec)?))
}

/// `put <state>; p`.
pub fn with_prelude(state: Value, p: Program) -> Program {
    Program::seq(Program::put(Expr::lit(state)), p)
}

/// `n` copies of a program joined by a balanced tree of `||`, leaves in
/// left-to-right order.
pub fn balanced_par(n: usize, leaf: &dyn Fn() -> Program) -> Program {
    assert!(n >= 1);
    if n == 1 {
        return leaf();
    }
    let left = n.div_ceil(2);
    Program::par(balanced_par(left, leaf), balanced_par(n - left, leaf))
}

/// Structural features of a strategy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Classification {
    pub parallelization: bool,
    pub conditionals: bool,
    pub recursion: bool,
    pub tools: BTreeSet<ToolKind>,
}

impl Classification {
    /// Pipeline, workflow or agent.
    pub fn kind(&self) -> &'static str {
        if self.recursion {
            "agent"
        } else if self.conditionals {
            "workflow"
        } else {
            "pipeline"
        }
    }
}

/// Classifies a program from its syntax, resolving tool classes of the
/// standard processes.
pub fn classify(p: &Program) -> Classification {
    let tools = p
        .base_processes()
        .iter()
        .filter_map(|n| STANDARD_TOOLS.iter().find(|(name, _)| name == n).map(|(_, t)| *t))
        .collect();
    Classification { parallelization: p.has_par(), conditionals: p.has_if(), recursion: p.has_fix(), tools }
}

#[derive(Debug, Clone, Serialize)]
pub struct BuiltinInfo {
    pub name: BuiltinName,
    pub params: Vec<ParamSpec>,
    pub classification: Classification,
}

pub fn list_builtins() -> Vec<BuiltinInfo> {
    let samples = ParamSpec { name: "samples", kind: "count", doc: "parallel samples (default 10)" };
    let rounds = |doc| ParamSpec { name: "maxRounds", kind: "count", doc };
    let llm = ParamSpec { name: "llmParams", kind: "LlmParams", doc: "temperature, maxTokens, thinking, thinkingBudget" };
    BuiltinName::ALL
        .into_iter()
        .map(|name| {
            let mut params = match name {
                BuiltinName::SelfConsistency => vec![samples.clone()],
                BuiltinName::EvalOpt => vec![rounds("optimizer rounds before forced acceptance (default 5)")],
                BuiltinName::Codeact => vec![rounds("rounds before a final answer is demanded (default 20)")],
                _ => vec![],
            };
            params.push(llm.clone());
            let program = build_builtin(&BuiltinSpec::new(name)).expect("defaults are valid");
            BuiltinInfo { name, params, classification: classify(&program) }
        })
        .collect()
}
