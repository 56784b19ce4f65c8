//! The program interpreter.

use std::time::Instant;

use super::cost::CostLedger;
use super::expr::{eval_expr_with, Env, EvalError, EvalLimits};
use super::state::RunState;
use super::trace::{digest, TraceEvent, PAR_EVENT};
use crate::lang::{Program, ProgramKind, Span, Value};
use crate::processes::{ProcessCall, ProcessError, ProcessRegistry};

/// Default bound on recursive unrolling.
pub const DEFAULT_FIX_DEPTH: usize = 25;
/// Largest accepted bound on recursive unrolling.
pub const MAX_FIX_DEPTH: usize = 256;

/// Bound on how many times a `recfun` may be unrolled inside itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct FixBudget {
    max_depth: usize,
}

impl TryFrom<usize> for FixBudget {
    type Error = String;

    fn try_from(n: usize) -> Result<Self, String> {
        FixBudget::new(n)
    }
}

impl From<FixBudget> for usize {
    fn from(b: FixBudget) -> usize {
        b.max_depth
    }
}

impl Default for FixBudget {
    fn default() -> Self {
        FixBudget { max_depth: DEFAULT_FIX_DEPTH }
    }
}

impl FixBudget {
    pub fn new(max_depth: usize) -> Result<Self, String> {
        if max_depth == 0 {
            return Err("fix depth must be at least 1".into());
        }
        if max_depth > MAX_FIX_DEPTH {
            return Err(format!("fix depth must be at most {MAX_FIX_DEPTH}"));
        }
        Ok(FixBudget { max_depth })
    }

    pub fn max_depth(self) -> usize {
        self.max_depth
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("unknown process `{0}`")]
    UnknownProcess(String),
    #[error("{}:{}: {source}", span.line, span.column)]
    Expr { source: EvalError, span: Span },
    #[error("fix budget exhausted: `{name}` unrolled more than {max_depth} times")]
    FixBudgetExhausted { name: String, max_depth: usize },
    #[error("unbound recursion variable `{0}`")]
    UnboundRecursion(String),
    #[error("condition produced {found}, expected a boolean")]
    NonBooleanCondition { found: &'static str },
    #[error("process `{process}` failed: {source}")]
    Process { process: String, source: ProcessError },
}

impl RunError {
    pub fn is_fix_budget(&self) -> bool {
        matches!(self, RunError::FixBudgetExhausted { .. })
    }
}

/// A failed run together with the state reached, including the partial
/// trace and every cost incurred before the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub error: RunError,
    pub state: RunState,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} trace events)", self.error, self.state.trace.len())
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Runs `p` on `input` and returns the output with the final state.
pub fn run(
    p: &Program,
    input: Value,
    state: RunState,
    registry: &ProcessRegistry,
    budget: FixBudget,
) -> Result<(Value, RunState), RunFailure> {
    let mut state = state;
    match Interpreter::new(registry).with_budget(budget).run(p, input, &mut state) {
        Ok(v) => Ok((v, state)),
        Err(error) => Err(RunFailure { error, state }),
    }
}

#[derive(Clone)]
struct FixFrame<'p> {
    name: &'p str,
    body: &'p Program,
    depth: usize,
}

/// Interpreter configuration. Cheap to copy.
#[derive(Clone, Copy)]
pub struct Interpreter<'r> {
    registry: &'r ProcessRegistry,
    budget: FixBudget,
    parallel: bool,
    limits: EvalLimits,
}

impl<'r> Interpreter<'r> {
    pub fn new(registry: &'r ProcessRegistry) -> Self {
        Interpreter { registry, budget: FixBudget::default(), parallel: false, limits: EvalLimits::default() }
    }

    pub fn with_budget(mut self, budget: FixBudget) -> Self {
        self.budget = budget;
        self
    }

    /// Run the two sides of a fork on separate threads. Traces, states and
    /// outputs do not depend on this setting as long as every process is
    /// insensitive to call order.
    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn with_eval_limits(mut self, limits: EvalLimits) -> Self {
        self.limits = limits;
        self
    }

    /// Runs `p`, updating `state` in place. On error `state` holds
    /// everything recorded up to the failure.
    pub fn run(&self, p: &Program, input: Value, state: &mut RunState) -> Result<Value, RunError> {
        let mut fixes = Vec::new();
        self.exec(p, input, state, &mut fixes)
    }

    fn exec<'p>(
        &self,
        p: &'p Program,
        input: Value,
        state: &mut RunState,
        fixes: &mut Vec<FixFrame<'p>>,
    ) -> Result<Value, RunError> {
        match &p.kind {
            ProgramKind::Return => {
                record(state, "return", &input, &input, CostLedger::zero(), Instant::now());
                Ok(input)
            }
            ProgramKind::Get => {
                let out = state.user_state.clone();
                record(state, "get", &input, &out, CostLedger::zero(), Instant::now());
                Ok(out)
            }
            ProgramKind::Pure(e) => {
                let start = Instant::now();
                let out = self.eval(e, &input, p.span)?;
                record(state, "pure", &input, &out, CostLedger::zero(), start);
                Ok(out)
            }
            ProgramKind::Put(e) => {
                let start = Instant::now();
                let new_state = self.eval(e, &input, p.span)?;
                state.user_state = new_state;
                record(state, "put", &input, &input, CostLedger::zero(), start);
                Ok(input)
            }
            ProgramKind::Seq(a, b) => {
                let mid = self.exec(a, input, state, fixes)?;
                self.exec(b, mid, state, fixes)
            }
            ProgramKind::If(c, t, e) => {
                let verdict = self.exec(c, input.clone(), state, fixes)?;
                match verdict {
                    Value::Bool(true) => self.exec(t, input, state, fixes),
                    Value::Bool(false) => self.exec(e, input, state, fixes),
                    other => Err(RunError::NonBooleanCondition { found: other.type_name() }),
                }
            }
            ProgramKind::Par(a, b) => self.par(a, b, input, state, fixes),
            ProgramKind::Fix(name, body) => {
                fixes.push(FixFrame { name, body, depth: 1 });
                record(state, &format!("fix:{name}"), &input, &input, CostLedger::zero(), Instant::now());
                let r = self.exec(body, input, state, fixes);
                fixes.pop();
                r
            }
            ProgramKind::Rec(name) => self.recurse(name, input, state, fixes),
            ProgramKind::BaseProc(name) => {
                if fixes.iter().any(|f| f.name == name) {
                    self.recurse(name, input, state, fixes)
                } else {
                    self.call_base(name, input, state)
                }
            }
        }
    }

    fn eval(&self, e: &crate::lang::Expr, input: &Value, span: Span) -> Result<Value, RunError> {
        let mut limits = self.limits;
        if limits.deadline.is_none() {
            limits.deadline = Some(Instant::now() + std::time::Duration::from_secs(10));
        }
        eval_expr_with(e, input, &Env::new(), limits).map_err(|source| RunError::Expr { source, span })
    }

    fn recurse<'p>(
        &self,
        name: &str,
        input: Value,
        state: &mut RunState,
        fixes: &mut Vec<FixFrame<'p>>,
    ) -> Result<Value, RunError> {
        let Some(i) = fixes.iter().rposition(|f| f.name == name) else {
            return Err(RunError::UnboundRecursion(name.to_owned()));
        };
        if fixes[i].depth >= self.budget.max_depth {
            return Err(RunError::FixBudgetExhausted {
                name: name.to_owned(),
                max_depth: self.budget.max_depth,
            });
        }
        fixes[i].depth += 1;
        record(state, &format!("fix:{name}"), &input, &input, CostLedger::zero(), Instant::now());
        // The body sees only the binders in scope where it was defined.
        let inner = fixes.split_off(i + 1);
        let body = fixes[i].body;
        let r = self.exec(body, input, state, fixes);
        fixes.truncate(i + 1);
        fixes.extend(inner);
        fixes[i].depth -= 1;
        r
    }

    fn par<'p>(
        &self,
        a: &'p Program,
        b: &'p Program,
        input: Value,
        state: &mut RunState,
        fixes: &mut Vec<FixFrame<'p>>,
    ) -> Result<Value, RunError> {
        let start = Instant::now();
        let mut left = state.fork('L');
        let mut right = state.fork('R');
        let (mut lf, mut rf) = (fixes.clone(), fixes.clone());
        let (lr, rr) = if self.parallel {
            rayon::join(
                || self.exec(a, input.clone(), &mut left, &mut lf),
                || self.exec(b, input.clone(), &mut right, &mut rf),
            )
        } else {
            let lr = self.exec(a, input.clone(), &mut left, &mut lf);
            // A failed left side stops the fork before the right side starts.
            let rr = if lr.is_ok() { self.exec(b, input.clone(), &mut right, &mut rf) } else { Ok(Value::Null) };
            (lr, rr)
        };

        let mut cost = left.cost.clone();
        cost.absorb(&right.cost);
        let left_len = left.trace.len();
        let mut children = std::mem::take(&mut left.trace);
        children.append(&mut right.trace);

        let outcome = match (lr, rr) {
            (Ok(l), Ok(r)) => Ok(Value::List(vec![l, r])),
            (Err(e), _) | (_, Err(e)) => Err(e),
        };
        let out_for_digest = outcome.as_ref().map(Clone::clone).unwrap_or(Value::Null);
        state.cost.absorb(&cost);
        state.trace.push(TraceEvent {
            process_name: PAR_EVENT.into(),
            input_digest: digest(&input),
            output_digest: digest(&out_for_digest),
            cost,
            wall_clock: start.elapsed(),
            children,
            left_len,
            input: state.retain_payloads.then(|| input.render_plain()),
            output: state.retain_payloads.then(|| out_for_digest.render_plain()),
        });
        let out = outcome?;
        state.user_state = Value::Map(
            [("left".to_owned(), left.user_state), ("right".to_owned(), right.user_state)]
                .into_iter()
                .collect(),
        );
        Ok(out)
    }

    fn call_base(&self, name: &str, input: Value, state: &mut RunState) -> Result<Value, RunError> {
        let entry = self.registry.get(name).ok_or_else(|| RunError::UnknownProcess(name.to_owned()))?;
        let start = Instant::now();
        let seed = state.call_seed();
        let mut call = ProcessCall::new(state, seed, name);
        let result = entry.handler.call(&input, &mut call);
        let mut delta = call.into_cost();
        if !entry.flat_cost.is_zero() {
            delta.record(name, 0, 0, entry.flat_cost);
        }
        match result {
            Ok(out) => {
                record(state, name, &input, &out, delta, start);
                Ok(out)
            }
            Err(source) => {
                let shown = Value::text(format!("error: {source}"));
                record(state, name, &input, &shown, delta, start);
                Err(RunError::Process { process: name.to_owned(), source })
            }
        }
    }
}

fn record(state: &mut RunState, name: &str, input: &Value, output: &Value, cost: CostLedger, start: Instant) {
    state.cost.absorb(&cost);
    let retain = state.retain_payloads;
    state.trace.push(TraceEvent {
        process_name: name.to_owned(),
        input_digest: digest(input),
        output_digest: digest(output),
        cost,
        wall_clock: start.elapsed(),
        children: Vec::new(),
        left_len: 0,
        input: retain.then(|| input.render_plain()),
        output: retain.then(|| output.render_plain()),
    });
}
