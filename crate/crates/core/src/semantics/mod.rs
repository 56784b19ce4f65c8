//! Execution of strategy programs: state, traces, costs and the
//! interpreter.

pub mod cost;
pub mod expr;
pub mod interp;
pub mod state;
pub mod trace;

pub use cost::{cost_of_trace, CostLedger, Usd};
pub use expr::{eval_expr, eval_expr_with, Env, EvalError, EvalLimits, RtValue};
pub use interp::{run, FixBudget, Interpreter, RunError, RunFailure, DEFAULT_FIX_DEPTH, MAX_FIX_DEPTH};
pub use state::{ChatMessage, ExecEnv, Role, RunState};
pub use trace::{digest, read_jsonl, replay_trace, to_jsonl, write_jsonl, ReplayError, TraceEvent, TraceReadError};
